//! Bob's gate-timing calibration and the manipulation that turns it into a
//! large detection-efficiency mismatch.
//!
//! Bob scans his gate across a broad calibration pulse and locks every
//! detector to the gate delay with the most clicks. The click profile of a
//! detector is the overlap of the pulse intensity with its efficiency
//! envelope, which for Gaussian shapes has a closed form in `erfc`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::detectors::SpadConfig;

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub pulse_fwhm_ns: f64,
    /// Mean photon number of one calibration pulse.
    pub pulse_mean_photons: f64,
    pub scan_half_range_ns: f64,
    pub scan_step_ns: f64,
    pub pulses_per_step: u64,
    /// Timing noise of each detector's calibration reading.
    pub jitter_std_ns: f64,
    /// Probability that one detector of an undisturbed scan locks far off.
    pub tail_prob: f64,
    /// Size of such an outlier in units of the efficiency FWHM.
    pub tail_min_fwhm: f64,
    pub tail_max_fwhm: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pulse_fwhm_ns: 16.0,
            pulse_mean_photons: 40.0,
            scan_half_range_ns: 4.0,
            scan_step_ns: 0.01,
            pulses_per_step: 10_000_000_000,
            jitter_std_ns: 0.05,
            tail_prob: 0.02,
            tail_min_fwhm: 2.0,
            tail_max_fwhm: 3.0,
        }
    }
}

impl CalibrationConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = [
            ("pulse_fwhm_ns", self.pulse_fwhm_ns),
            ("pulse_mean_photons", self.pulse_mean_photons),
            ("scan_half_range_ns", self.scan_half_range_ns),
            ("scan_step_ns", self.scan_step_ns),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("calibration.{name} must be > 0, got {x}"));
            }
        }
        if self.scan_step_ns > 0.0 && self.scan_half_range_ns / self.scan_step_ns > 1e5 {
            v.push("calibration.scan_step_ns is too fine for the scan range".into());
        }
        if self.pulses_per_step == 0 {
            v.push("calibration.pulses_per_step must be >= 1".into());
        }
        if !(self.jitter_std_ns >= 0.0) {
            v.push("calibration.jitter_std_ns must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.tail_prob) {
            v.push("calibration.tail_prob must be in [0, 1]".into());
        }
        if !(self.tail_min_fwhm >= 0.0 && self.tail_max_fwhm >= self.tail_min_fwhm) {
            v.push("calibration.tail range must satisfy 0 <= tail_min_fwhm <= tail_max_fwhm".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Gate delay locked by each detector.
    pub gate_centers_ns: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    /// `t1 - t0`.
    pub delta_tau: f64,
    pub runs: u32,
}

/// Light reaching one detector per calibration pulse, as weights on the
/// early and late halves of the pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HalfWeights {
    early: f64,
    late: f64,
}

const FULL: HalfWeights = HalfWeights { early: 1.0, late: 1.0 };

/// Per-pulse weights for a detector reading `bit`. With the random-basis
/// patch Bob draws one of four analyzer settings per pulse: as intended,
/// swapped, or diagonal (half of each polarization).
fn weight_settings(bit: u8, hack: bool, random_basis: bool) -> Vec<HalfWeights> {
    let aimed = if !hack {
        FULL
    } else if bit == 1 {
        HalfWeights { early: 1.0, late: 0.0 }
    } else {
        HalfWeights { early: 0.0, late: 1.0 }
    };
    if !random_basis {
        return vec![aimed];
    }
    let swapped = HalfWeights {
        early: if hack { 1.0 - aimed.early } else { 0.0 },
        late: if hack { 1.0 - aimed.late } else { 0.0 },
    };
    let half =
        HalfWeights { early: 0.5 * (aimed.early + swapped.early), late: 0.5 * (aimed.late + swapped.late) };
    vec![aimed, swapped, half, half]
}

/// Expected detected photons from the `t < 0` and `t >= 0` halves of a
/// Gaussian calibration pulse centered on 0, with the gate centered on `g`.
pub fn half_overlaps(g: f64, cfg: &CalibrationConfig, det: &SpadConfig) -> (f64, f64) {
    let a = FOUR_LN2 / (cfg.pulse_fwhm_ns * cfg.pulse_fwhm_ns);
    let b = FOUR_LN2 / (det.eta_fwhm_ns * det.eta_fwhm_ns);
    let k = a + b;
    let m = b * g / k;
    let amp = cfg.pulse_mean_photons
        * (a / std::f64::consts::PI).sqrt()
        * det.eta_peak
        * (-a * b / k * g * g).exp()
        * 0.5
        * (std::f64::consts::PI / k).sqrt();
    let sk = k.sqrt();
    (amp * erfc(m * sk), amp * erfc(-m * sk))
}

/// Mean click probability per pulse at gate delay `g`.
fn click_probability(g: f64, settings: &[HalfWeights], cfg: &CalibrationConfig, det: &SpadConfig) -> f64 {
    let (early, late) = half_overlaps(g, cfg, det);
    let total: f64 = settings
        .iter()
        .map(|w| 1.0 - (1.0 - det.dark_prob) * (-(w.early * early + w.late * late)).exp())
        .sum();
    (total / settings.len() as f64).clamp(0.0, 1.0)
}

/// Scan one detector and return the delay with the most clicks.
fn scan<R: Rng + ?Sized>(
    settings: &[HalfWeights],
    cfg: &CalibrationConfig,
    det: &SpadConfig,
    rng: &mut R,
) -> f64 {
    let steps = (2.0 * cfg.scan_half_range_ns / cfg.scan_step_ns).round() as i64;
    let mut best = (0u64, -cfg.scan_half_range_ns);
    for i in 0..=steps {
        let g = -cfg.scan_half_range_ns + i as f64 * cfg.scan_step_ns;
        let p = click_probability(g, settings, cfg, det);
        let clicks =
            Binomial::new(cfg.pulses_per_step, p).expect("probability clamped to [0, 1]").sample(rng);
        if clicks > best.0 {
            best = (clicks, g);
        }
    }
    best.1
}

/// Run the gate-timing calibration for every detector.
///
/// `hack` lets Eve send the early half of each calibration pulse towards the
/// bit-1 detectors and the late half towards the bit-0 detectors by
/// polarization. `random_basis` randomizes Bob's analyzer during the scan,
/// which leaves Eve unable to address detectors.
pub fn calibrate_detectors<R: Rng + ?Sized>(
    detectors: &[SpadConfig],
    cfg: &CalibrationConfig,
    hack: bool,
    random_basis: bool,
    rng: &mut R,
) -> CalibrationResult {
    let jitter = Normal::new(0.0, cfg.jitter_std_ns).expect("validated std");
    let mut centers: Vec<f64> = detectors
        .iter()
        .enumerate()
        .map(|(j, det)| {
            let settings = weight_settings((j % 2) as u8, hack, random_basis);
            scan(&settings, cfg, det, rng) + jitter.sample(rng)
        })
        .collect();
    // Eve's bright halves dominate the profile, so outliers only show up when
    // the profile is the undisturbed pulse.
    let eve_controls = hack && !random_basis;
    let u: f64 = rng.random();
    if !eve_controls && u < cfg.tail_prob && !centers.is_empty() {
        let j = rng.random_range(0..centers.len());
        let size = rng.random_range(cfg.tail_min_fwhm..=cfg.tail_max_fwhm) * detectors[j].eta_fwhm_ns;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        centers[j] += sign * size;
    }
    let t0 = centers.first().copied().unwrap_or(0.0);
    let t1 = centers.get(1).copied().unwrap_or(t0);
    CalibrationResult { gate_centers_ns: centers, t0, t1, delta_tau: t1 - t0, runs: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    fn dets() -> Vec<SpadConfig> {
        vec![SpadConfig::clavis2_like(); 2]
    }

    #[test]
    fn halves_sum_to_full_overlap_and_mirror() {
        let cfg = CalibrationConfig::default();
        let d = SpadConfig::clavis2_like();
        for g in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            let (e, l) = half_overlaps(g, &cfg, &d);
            let (e2, l2) = half_overlaps(-g, &cfg, &d);
            assert!((e - l2).abs() < 1e-12 && (l - e2).abs() < 1e-12);
            assert!(e >= 0.0 && l >= 0.0);
        }
        let (e, l) = half_overlaps(0.0, &cfg, &d);
        assert!((e - l).abs() < 1e-15);
        // full overlap of two Gaussians
        let a = FOUR_LN2 / 256.0;
        let b = FOUR_LN2 / 0.64;
        let full = 40.0 * 0.1 * (a / (a + b)).sqrt();
        assert!((e + l - full).abs() < 1e-12);
    }

    #[test]
    fn honest_scan_locks_near_zero() {
        let cfg = CalibrationConfig { jitter_std_ns: 0.0, tail_prob: 0.0, ..Default::default() };
        let mut rng = RngStreams::new(4).stream("cal");
        let r = calibrate_detectors(&dets(), &cfg, false, false, &mut rng);
        assert!(r.t0.abs() < 0.5 && r.t1.abs() < 0.5, "{r:?}");
        assert_eq!(r.delta_tau, r.t1 - r.t0);
    }

    #[test]
    fn hack_splits_detectors_apart() {
        let cfg = CalibrationConfig::default();
        let mut rng = RngStreams::new(5).stream("cal");
        let r = calibrate_detectors(&dets(), &cfg, true, false, &mut rng);
        assert!(r.t1 < 0.0 && r.t0 > 0.0);
        assert!(r.delta_tau.abs() > 2.0 * 0.8, "{r:?}");
    }

    #[test]
    fn countermeasure_settings_average_to_half_each() {
        for bit in [0u8, 1] {
            let s = weight_settings(bit, true, true);
            let e: f64 = s.iter().map(|w| w.early).sum::<f64>() / 4.0;
            let l: f64 = s.iter().map(|w| w.late).sum::<f64>() / 4.0;
            assert_eq!((e, l), (0.5, 0.5));
        }
    }
}
