//! Gated single-photon avalanche diode.
//!
//! The bias electronics are abstracted into [`SpadMode`]: in Geiger mode the
//! diode answers single photons with the efficiency envelope of its gate; out
//! of Geiger mode it is a plain photodiode whose comparator fires only for
//! pulses above `linear_threshold_photons`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("superlinear response is defined on the falling edge only (t={t} ns, gate center={center} ns)")]
    NotFallingEdge { t: f64, center: f64 },
    #[error("negative optical input {0}")]
    NegativeInput(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DamageEffect {
    /// Permanently scaled-down efficiency and dark-count level.
    ReducedSensitivity {
        eta_scale: f64,
        dark_scale: f64,
    },
    PermanentBlinding,
    /// Melted interconnects; the diode is an open circuit.
    OpenCircuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageThreshold {
    pub power_watts: f64,
    pub effect: DamageEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpadConfig {
    pub eta_peak: f64,
    /// Dark-click probability per gate.
    pub dark_prob: f64,
    pub gate_center_ns: f64,
    pub gate_width_ns: f64,
    /// FWHM of the Gaussian efficiency envelope.
    pub eta_fwhm_ns: f64,
    pub linear_threshold_photons: f64,
    pub blinding_power_mw: f64,
    pub superlinearity_exponent: f64,
    /// Pulses at least this bright on the falling edge follow the superlinear response.
    pub superlinear_min_photons: f64,
    /// Ascending by power.
    pub damage_thresholds: Vec<DamageThreshold>,
}

impl Default for SpadConfig {
    fn default() -> Self {
        Self::clavis2_like()
    }
}

impl SpadConfig {
    /// Gated InGaAs SPAD resembling a commercial 5 MHz research system:
    /// 10 % peak efficiency, 1e-5 dark clicks per gate, a 2.5 ns gate.
    /// Thresholds for blinding, linear-mode clicks and damage are synthetic.
    pub fn clavis2_like() -> Self {
        Self {
            eta_peak: 0.1,
            dark_prob: 1e-5,
            gate_center_ns: 0.0,
            gate_width_ns: 2.5,
            eta_fwhm_ns: 0.8,
            linear_threshold_photons: 1.0e6,
            blinding_power_mw: 0.05,
            superlinearity_exponent: 1.0,
            superlinear_min_photons: 10.0,
            damage_thresholds: vec![
                DamageThreshold {
                    power_watts: 0.5,
                    effect: DamageEffect::ReducedSensitivity { eta_scale: 0.4, dark_scale: 0.2 },
                },
                DamageThreshold { power_watts: 1.5, effect: DamageEffect::PermanentBlinding },
                DamageThreshold { power_watts: 3.0, effect: DamageEffect::OpenCircuit },
            ],
        }
    }

    /// Noiseless unit-efficiency detector for idealized reference runs.
    pub fn ideal() -> Self {
        Self { eta_peak: 1.0, dark_prob: 0.0, ..Self::clavis2_like() }
    }

    pub fn gate_end(&self) -> f64 {
        self.gate_center_ns + self.gate_width_ns / 2.0
    }

    pub fn gate_start(&self) -> f64 {
        self.gate_center_ns - self.gate_width_ns / 2.0
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.eta_peak > 0.0 && self.eta_peak <= 1.0) {
            v.push(format!("{prefix}.eta_peak must be in (0, 1], got {}", self.eta_peak));
        }
        if !(0.0..=1.0).contains(&self.dark_prob) {
            v.push(format!("{prefix}.dark_prob must be in [0, 1], got {}", self.dark_prob));
        }
        if !(self.eta_fwhm_ns > 0.0) {
            v.push(format!("{prefix}.eta_fwhm_ns must be > 0"));
        }
        if !(self.gate_width_ns > 0.0) {
            v.push(format!("{prefix}.gate_width_ns must be > 0"));
        }
        if !self.gate_center_ns.is_finite() {
            v.push(format!("{prefix}.gate_center_ns must be finite"));
        }
        if !(self.linear_threshold_photons > 0.0) {
            v.push(format!("{prefix}.linear_threshold_photons must be > 0"));
        }
        if !(self.blinding_power_mw > 0.0) {
            v.push(format!("{prefix}.blinding_power_mw must be > 0"));
        }
        if !(self.superlinearity_exponent >= 0.0) {
            v.push(format!("{prefix}.superlinearity_exponent must be >= 0"));
        }
        if self.damage_thresholds.windows(2).any(|w| !(w[1].power_watts > w[0].power_watts)) {
            v.push(format!("{prefix}.damage_thresholds must be ascending in power"));
        }
        for t in &self.damage_thresholds {
            if let DamageEffect::ReducedSensitivity { eta_scale, dark_scale } = t.effect {
                if !(0.0..=1.0).contains(&eta_scale) || !(dark_scale >= 0.0) {
                    v.push(format!("{prefix}.damage scale factors out of range"));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpadMode {
    Geiger,
    LinearBlinded,
    PermanentlyBlinded,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadState {
    pub mode: SpadMode,
    pub eta_scale: f64,
    pub dark_scale: f64,
}

impl Default for SpadState {
    fn default() -> Self {
        Self { mode: SpadMode::Geiger, eta_scale: 1.0, dark_scale: 1.0 }
    }
}

impl SpadState {
    pub fn is_geiger(&self) -> bool {
        self.mode == SpadMode::Geiger
    }
}

/// Single-photon efficiency for a photon arriving at `t` ns.
pub fn gate_efficiency(t: f64, config: &SpadConfig, state: &SpadState) -> f64 {
    if !state.is_geiger() {
        return 0.0;
    }
    envelope(t, config) * state.eta_scale
}

fn envelope(t: f64, config: &SpadConfig) -> f64 {
    let x = (t - config.gate_center_ns) / config.eta_fwhm_ns;
    config.eta_peak * (-4.0 * std::f64::consts::LN_2 * x * x).exp()
}

/// Click probability of a dim pulse on the falling edge of the gate.
///
/// The measured edge response sits above `1 - exp(-mu * eta(t))`; the
/// exponent model `(1 - exp(-mu * eta(t)))^(1 / (1 + k))` is a one-knob fit
/// that reduces to the Poissonian baseline at `k = 0`.
pub fn superlinear_click_probability(
    mu: f64,
    t: f64,
    config: &SpadConfig,
    state: &SpadState,
) -> Result<f64, DetectorError> {
    if !(t > config.gate_center_ns) {
        return Err(DetectorError::NotFallingEdge { t, center: config.gate_center_ns });
    }
    if mu < 0.0 {
        return Err(DetectorError::NegativeInput(mu));
    }
    let base = 1.0 - (-mu * gate_efficiency(t, config, state)).exp();
    Ok(base.powf(1.0 / (1.0 + config.superlinearity_exponent)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClickCause {
    Photon,
    Dark,
    LinearBright,
    AfterGate,
    Superlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickResult {
    pub clicked: bool,
    pub cause: Option<ClickCause>,
}

impl ClickResult {
    const NONE: ClickResult = ClickResult { clicked: false, cause: None };
}

/// Light landing on one detector in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortInput {
    pub mean_photons: f64,
    pub exact_photons: Option<u64>,
    /// ns in slot time; compared with the detector's `gate_center_ns`.
    pub arrival_offset: f64,
    /// Extra multiplier on the dark-click level for this slot only.
    pub extra_dark_scale: f64,
}

impl PortInput {
    pub fn new(mean_photons: f64, arrival_offset: f64) -> Self {
        Self { mean_photons, exact_photons: None, arrival_offset, extra_dark_scale: 1.0 }
    }

    pub fn dark_only() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Probability of a signal-induced click and its cause, ignoring dark counts.
pub fn signal_click_probability(
    input: &PortInput,
    config: &SpadConfig,
    state: &SpadState,
) -> (f64, ClickCause) {
    let photons = input.mean_photons;
    let over_threshold = photons >= config.linear_threshold_photons;
    match state.mode {
        SpadMode::Dead => (0.0, ClickCause::Photon),
        SpadMode::LinearBlinded | SpadMode::PermanentlyBlinded => {
            (f64::from(u8::from(over_threshold)), ClickCause::LinearBright)
        }
        SpadMode::Geiger => {
            let t = input.arrival_offset;
            let rel = t - config.gate_center_ns;
            let half = config.gate_width_ns / 2.0;
            if rel > half {
                (f64::from(u8::from(over_threshold)), ClickCause::AfterGate)
            } else if rel < -half {
                (0.0, ClickCause::Photon)
            } else {
                let eta = gate_efficiency(t, config, state);
                let on_edge = rel > config.eta_fwhm_ns / 2.0;
                if on_edge && photons >= config.superlinear_min_photons {
                    let p = superlinear_click_probability(photons, t, config, state)
                        .expect("falling edge checked");
                    (p, ClickCause::Superlinear)
                } else {
                    let p = match input.exact_photons {
                        Some(n) => 1.0 - (1.0 - eta).powf(n as f64),
                        None => 1.0 - (-photons * eta).exp(),
                    };
                    (p, ClickCause::Photon)
                }
            }
        }
    }
}

pub fn dark_click_probability(input: &PortInput, config: &SpadConfig, state: &SpadState) -> f64 {
    match state.mode {
        SpadMode::Geiger => (config.dark_prob * state.dark_scale * input.extra_dark_scale).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

/// Total click probability: signal and dark clicks as independent events.
pub fn click_probability(input: &PortInput, config: &SpadConfig, state: &SpadState) -> f64 {
    let (ps, _) = signal_click_probability(input, config, state);
    let pd = dark_click_probability(input, config, state);
    1.0 - (1.0 - ps) * (1.0 - pd)
}

/// Sample one gate. Always consumes exactly two uniforms from `rng`.
pub fn detect<R: Rng + ?Sized>(
    input: &PortInput,
    config: &SpadConfig,
    state: &SpadState,
    rng: &mut R,
) -> ClickResult {
    let u_signal: f64 = rng.random();
    let u_dark: f64 = rng.random();
    if state.mode == SpadMode::Dead {
        return ClickResult::NONE;
    }
    let (ps, cause) = signal_click_probability(input, config, state);
    if u_signal < ps {
        return ClickResult { clicked: true, cause: Some(cause) };
    }
    if u_dark < dark_click_probability(input, config, state) {
        return ClickResult { clicked: true, cause: Some(ClickCause::Dark) };
    }
    ClickResult::NONE
}

/// Bias response to CW light of `power_mw` on this diode.
pub fn apply_cw_illumination(power_mw: f64, config: &SpadConfig, state: &SpadState) -> SpadState {
    let mut next = *state;
    match state.mode {
        SpadMode::Geiger | SpadMode::LinearBlinded => {
            next.mode =
                if power_mw >= config.blinding_power_mw { SpadMode::LinearBlinded } else { SpadMode::Geiger };
        }
        SpadMode::PermanentlyBlinded | SpadMode::Dead => {}
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageReport {
    pub power_watts: f64,
    /// Highest tier reached, if any.
    pub effect: Option<DamageEffect>,
    pub before: SpadState,
    pub after: SpadState,
}

/// Irreversible optical damage. Every tier at or below `power_watts` applies,
/// so a higher power always subsumes the effects of a lower one.
pub fn apply_laser_damage(
    power_watts: f64,
    config: &SpadConfig,
    state: &SpadState,
) -> (SpadState, DamageReport) {
    let mut next = *state;
    let mut top = None;
    for tier in config.damage_thresholds.iter().filter(|t| t.power_watts <= power_watts) {
        top = Some(tier.effect);
        match tier.effect {
            DamageEffect::ReducedSensitivity { eta_scale, dark_scale } => {
                next.eta_scale = next.eta_scale.min(eta_scale);
                next.dark_scale = next.dark_scale.min(dark_scale);
            }
            DamageEffect::PermanentBlinding => {
                next.mode = next.mode.max(SpadMode::PermanentlyBlinded);
            }
            DamageEffect::OpenCircuit => next.mode = SpadMode::Dead,
        }
    }
    let report = DamageReport { power_watts, effect: top, before: *state, after: next };
    (next, report)
}
