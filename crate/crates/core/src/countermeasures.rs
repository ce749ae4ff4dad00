//! Defenses attachable to Alice and Bob: watchdog monitors, bit-mapped
//! gating, isolator/filter stacks and randomized gate timing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optics::Pulse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WatchdogMode {
    /// A fixed coupler sends `tap_ratio` of every slot to the monitor.
    FixedTap,
    /// A switch sends the whole slot to the monitor with probability `p_monitor`.
    RandomRouting { p_monitor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WatchdogState {
    Alive,
    Destroyed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatchdogConfig {
    pub tap_ratio: f64,
    /// Monitored energy per slot, in photon-equivalents, that raises the alarm.
    pub alarm_threshold_photons: f64,
    pub mode: WatchdogMode,
    #[serde(default = "alive")]
    pub state: WatchdogState,
    /// Optical power that melts the monitor diode.
    #[serde(default = "default_watchdog_damage")]
    pub damage_threshold_watts: f64,
}

fn alive() -> WatchdogState {
    WatchdogState::Alive
}

fn default_watchdog_damage() -> f64 {
    1.0
}

impl WatchdogConfig {
    pub fn fixed_tap(tap_ratio: f64, alarm_threshold_photons: f64) -> Self {
        Self {
            tap_ratio,
            alarm_threshold_photons,
            mode: WatchdogMode::FixedTap,
            state: WatchdogState::Alive,
            damage_threshold_watts: default_watchdog_damage(),
        }
    }

    pub fn random_routing(p_monitor: f64, alarm_threshold_photons: f64) -> Self {
        Self {
            mode: WatchdogMode::RandomRouting { p_monitor },
            ..Self::fixed_tap(0.0, alarm_threshold_photons)
        }
    }

    /// Fraction of honest signal that still reaches the receiver on average.
    pub fn signal_transmission(&self) -> f64 {
        match self.mode {
            WatchdogMode::FixedTap => 1.0 - self.tap_ratio,
            WatchdogMode::RandomRouting { p_monitor } => 1.0 - p_monitor,
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..1.0).contains(&self.tap_ratio) {
            v.push(format!("{prefix}.tap_ratio must be in [0, 1), got {}", self.tap_ratio));
        }
        if let WatchdogMode::RandomRouting { p_monitor } = self.mode {
            if !(p_monitor > 0.0 && p_monitor < 1.0) {
                v.push(format!("{prefix}.p_monitor must be in (0, 1), got {p_monitor}"));
            }
        }
        if self.mode == WatchdogMode::FixedTap && !(self.tap_ratio > 0.0) {
            v.push(format!("{prefix}.tap_ratio must be > 0 for a fixed tap"));
        }
        if !(self.alarm_threshold_photons > 0.0) {
            v.push(format!("{prefix}.alarm_threshold_photons must be > 0"));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatchOutcome {
    pub alarm: bool,
    pub monitored_photons: f64,
    pub forwarded: Vec<Pulse>,
}

/// Run one slot's worth of incoming light past the watchdog.
pub fn watchdog_check_slot<R: Rng + ?Sized>(
    incoming: Vec<Pulse>,
    config: &WatchdogConfig,
    slot_period_ns: f64,
    rng: &mut R,
) -> WatchOutcome {
    // one draw per slot whatever the mode, so stream positions stay aligned
    let u: f64 = rng.random();
    if config.state == WatchdogState::Destroyed {
        return WatchOutcome { alarm: false, monitored_photons: 0.0, forwarded: incoming };
    }
    let energy: f64 = incoming.iter().map(|p| p.energy_photons(slot_period_ns)).sum();
    let (monitored, forwarded) = match config.mode {
        WatchdogMode::FixedTap => {
            let keep = 1.0 - config.tap_ratio;
            let fwd: Vec<Pulse> = incoming.into_iter().map(|p| p.attenuated(keep)).collect();
            let fwd_energy: f64 = fwd.iter().map(|p| p.energy_photons(slot_period_ns)).sum();
            (energy - fwd_energy, fwd)
        }
        WatchdogMode::RandomRouting { p_monitor } => {
            if u < p_monitor {
                (energy, Vec::new())
            } else {
                (0.0, incoming)
            }
        }
    };
    WatchOutcome {
        alarm: monitored >= config.alarm_threshold_photons,
        monitored_photons: monitored,
        forwarded,
    }
}

/// Single-pulse form of [`watchdog_check_slot`]. `forwarded` is `None` when
/// the pulse was consumed by the monitor.
pub fn watchdog_check<R: Rng + ?Sized>(
    incoming: &Pulse,
    config: &WatchdogConfig,
    slot_period_ns: f64,
    rng: &mut R,
) -> (bool, Option<Pulse>, f64) {
    let out = watchdog_check_slot(vec![incoming.clone()], config, slot_period_ns, rng);
    (out.alarm, out.forwarded.into_iter().next(), out.monitored_photons)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitMappedGating {
    /// Width of the central window; defaults to the efficiency FWHM.
    pub window_ns: Option<f64>,
}

/// Added error probability on the recorded bit for a click `click_offset` ns
/// from the gate center: zero in the central window, one half outside it.
pub fn bit_mapped_gate_error(click_offset: f64, window_ns: f64) -> f64 {
    if click_offset.abs() <= window_ns / 2.0 {
        0.0
    } else {
        0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGateTiming {
    /// Gate centers jitter uniformly over `[-window_ns / 2, window_ns / 2]`.
    pub window_ns: f64,
}

impl RandomGateTiming {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (rng.random::<f64>() - 0.5) * self.window_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandpassFilter {
    pub pass_lo_nm: f64,
    pub pass_hi_nm: f64,
    pub stopband_db: f64,
    #[serde(default)]
    pub passband_loss_db: f64,
}

impl BandpassFilter {
    pub fn single_pass_db(&self, wavelength_nm: f64) -> f64 {
        if (self.pass_lo_nm..=self.pass_hi_nm).contains(&wavelength_nm) {
            self.passband_loss_db
        } else {
            self.stopband_db
        }
    }
}

/// Single-pass isolator extinction versus wavelength, optionally followed by
/// a band-pass filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatorCurve {
    pub design_wavelength_nm: f64,
    /// `(wavelength_nm, extinction_db)`, increasing wavelength. Held constant
    /// beyond the end points.
    pub extinction_db: Vec<(f64, f64)>,
    #[serde(default)]
    pub filter: Option<BandpassFilter>,
}

impl IsolatorCurve {
    /// 30 dB at 1550 nm falling to 3 dB a hundred nanometres away. The
    /// off-band shape is synthetic.
    pub fn telecom_default() -> Self {
        Self {
            design_wavelength_nm: 1550.0,
            extinction_db: vec![
                (1100.0, 3.0),
                (1450.0, 3.0),
                (1500.0, 25.0),
                (1550.0, 30.0),
                (1600.0, 25.0),
                (1650.0, 3.0),
                (2000.0, 3.0),
            ],
            filter: None,
        }
    }

    pub fn with_filter(mut self, filter: BandpassFilter) -> Self {
        self.filter = Some(filter);
        self
    }

    pub fn from_table(design_wavelength_nm: f64, text: &str) -> Result<Self, String> {
        let curve = Self {
            design_wavelength_nm,
            extinction_db: crate::endpoints::parse_two_column(text)?,
            filter: None,
        };
        let v = curve.violations("isolator");
        if v.is_empty() {
            Ok(curve)
        } else {
            Err(v.join("; "))
        }
    }

    pub fn extinction_at(&self, wavelength_nm: f64) -> f64 {
        let pts = &self.extinction_db;
        if wavelength_nm <= pts[0].0 {
            return pts[0].1;
        }
        if wavelength_nm >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let idx = pts.partition_point(|p| p.0 <= wavelength_nm);
        let (l0, e0) = pts[idx - 1];
        let (l1, e1) = pts[idx];
        e0 + (wavelength_nm - l0) / (l1 - l0) * (e1 - e0)
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if self.extinction_db.is_empty() {
            v.push(format!("{prefix}.extinction_db must not be empty"));
        }
        if self.extinction_db.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            v.push(format!("{prefix}.extinction_db wavelengths must increase"));
        }
        if self.extinction_db.iter().any(|p| !(p.1 >= 0.0)) {
            v.push(format!("{prefix}.extinction_db must be >= 0 dB"));
        }
        if let Some(f) = &self.filter {
            if !(f.pass_hi_nm > f.pass_lo_nm) || !(f.stopband_db >= 0.0) || !(f.passband_loss_db >= 0.0) {
                v.push(format!("{prefix}.filter is malformed"));
            }
        }
        v
    }
}

/// Linear transmission for light that crosses the isolator (and filter) twice.
pub fn isolator_round_trip(wavelength_nm: f64, curve: &IsolatorCurve) -> f64 {
    let filter_db = curve.filter.as_ref().map_or(0.0, |f| f.single_pass_db(wavelength_nm));
    10f64.powf(-2.0 * (curve.extinction_at(wavelength_nm) + filter_db) / 10.0)
}

/// Declared defenses for one scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountermeasureStack {
    pub bob_watchdog: Option<WatchdogConfig>,
    pub alice_watchdog: Option<WatchdogConfig>,
    pub alice_isolator: Option<IsolatorCurve>,
    pub bit_mapped_gating: Option<BitMappedGating>,
    pub random_gate_timing: Option<RandomGateTiming>,
    pub random_basis_calibration: bool,
}

impl CountermeasureStack {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(w) = &self.bob_watchdog {
            v.extend(w.violations("countermeasures.bob_watchdog"));
        }
        if let Some(w) = &self.alice_watchdog {
            v.extend(w.violations("countermeasures.alice_watchdog"));
        }
        if let Some(i) = &self.alice_isolator {
            v.extend(i.violations("countermeasures.alice_isolator"));
        }
        if let Some(g) = &self.random_gate_timing {
            if !(g.window_ns >= 0.0) {
                v.push("countermeasures.random_gate_timing.window_ns must be >= 0".into());
            }
        }
        if let Some(BitMappedGating { window_ns: Some(w) }) = &self.bit_mapped_gating {
            if !(*w > 0.0) {
                v.push("countermeasures.bit_mapped_gating.window_ns must be > 0".into());
            }
        }
        v
    }
}
