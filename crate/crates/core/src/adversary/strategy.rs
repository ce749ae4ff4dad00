use serde::{Deserialize, Serialize};

/// Eve's plan for a run. Each variant carries its own tunables; `None`
/// fields are derived from the system under attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackStrategy {
    #[default]
    None,
    InterceptResend(InterceptResendParams),
    FakedStateBlinding(BlindingParams),
    AfterGate(AfterGateParams),
    Superlinear(SuperlinearParams),
    TimeShift(TimeShiftParams),
    CalibrationHack,
    WavelengthIra(WavelengthParams),
    TrojanHorse(TrojanParams),
    LaserDamage(LaserDamageParams),
}

impl AttackStrategy {
    pub const NAMES: [&'static str; 10] = [
        "none",
        "intercept-resend",
        "faked-state-blinding",
        "after-gate",
        "superlinear",
        "time-shift",
        "calibration-hack",
        "wavelength-ira",
        "trojan-horse",
        "laser-damage",
    ];

    /// Canonical name, as used in configs and the audit matrix.
    pub fn name(&self) -> &'static str {
        let i = match self {
            Self::None => 0,
            Self::InterceptResend(_) => 1,
            Self::FakedStateBlinding(_) => 2,
            Self::AfterGate(_) => 3,
            Self::Superlinear(_) => 4,
            Self::TimeShift(_) => 5,
            Self::CalibrationHack => 6,
            Self::WavelengthIra(_) => 7,
            Self::TrojanHorse(_) => 8,
            Self::LaserDamage(_) => 9,
        };
        Self::NAMES[i]
    }

    /// Whether Eve manipulates Bob's timing calibration.
    pub fn induces_dem(&self) -> bool {
        match self {
            Self::CalibrationHack => true,
            Self::TimeShift(p) => p.induce_dem,
            Self::LaserDamage(p) => p.follow_up.as_ref().is_some_and(|f| f.induces_dem()),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterceptResendParams {
    pub fraction: f64,
    /// Mean photon number of Eve's resent pulses; rate-matched when absent.
    #[serde(default)]
    pub resend_mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlindingParams {
    pub cw_power_mw: f64,
    /// Photons in the bright trigger at Bob's entrance.
    pub trigger_photons: Option<f64>,
    pub trigger_offset_ns: f64,
}

impl Default for BlindingParams {
    fn default() -> Self {
        Self { cw_power_mw: 1.0, trigger_photons: None, trigger_offset_ns: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfterGateParams {
    pub trigger_photons: Option<f64>,
    /// Arrival after the latest gate closes.
    pub delay_after_gate_ns: f64,
    /// Dark-count multiplier in slots hit by a trigger.
    pub dark_inflation: f64,
}

impl Default for AfterGateParams {
    fn default() -> Self {
        Self { trigger_photons: None, delay_after_gate_ns: 1.0, dark_inflation: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuperlinearParams {
    pub mean_photons: f64,
    /// Arrival time of the faked state; defaults to 0.75 FWHM past the gate center.
    pub edge_offset_ns: Option<f64>,
}

impl Default for SuperlinearParams {
    fn default() -> Self {
        Self { mean_photons: 50.0, edge_offset_ns: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeShiftParams {
    /// Defaults to one efficiency FWHM.
    pub dt_delay_ns: Option<f64>,
    pub dt_advance_ns: Option<f64>,
    /// Eve's line is this many times more transparent than the channel.
    pub loss_compensation: f64,
    pub induce_dem: bool,
}

impl Default for TimeShiftParams {
    fn default() -> Self {
        Self { dt_delay_ns: None, dt_advance_ns: None, loss_compensation: 1.0, induce_dem: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavelengthParams {
    pub lambda0_nm: f64,
    pub lambda1_nm: f64,
    pub resend_mu: Option<f64>,
}

impl Default for WavelengthParams {
    fn default() -> Self {
        Self { lambda0_nm: 1290.0, lambda1_nm: 1470.0, resend_mu: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrojanParams {
    pub probe_mu: f64,
    pub probe_wavelength_nm: f64,
    /// Single-pass loss from Alice's entrance to her modulator and back.
    pub reflectance_db: f64,
    pub eve_detector_eta: f64,
}

impl Default for TrojanParams {
    fn default() -> Self {
        Self { probe_mu: 1e6, probe_wavelength_nm: 1550.0, reflectance_db: 40.0, eve_detector_eta: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserDamageParams {
    pub power_watts: f64,
    /// Detector indices hit; all when empty.
    #[serde(default)]
    pub targets: Vec<usize>,
    /// Also aim at Bob's watchdog to burn it out first.
    #[serde(default = "yes")]
    pub hit_watchdog: bool,
    #[serde(default)]
    pub follow_up: Option<Box<AttackStrategy>>,
}

fn yes() -> bool {
    true
}
