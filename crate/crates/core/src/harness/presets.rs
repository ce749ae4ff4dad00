//! Built-in scenarios, stored as config documents so `presets show` prints
//! exactly what a user would write.

use super::{ConfigError, ScenarioConfig};
use crate::detectors::SpadConfig;

pub fn detector(name: &str) -> Option<SpadConfig> {
    match name {
        "clavis2-like" => Some(SpadConfig::clavis2_like()),
        "ideal" => Some(SpadConfig::ideal()),
        _ => None,
    }
}

pub const DETECTOR_PRESETS: [&str; 2] = ["clavis2-like", "ideal"];

const IDEAL: &str = r#"
name = "ideal"
slots = 200000
sample_fraction = 0.5
detectors = ["ideal", "ideal"]

[alice]
mu = 0.5

[channel]
transmittance = 1.0
"#;

const IDEAL_IRA: &str = r#"
preset = "ideal"
name = "ideal-ira"

[attack]
kind = "intercept-resend"
fraction = 1.0
"#;

const IDEAL_IRA_FRACTIONAL: &str = r#"
preset = "ideal"
name = "ideal-ira-fractional"

[attack]
kind = "intercept-resend"
fraction = 0.44
"#;

const BASELINE: &str = r#"
name = "baseline"
slots = 100000
sample_fraction = 0.1
detectors = ["clavis2-like", "clavis2-like"]

[alice]
mu = 0.5
misalignment_deg = 1.0

[channel]
transmittance = 0.25
"#;

const NOISELESS: &str = r#"
name = "noiseless"
slots = 100000
sample_fraction = 0.2
detectors = ["ideal", "ideal"]

[alice]
mu = 0.5

[channel]
transmittance = 0.1
"#;

const BLINDING: &str = r#"
preset = "noiseless"
name = "blinding"

[attack]
kind = "faked-state-blinding"
cw_power_mw = 1.0
"#;

const BLINDING_WATCHDOG: &str = r#"
preset = "blinding"
name = "blinding-watchdog"

[countermeasures.bob_watchdog]
tap_ratio = 0.01
alarm_threshold_photons = 1e4
mode = { kind = "fixed-tap" }
"#;

const AFTER_GATE: &str = r#"
preset = "baseline"
name = "after-gate"

[attack]
kind = "after-gate"
delay_after_gate_ns = 1.0
dark_inflation = 1.0
"#;

const SUPERLINEAR: &str = r#"
preset = "baseline"
name = "superlinear"

[attack]
kind = "superlinear"
mean_photons = 50.0
"#;

const SUPERLINEAR_BMG: &str = r#"
preset = "superlinear"
name = "superlinear-bmg"

[countermeasures.bit_mapped_gating]
"#;

const WAVELENGTH: &str = r#"
name = "wavelength"
slots = 1000000
sample_fraction = 0.5
detectors = [{ dark_prob = 0.0 }, { dark_prob = 0.0 }, { dark_prob = 0.0 }, { dark_prob = 0.0 }]

[alice]
mu = 0.5

[channel]
transmittance = 0.5

[bob]
scheme = "passive-four-detector"
bs_curve = { synthetic = true, points = [[1260.0, 0.003], [1290.0, 0.003], [1380.0, 0.5], [1470.0, 0.986], [1510.0, 0.75], [1550.0, 0.5], [1625.0, 0.5]] }

[attack]
kind = "wavelength-ira"
lambda0_nm = 1290.0
lambda1_nm = 1470.0
"#;

const TIME_SHIFT_DEM: &str = r#"
preset = "baseline"
name = "time-shift-dem"
detectors = [{ gate_center_ns = 0.8 }, { gate_center_ns = -0.8 }]

[attack]
kind = "time-shift"
loss_compensation = 2.0
"#;

const CALIBRATION_HACK: &str = r#"
preset = "baseline"
name = "calibration-hack"

[calibration]

[attack]
kind = "calibration-hack"
"#;

const TIME_SHIFT_HONEST: &str = r#"
preset = "baseline"
name = "time-shift-honest"
slots = 20000

[calibration]

[attack]
kind = "time-shift"
loss_compensation = 2.0
induce_dem = false
"#;

const TIME_SHIFT_HACKED: &str = r#"
preset = "time-shift-honest"
name = "time-shift-hacked"

[attack]
kind = "time-shift"
loss_compensation = 2.0
induce_dem = true
"#;

const TROJAN: &str = r#"
preset = "baseline"
name = "trojan"

[attack]
kind = "trojan-horse"
probe_mu = 1e6
probe_wavelength_nm = 1300.0
reflectance_db = 40.0
eve_detector_eta = 0.2
"#;

const TROJAN_ISOLATOR: &str = r#"
preset = "trojan"
name = "trojan-isolator"

[countermeasures.alice_isolator]
design_wavelength_nm = 1550.0
extinction_db = [[1100.0, 3.0], [1450.0, 3.0], [1500.0, 25.0], [1550.0, 30.0], [1600.0, 25.0], [1650.0, 3.0], [2000.0, 3.0]]
filter = { pass_lo_nm = 1540.0, pass_hi_nm = 1560.0, stopband_db = 60.0 }
"#;

const LASER_DAMAGE: &str = r#"
preset = "baseline"
name = "laser-damage"

[countermeasures.bob_watchdog]
tap_ratio = 0.01
alarm_threshold_photons = 1e4
mode = { kind = "fixed-tap" }
damage_threshold_watts = 1.0

[attack]
kind = "laser-damage"
power_watts = 2.0
hit_watchdog = true
follow_up = { kind = "faked-state-blinding", cw_power_mw = 0.0 }
"#;

const AUDIT: &str = r#"
name = "audit"
slots = 50000
sample_fraction = 0.2
detectors = ["clavis2-like", "clavis2-like", "clavis2-like", "clavis2-like"]

[alice]
mu = 0.5

[channel]
transmittance = 0.5

[bob]
scheme = "passive-four-detector"
bs_curve = { synthetic = true, points = [[1260.0, 0.003], [1290.0, 0.003], [1380.0, 0.5], [1470.0, 0.986], [1510.0, 0.75], [1550.0, 0.5], [1625.0, 0.5]] }

[calibration]

[audit]
runs_per_cell = 20

[[audit.attacks]]
attack = { kind = "none" }

[[audit.attacks]]
attack = { kind = "intercept-resend", fraction = 1.0 }

[[audit.attacks]]
attack = { kind = "faked-state-blinding", cw_power_mw = 1.0 }

[[audit.attacks]]
attack = { kind = "after-gate" }

[[audit.attacks]]
attack = { kind = "superlinear", mean_photons = 50.0 }

[[audit.attacks]]
attack = { kind = "time-shift", loss_compensation = 2.0, induce_dem = true }

[[audit.attacks]]
attack = { kind = "calibration-hack" }

[[audit.attacks]]
attack = { kind = "wavelength-ira" }

[[audit.attacks]]
attack = { kind = "trojan-horse", probe_wavelength_nm = 1300.0 }

[[audit.attacks]]
attack = { kind = "laser-damage", power_watts = 2.0, follow_up = { kind = "faked-state-blinding", cw_power_mw = 0.0 } }

[[audit.stacks]]
name = "none"

[[audit.stacks]]
name = "watchdog-fixed-tap"
countermeasures = { bob_watchdog = { tap_ratio = 0.01, alarm_threshold_photons = 1e4, mode = { kind = "fixed-tap" } } }

[[audit.stacks]]
name = "watchdog-random-routing"
countermeasures = { bob_watchdog = { tap_ratio = 0.0, alarm_threshold_photons = 1e4, mode = { kind = "random-routing", p_monitor = 0.05 } } }

[[audit.stacks]]
name = "bit-mapped-gating"
countermeasures = { bit_mapped_gating = {} }

[[audit.stacks]]
name = "random-gate-timing"
countermeasures = { random_gate_timing = { window_ns = 1.6 } }

[[audit.stacks]]
name = "isolator-filter"
countermeasures = { alice_isolator = { design_wavelength_nm = 1550.0, extinction_db = [[1100.0, 3.0], [1450.0, 3.0], [1500.0, 25.0], [1550.0, 30.0], [1600.0, 25.0], [1650.0, 3.0], [2000.0, 3.0]], filter = { pass_lo_nm = 1540.0, pass_hi_nm = 1560.0, stopband_db = 60.0 } } }

[[audit.stacks]]
name = "random-basis-calibration"
countermeasures = { random_basis_calibration = true }
"#;

const SCENARIOS: [(&str, &str); 17] = [
    ("ideal", IDEAL),
    ("ideal-ira", IDEAL_IRA),
    ("ideal-ira-fractional", IDEAL_IRA_FRACTIONAL),
    ("baseline", BASELINE),
    ("noiseless", NOISELESS),
    ("blinding", BLINDING),
    ("blinding-watchdog", BLINDING_WATCHDOG),
    ("after-gate", AFTER_GATE),
    ("superlinear", SUPERLINEAR),
    ("superlinear-bmg", SUPERLINEAR_BMG),
    ("wavelength", WAVELENGTH),
    ("time-shift-dem", TIME_SHIFT_DEM),
    ("calibration-hack", CALIBRATION_HACK),
    ("time-shift-honest", TIME_SHIFT_HONEST),
    ("time-shift-hacked", TIME_SHIFT_HACKED),
    ("trojan", TROJAN),
    ("trojan-isolator", TROJAN_ISOLATOR),
];

const EXTRA: [(&str, &str); 2] = [("laser-damage", LASER_DAMAGE), ("audit", AUDIT)];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().chain(EXTRA.iter()).map(|(n, _)| *n).collect()
}

pub fn scenario_toml(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().chain(EXTRA.iter()).find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn scenario(name: &str) -> Result<ScenarioConfig, ConfigError> {
    if scenario_toml(name).is_none() {
        return Err(ConfigError::UnknownPreset(name.to_string()));
    }
    ScenarioConfig::from_toml_str(&format!("preset = \"{name}\""))
}
