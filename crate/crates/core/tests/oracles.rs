//! Reference values computed by hand from closed forms, frozen here so a
//! model change that moves them shows up as a failure.

use approx::assert_abs_diff_eq;
use qhack::adversary::{trojan_success, TrojanParams};
use qhack::countermeasures::{
    isolator_round_trip, watchdog_check_slot, BandpassFilter, IsolatorCurve, WatchdogConfig,
};
use qhack::detectors::{detect, superlinear_click_probability, PortInput, SpadConfig, SpadState};
use qhack::endpoints::{bob_route, BasisChoice, BeamSplitterCurve, BobConfig};
use qhack::harness::{audit, run_detailed, run_scenario, NamedAttack, NamedStack, ScenarioConfig};
use qhack::optics::{photon_pmf, sample_photon_number, Basis, Polarization, Pulse};
use qhack::postprocessing::{error_correct, sift, AbortReason, BitString};
use qhack::rng::RngStreams;

fn cfg(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(text).unwrap()
}

#[test]
fn vacuum_probability() {
    assert_abs_diff_eq!(photon_pmf(0.1, 0).unwrap(), 0.904837, epsilon = 1e-6);
    let mut rng = RngStreams::new(1).stream("alice");
    let n = 1_000_000;
    let mut zeros = 0u64;
    let mut total = 0u64;
    for _ in 0..n {
        let k = sample_photon_number(0.1, &mut rng).unwrap();
        zeros += u64::from(k == 0);
        total += sample_photon_number(0.5, &mut rng).unwrap();
    }
    assert_abs_diff_eq!(zeros as f64 / n as f64, 0.9048, epsilon = 1e-3);
    assert_abs_diff_eq!(total as f64 / n as f64, 0.5, epsilon = 3e-3);
}

#[test]
fn passive_routing_frequencies() {
    let bob = BobConfig::passive(BeamSplitterCurve::wavelength_dependent());
    let mut rng = RngStreams::new(2).stream("bob");
    let pol = Polarization::new(0.0).unwrap();
    let trials = 100_000;
    let diag = |lambda: f64, rng: &mut _| {
        (0..trials)
            .filter(|_| {
                let p = Pulse::quantum(0, 0.5, pol).with_wavelength(lambda);
                bob_route(&p, &bob, BasisChoice::Passive, rng).unwrap().measure_basis == Basis::Diagonal
            })
            .count() as f64
            / trials as f64
    };
    assert_abs_diff_eq!(diag(1550.0, &mut rng), 0.5, epsilon = 0.005);
    // 3 sigma of a binomial at p = 0.003
    assert_abs_diff_eq!(diag(1290.0, &mut rng), 0.003, epsilon = 0.00052);
    assert_abs_diff_eq!(diag(1470.0, &mut rng), 0.986, epsilon = 0.0012);
}

#[test]
fn geiger_click_rate_at_gate_center() {
    let det = SpadConfig { eta_peak: 0.25, dark_prob: 0.0, ..SpadConfig::clavis2_like() };
    let state = SpadState::default();
    let mut rng = RngStreams::new(3).stream("detectors");
    let n = 1_000_000;
    let clicks = (0..n).filter(|_| detect(&PortInput::new(0.1, 0.0), &det, &state, &mut rng).clicked).count();
    assert_abs_diff_eq!(clicks as f64 / n as f64, 0.02469, epsilon = 5e-4);
}

#[test]
fn superlinear_edge_value() {
    // eta_peak 0.1 at the point where the envelope has fallen to 1 %
    let det = SpadConfig::clavis2_like();
    let x = (100f64.ln() / (4.0 * std::f64::consts::LN_2)).sqrt();
    let t = x * det.eta_fwhm_ns;
    let p = superlinear_click_probability(50.0, t, &det, &SpadState::default()).unwrap();
    assert_abs_diff_eq!(p, 0.2209, epsilon = 1e-4);
    assert_abs_diff_eq!(1.0 - (-0.05f64).exp(), 0.0488, epsilon = 1e-4);
}

#[test]
fn reconciliation_leak() {
    let key = BitString::new(vec![0; 10_000]);
    let (_, _, leak) = error_correct(&key, &key, 0.05, 1.0).unwrap();
    assert_abs_diff_eq!(leak, 2864.0, epsilon = 0.5);
}

#[test]
fn trojan_closed_forms() {
    let p = TrojanParams::default();
    let (mu_back, success) = trojan_success(&p, None);
    assert_abs_diff_eq!(mu_back, 100.0, epsilon = 1e-9);
    assert!(success > 1.0 - 1e-8);

    let iso = IsolatorCurve::telecom_default();
    let (guarded, _) = trojan_success(&p, Some(&iso));
    assert_abs_diff_eq!(guarded, 100.0 * 1e-6, epsilon = 1e-12);
    let far = TrojanParams { probe_wavelength_nm: 1300.0, ..p };
    assert_abs_diff_eq!(isolator_round_trip(1300.0, &iso), 10f64.powf(-0.6), epsilon = 1e-12);
    assert!(trojan_success(&far, Some(&iso)).1 > 0.99);

    let filtered = iso.with_filter(BandpassFilter {
        pass_lo_nm: 1540.0,
        pass_hi_nm: 1560.0,
        stopband_db: 60.0,
        passband_loss_db: 0.0,
    });
    for l in [1100.0, 1300.0, 1450.0, 1530.0, 1570.0, 1700.0, 2000.0] {
        assert!(isolator_round_trip(l, &filtered) <= 1e-12, "{l} nm leaks");
    }
}

#[test]
fn superlinear_pulse_slips_past_photon_watchdog() {
    let wd = WatchdogConfig::fixed_tap(0.01, 1e4);
    let mut rng = RngStreams::new(4).stream("bob-watchdog");
    let faked = Pulse::bright(0, 50.0, Polarization::new(0.0).unwrap());
    assert!(!watchdog_check_slot(vec![faked], &wd, 200.0, &mut rng).alarm);
    let cw = Pulse::continuous_wave(0, 1.0);
    assert!(watchdog_check_slot(vec![cw], &wd, 200.0, &mut rng).alarm);
}

#[test]
fn excess_error_sets_the_qber_floor() {
    let c = cfg("preset = \"ideal\"\nseed = 5\nslots = 520000\n[channel]\nexcess_error = 0.02");
    let (_, log, _) = run_detailed(&c).unwrap();
    let key = sift(&log);
    assert!(key.len() > 100_000);
    let q = key.alice.mismatches(&key.bob) as f64 / key.len() as f64;
    assert_abs_diff_eq!(q, 0.02, epsilon = 0.004);
}

#[test]
fn noiseless_keys_match_exactly() {
    let (r, log, _) = run_detailed(&cfg("preset = \"ideal\"\nseed = 6")).unwrap();
    let key = sift(&log);
    assert_eq!(key.alice, key.bob);
    assert_eq!(r.qber, 0.0);
    assert!(r.final_key_len > 0);
}

#[test]
fn baseline_distills_and_full_ira_aborts() {
    let r = run_scenario(&cfg("preset = \"baseline\"\nseed = 7")).unwrap();
    assert!(!r.aborted && r.qber < 0.08 && r.final_key_len > 0);
    let r = run_scenario(&cfg("preset = \"ideal-ira\"\nseed = 7")).unwrap();
    assert!(r.aborted);
    assert_eq!(r.abort_reason, Some(AbortReason::Qber));
    assert!((r.eve_certain_fraction - 0.5).abs() <= 0.01);
}

#[test]
fn naive_time_shift_halves_the_rate() {
    // shifting by half a FWHM halves the efficiency of both detectors
    let text = "preset = \"baseline\"\nseed = 8\nslots = 400000\n[attack]\nkind = \"time-shift\"\ndt_delay_ns = 0.4\ndt_advance_ns = 0.4";
    let r = run_scenario(&cfg(text)).unwrap();
    assert_abs_diff_eq!(r.delta, 0.5, epsilon = 0.08);
    assert!(r.aborted);
    assert_eq!(r.abort_reason, Some(AbortReason::Transmittance));
}

#[test]
fn audit_verdicts() {
    let base = cfg("preset = \"noiseless\"\nseed = 9\nslots = 20000");
    let attack = |text: &str| NamedAttack { name: None, attack: toml::from_str(text).unwrap() };
    let attacks =
        [attack("kind = \"faked-state-blinding\""), attack("kind = \"superlinear\"\nmean_photons = 50.0")];
    let stack = |name: &str, text: &str| NamedStack {
        name: name.into(),
        countermeasures: toml::from_str(text).unwrap(),
    };
    let stacks = [
        stack("none", ""),
        stack("watchdog", "[bob_watchdog]\ntap_ratio = 0.01\nalarm_threshold_photons = 1e4\nmode = { kind = \"fixed-tap\" }"),
        stack("bmg", "[bit_mapped_gating]"),
    ];
    let baseline = ScenarioConfig { detectors: cfg("preset = \"baseline\"").detectors, ..base.clone() };
    let m = audit(&base, &attacks[..1], &stacks[..2], 3);
    assert!(m.cell("faked-state-blinding", "none").unwrap().breach);
    assert!(!m.cell("faked-state-blinding", "watchdog").unwrap().breach);
    let m = audit(&baseline, &attacks[1..], &stacks[2..], 3);
    let cell = m.cell("superlinear", "bmg").unwrap();
    assert!(!cell.breach && cell.aborted_runs == 3 && cell.mean_qber > 0.3);
}
