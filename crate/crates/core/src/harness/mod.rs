//! Scenario execution: configuration, the per-slot loop, sweeps and the
//! attack-versus-countermeasure audit.

mod audit;
mod config;
pub mod presets;
mod sweep;

pub use audit::*;
pub use config::*;
pub use sweep::*;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::adversary::{eve_key_knowledge, AttackError, AttackStrategy, Eve, EveEnvironment, EveRecord};
use crate::calibration::calibrate_detectors;
use crate::countermeasures::{
    bit_mapped_gate_error, watchdog_check_slot, RandomGateTiming, WatchdogConfig, WatchdogState,
};
use crate::detectors::{
    apply_cw_illumination, apply_laser_damage, detect, ClickCause, PortInput, SpadConfig, SpadState,
};
use crate::endpoints::{alice_prepare, bob_route, cw_split, BasisChoice, EndpointError, ReceiverScheme};
use crate::optics::{Basis, BasisBit, Polarization, Pulse};
use crate::postprocessing::{
    abort_decision, error_correct, estimate_parameters, final_key_length, privacy_amplify, sift, AbortReason,
    BitString, Decision, PostError, ProtocolReport, RateModel,
};
use crate::rng::RngStreams;
use crate::session::{SessionLog, SlotRecord};

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Post(#[from] PostError),
    #[error("{0}")]
    Slot(String),
}

impl RunError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

/// A validated scenario with detectors resolved and pre-exchange damage applied.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub detectors: Vec<SpadConfig>,
    pub states: Vec<SpadState>,
    pub bob_watchdog: Option<WatchdogConfig>,
    pub log: SessionLog,
}

pub fn prepare(config: &ScenarioConfig) -> Result<Prepared, ConfigError> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    let detectors = config.resolved_detectors().map_err(ConfigError::Invalid)?;
    let mut states = vec![SpadState::default(); detectors.len()];
    let mut bob_watchdog = config.countermeasures.bob_watchdog.clone();
    let mut log = SessionLog { detector_clicks: vec![0; detectors.len()], ..Default::default() };
    if let AttackStrategy::LaserDamage(p) = &config.attack {
        for (j, d) in detectors.iter().enumerate() {
            if p.targets.is_empty() || p.targets.contains(&j) {
                let (next, report) = apply_laser_damage(p.power_watts, d, &states[j]);
                states[j] = next;
                log.damage.push(report);
            }
        }
        if let Some(wd) = bob_watchdog.as_mut().filter(|w| w.state == WatchdogState::Alive) {
            if p.hit_watchdog && p.power_watts >= wd.damage_threshold_watts {
                wd.state = WatchdogState::Destroyed;
            } else {
                log.setup_alarms += 1;
            }
        }
    }
    let prepared = Prepared { config: config.clone(), detectors, states, bob_watchdog, log };
    // attack parameters are part of the config contract
    Eve::new(&config.attack, &prepared.environment(None))
        .map_err(|e| ConfigError::Invalid(vec![format!("attack: {e}")]))?;
    Ok(prepared)
}

impl Prepared {
    fn environment(&self, calibration: Option<crate::calibration::CalibrationResult>) -> EveEnvironment {
        let c = &self.config;
        EveEnvironment {
            alice: c.alice.clone(),
            channel: c.channel,
            bob: c.bob.clone(),
            detectors: self.detectors.clone(),
            states: self.states.clone(),
            eta_nominal: eta_nominal(&self.detectors, c.countermeasures.random_gate_timing.as_ref()),
            calibration,
            alice_isolator: c.countermeasures.alice_isolator.clone(),
        }
    }
}

/// Efficiency Bob expects for an on-time photon, averaged over his detectors
/// and over the gate jitter when gate timing is randomized.
pub fn eta_nominal(detectors: &[SpadConfig], gating: Option<&RandomGateTiming>) -> f64 {
    let n = detectors.len() as f64;
    detectors
        .iter()
        .map(|d| {
            let avg = match gating {
                Some(g) if g.window_ns > 0.0 => {
                    let k = 401;
                    (0..k)
                        .map(|i| {
                            let x = (i as f64 / (k - 1) as f64 - 0.5) * g.window_ns / d.eta_fwhm_ns;
                            (-4.0 * std::f64::consts::LN_2 * x * x).exp()
                        })
                        .sum::<f64>()
                        / k as f64
                }
                _ => 1.0,
            };
            d.eta_peak * avg
        })
        .sum::<f64>()
        / n
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ProtocolReport, RunError> {
    Ok(run_detailed(config)?.0)
}

/// Run and also return the session transcript and the final key.
pub fn run_detailed(config: &ScenarioConfig) -> Result<(ProtocolReport, SessionLog, BitString), RunError> {
    let prepared = prepare(config)?;
    let log = execute(&prepared)?;
    let (report, key) = distill(&prepared, &log)?;
    Ok((report, log, key))
}

/// Quantum phase: calibration (if scheduled) and every slot.
pub fn execute(prepared: &Prepared) -> Result<SessionLog, RunError> {
    let cfg = &prepared.config;
    let streams = RngStreams::new(cfg.seed);
    let mut log = prepared.log.clone();
    let mut detectors = prepared.detectors.clone();
    let mut states = prepared.states.clone();
    let cm = &cfg.countermeasures;

    if let Some(cal) = &cfg.calibration {
        let mut rng = streams.stream("calibration");
        let result = calibrate_detectors(
            &detectors,
            cal,
            cfg.attack.induces_dem(),
            cm.random_basis_calibration,
            &mut rng,
        );
        for (d, t) in detectors.iter_mut().zip(&result.gate_centers_ns) {
            d.gate_center_ns = *t;
        }
        log.calibration = Some(result);
    }
    let env =
        EveEnvironment { detectors: detectors.clone(), ..prepared.environment(log.calibration.clone()) };
    let eve = Eve::new(&cfg.attack, &env)?;

    let mut alice_rng = streams.stream("alice");
    let mut eve_rng = streams.stream("eve");
    let mut bob_rng = streams.stream("bob");
    let mut det_rng = streams.stream("detectors");
    let mut gate_rng = streams.stream("gating");
    let mut wd_rng = streams.stream("bob-watchdog");
    let mut awd_rng = streams.stream("alice-watchdog");
    let slot_ns = cfg.alice.slot_period_ns;
    let horizontal = Polarization::new(0.0).expect("finite");

    log.records.reserve(cfg.slots as usize);
    for slot in 0..cfg.slots {
        let state = BasisBit::random(&mut alice_rng);
        let pulse = alice_prepare(slot, state, &cfg.alice);
        let action = eve.act(pulse, state.basis, &env, &mut eve_rng)?;
        let mut alarm = false;

        if let (Some(probe), Some(wd)) = (&action.probe, &cm.alice_watchdog) {
            if watchdog_check_slot(vec![probe.clone()], wd, slot_ns, &mut awd_rng).alarm {
                log.alice_watchdog_alarms += 1;
                alarm = true;
            }
        }
        let mut light = action.to_bob;
        if let Some(wd) = &prepared.bob_watchdog {
            let out = watchdog_check_slot(light, wd, slot_ns, &mut wd_rng);
            light = out.forwarded;
            if out.alarm {
                log.watchdog_alarms += 1;
                alarm = true;
            }
        }

        let cw: f64 = light.iter().filter(|p| p.is_cw()).map(|p| p.cw_power_mw).sum();
        for ((s, d), share) in states.iter_mut().zip(&detectors).zip(cw_split(&cfg.bob, cw)) {
            *s = apply_cw_illumination(share, d, s);
        }
        let mut pulses = light.into_iter().filter(|p| !p.is_cw());
        let signal = pulses.next().unwrap_or_else(|| {
            Pulse::quantum(slot, 0.0, horizontal).with_wavelength(cfg.alice.wavelength_nm)
        });
        if pulses.next().is_some() {
            return Err(RunError::Slot(format!("slot {slot}: more than one pulse reached Bob")));
        }

        let choice = match cfg.bob.scheme {
            ReceiverScheme::ActiveTwoDetector => BasisChoice::Active(Basis::random(&mut bob_rng)),
            ReceiverScheme::PassiveFourDetector => BasisChoice::Passive,
        };
        let routing = bob_route(&signal, &cfg.bob, choice, &mut bob_rng)?;
        let jitter = cm.random_gate_timing.as_ref().map_or(0.0, |g| g.sample(&mut gate_rng));
        let arrival = signal.arrival_offset - jitter;

        let mut clicks = 0u8;
        let mut first: Option<(u8, usize, ClickCause)> = None;
        for port in 0..2u8 {
            let j = cfg.bob.detector_for(routing.measure_basis, port);
            let input = PortInput {
                mean_photons: routing.port_mean_photons[usize::from(port)],
                exact_photons: None,
                arrival_offset: arrival,
                extra_dark_scale: action.extra_dark_scale,
            };
            let res = detect(&input, &detectors[j], &states[j], &mut det_rng);
            if res.clicked {
                clicks |= 1 << j;
                log.detector_clicks[j] += 1;
                if first.is_none() {
                    first = Some((port, j, res.cause.expect("clicks have a cause")));
                }
            }
        }
        let mut remapped = false;
        let bob_bit = first.map(|(port, j, cause)| {
            let mut bit = if clicks.count_ones() > 1 { bob_rng.random_range(0..2u8) } else { port };
            if let Some(g) = &cm.bit_mapped_gating {
                let d = &detectors[j];
                let offset = if cause == ClickCause::Dark {
                    (gate_rng.random::<f64>() - 0.5) * d.gate_width_ns
                } else {
                    arrival - d.gate_center_ns
                };
                if bit_mapped_gate_error(offset, g.window_ns.unwrap_or(d.eta_fwhm_ns)) > 0.0 {
                    bit = gate_rng.random_range(0..2u8);
                    remapped = true;
                }
            }
            bit
        });

        let eve_record: EveRecord = action.record;
        if eve_record.acted {
            log.attacked_slots += 1;
            log.alarmed_attacked_slots += u64::from(alarm);
        }
        log.records.push(SlotRecord {
            slot,
            alice: state,
            bob_basis: routing.measure_basis,
            bob_bit,
            clicks,
            cause: first.map(|f| f.2),
            remapped,
            eve: eve_record,
            alarm,
        });
    }
    Ok(log)
}

/// Classical phase: sift, estimate, decide, reconcile and amplify.
pub fn distill(prepared: &Prepared, log: &SessionLog) -> Result<(ProtocolReport, BitString), RunError> {
    let cfg = &prepared.config;
    let streams = RngStreams::new(cfg.seed);
    let knowledge = eve_key_knowledge(log);
    let sifted = sift(log);
    let watchdog_share = prepared
        .bob_watchdog
        .as_ref()
        .filter(|w| w.state == WatchdogState::Alive)
        .map_or(1.0, |w| w.signal_transmission());
    let rate = RateModel {
        slots: cfg.slots,
        clicked_slots: log.clicked_slots(),
        mu: cfg.alice.mu,
        eta_nominal: eta_nominal(&prepared.detectors, cfg.countermeasures.random_gate_timing.as_ref()),
        receiver_transmission: cfg.bob.internal_transmission * watchdog_share,
        dark_prob: prepared.detectors.iter().map(|d| d.dark_prob).sum::<f64>()
            / prepared.detectors.len() as f64,
        gates_per_slot: 2,
        expected_transmittance: cfg.channel.transmittance,
    };
    let mut sample_rng = streams.stream("sample");
    let mut report = ProtocolReport {
        scenario: cfg.name.clone(),
        attack: cfg.attack.name().to_string(),
        seed: cfg.seed,
        slots: cfg.slots,
        clicked_slots: rate.clicked_slots,
        sifted_len: sifted.len(),
        sample_size: 0,
        qber: 0.0,
        t_est: crate::postprocessing::transmittance_estimate(&rate),
        delta: 0.0,
        aborted: false,
        abort_reason: None,
        ec_leak_bits: 0.0,
        final_key_len: 0,
        eve_certain_fraction: knowledge.certain_fraction,
        eve_guess_adjusted: knowledge.guess_adjusted,
        breach: false,
        detector_clicks: log.detector_clicks.clone(),
        watchdog_alarms: log.watchdog_alarms + log.alice_watchdog_alarms + log.setup_alarms,
        attacked_slots: log.attacked_slots,
        alarmed_attacked_slots: log.alarmed_attacked_slots,
        calibration: log.calibration.clone(),
    };
    report.delta = (report.t_est - rate.expected_transmittance).abs() / rate.expected_transmittance;

    let remaining = match estimate_parameters(&sifted, &rate, cfg.sample_fraction, &mut sample_rng) {
        Ok((est, rest)) => {
            report.sample_size = est.sample_size;
            report.qber = est.qber;
            report.delta = est.delta;
            Some(rest)
        }
        Err(PostError::EmptySample) => None,
        Err(e) => return Err(e.into()),
    };
    let reason = match &remaining {
        _ if log.any_alarm() => Some(AbortReason::WatchdogAlarm),
        None => Some(AbortReason::InsufficientData),
        Some(_) => match abort_decision(report.qber, report.delta, &cfg.thresholds) {
            Decision::Continue => None,
            Decision::Abort(r) => Some(r),
        },
    };
    let mut key = BitString::default();
    if let (None, Some(rest)) = (reason, remaining) {
        let pp = &cfg.postprocessing;
        let (alice_key, _, leak) = error_correct(&rest.alice, &rest.bob, report.qber, pp.f_ec)?;
        report.ec_leak_bits = leak;
        let seed = streams.stream("privacy-amplification").next_u64();
        key = privacy_amplify(&alice_key, leak, report.qber, pp.security_margin_bits, seed)?;
        debug_assert_eq!(
            key.len(),
            final_key_length(alice_key.len(), report.qber, leak, pp.security_margin_bits)?
        );
        report.final_key_len = key.len();
    }
    report.aborted = reason.is_some();
    report.abort_reason = reason;
    report.breach = !report.aborted && knowledge.score() > cfg.thresholds.negligible_eve_fraction;
    Ok((report, key))
}
