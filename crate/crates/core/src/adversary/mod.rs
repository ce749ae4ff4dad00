//! The quantum channel and the eavesdropper who owns it.

mod attacks;
mod channel;
mod strategy;

pub use attacks::*;
pub use channel::*;
pub use strategy::*;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationResult;
use crate::countermeasures::IsolatorCurve;
use crate::detectors::{
    gate_efficiency, signal_click_probability, PortInput, SpadConfig, SpadMode, SpadState,
};
use crate::endpoints::{cw_split, AliceConfig, BobConfig, ReceiverScheme};
use crate::optics::{Basis, Pulse};
use crate::postprocessing::sift;
use crate::session::SessionLog;

/// Resend intensity used when no finite value can match Bob's click rate.
pub const MAX_RESEND_MU: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("attack not applicable: {0}")]
    Inapplicable(String),
    #[error("trigger gives {full} photons on detector {detector}: need threshold {threshold} <= full and half below it")]
    Sandwich { detector: usize, full: f64, threshold: f64 },
    #[error("invalid attack parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Knowledge {
    None,
    /// Eve holds a guess that is right with this probability.
    Probabilistic(f64),
    /// Eve knows the bit once bases are announced.
    Certain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveRecord {
    pub slot: u64,
    pub acted: bool,
    pub eve_basis: Option<Basis>,
    pub eve_bit: Option<u8>,
    pub knowledge: Knowledge,
}

impl EveRecord {
    pub fn idle(slot: u64) -> Self {
        Self { slot, acted: false, eve_basis: None, eve_bit: None, knowledge: Knowledge::None }
    }

    /// Eve touched the slot but learned nothing.
    pub fn blind(slot: u64) -> Self {
        Self { acted: true, ..Self::idle(slot) }
    }

    pub fn certain(slot: u64, basis: Basis, bit: u8) -> Self {
        Self { slot, acted: true, eve_basis: Some(basis), eve_bit: Some(bit), knowledge: Knowledge::Certain }
    }
}

/// What Eve knows about the link she attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct EveEnvironment {
    pub alice: AliceConfig,
    pub channel: ChannelConfig,
    pub bob: BobConfig,
    pub detectors: Vec<SpadConfig>,
    pub states: Vec<SpadState>,
    /// Efficiency Bob assumes for an on-time photon.
    pub eta_nominal: f64,
    pub calibration: Option<CalibrationResult>,
    pub alice_isolator: Option<IsolatorCurve>,
}

impl EveEnvironment {
    /// Click probability per slot Bob sees on an undisturbed link, ignoring
    /// dark counts.
    pub fn honest_click_probability(&self) -> f64 {
        let mean =
            self.alice.mu * self.channel.transmittance * self.eta_nominal * self.bob.internal_transmission;
        1.0 - (-mean).exp()
    }

    /// Resend intensity that keeps Bob's click rate unchanged when Eve
    /// resends only the `p_resend` share of slots.
    pub fn matched_resend_mu(&self, p_resend: f64) -> f64 {
        let ratio = self.honest_click_probability() / p_resend;
        if ratio >= 1.0 {
            return MAX_RESEND_MU;
        }
        (-(1.0 - ratio).ln() / (self.eta_nominal * self.bob.internal_transmission)).min(MAX_RESEND_MU)
    }

    fn measure_probability(&self) -> f64 {
        1.0 - (-self.alice.mu).exp()
    }

    fn bit_detectors(&self) -> (usize, usize) {
        (self.bob.detector_for(Basis::Rectilinear, 0), self.bob.detector_for(Basis::Rectilinear, 1))
    }
}

/// Everything Eve does in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAction {
    pub record: EveRecord,
    /// Light arriving at Bob's entrance.
    pub to_bob: Vec<Pulse>,
    pub extra_dark_scale: f64,
    /// Light Eve injects into Alice's device.
    pub probe: Option<Pulse>,
}

impl SlotAction {
    fn new(record: EveRecord, to_bob: Vec<Pulse>) -> Self {
        Self { record, to_bob, extra_dark_scale: 1.0, probe: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Plan {
    Passive,
    InterceptResend {
        fraction: f64,
        mu: f64,
    },
    Faked {
        variant: FakedVariant,
        p_emit: f64,
        energy: f64,
        offset: f64,
        cw_power_mw: f64,
        dark_inflation: f64,
    },
    TimeShift {
        dt_delay: f64,
        dt_advance: f64,
        channel: ChannelConfig,
        posterior: [Knowledge; 2],
    },
    Wavelength {
        params: WavelengthParams,
        mu: f64,
    },
    Trojan {
        params: TrojanParams,
        mu: f64,
    },
}

/// Eve's per-run state, built once from the strategy and the target system.
#[derive(Debug, Clone, PartialEq)]
pub struct Eve {
    strategy_name: &'static str,
    plan: Plan,
}

impl Eve {
    pub fn new(strategy: &AttackStrategy, env: &EveEnvironment) -> Result<Self, AttackError> {
        let plan = match strategy {
            AttackStrategy::None | AttackStrategy::CalibrationHack => Plan::Passive,
            AttackStrategy::InterceptResend(p) => {
                if !(0.0..=1.0).contains(&p.fraction) {
                    return Err(AttackError::InvalidParam(format!("fraction {} outside [0, 1]", p.fraction)));
                }
                let mu = p.resend_mu.unwrap_or_else(|| env.matched_resend_mu(env.measure_probability()));
                Plan::InterceptResend { fraction: p.fraction, mu }
            }
            AttackStrategy::FakedStateBlinding(p) => blinding_plan(p, env)?,
            AttackStrategy::AfterGate(p) => after_gate_plan(p, env)?,
            AttackStrategy::Superlinear(p) => superlinear_plan(p, env)?,
            AttackStrategy::TimeShift(p) => time_shift_plan(p, env)?,
            AttackStrategy::WavelengthIra(p) => {
                if env.bob.scheme != ReceiverScheme::PassiveFourDetector {
                    return Err(AttackError::Inapplicable(
                        "wavelength attack needs a passive basis choice".into(),
                    ));
                }
                let curve = env.bob.bs_curve.as_ref().expect("validated passive receiver");
                for l in [p.lambda0_nm, p.lambda1_nm] {
                    curve.reflectivity(l).map_err(|e| AttackError::InvalidParam(e.to_string()))?;
                }
                let mu = p.resend_mu.unwrap_or_else(|| env.matched_resend_mu(env.measure_probability()));
                Plan::Wavelength { params: *p, mu }
            }
            AttackStrategy::TrojanHorse(p) => {
                if !(p.probe_mu >= 0.0 && p.eve_detector_eta > 0.0 && p.eve_detector_eta <= 1.0) {
                    return Err(AttackError::InvalidParam("trojan probe_mu/eve_detector_eta".into()));
                }
                let mu = env.matched_resend_mu(env.measure_probability());
                Plan::Trojan { params: *p, mu }
            }
            AttackStrategy::LaserDamage(p) => {
                if !(p.power_watts >= 0.0) {
                    return Err(AttackError::InvalidParam("power_watts must be >= 0".into()));
                }
                if let Some(t) = p.targets.iter().find(|t| **t >= env.detectors.len()) {
                    return Err(AttackError::InvalidParam(format!("no detector {t}")));
                }
                match &p.follow_up {
                    Some(next) if matches!(**next, AttackStrategy::LaserDamage(_)) => {
                        return Err(AttackError::InvalidParam("nested laser damage".into()))
                    }
                    Some(next) => Eve::new(next, env)?.plan,
                    None => Plan::Passive,
                }
            }
        };
        Ok(Self { strategy_name: strategy.name(), plan })
    }

    pub fn strategy_name(&self) -> &'static str {
        self.strategy_name
    }

    /// Handle Alice's pulse for one slot. `alice_basis` is only read by the
    /// Trojan-horse probe, which learns it physically.
    pub fn act<R: Rng + ?Sized>(
        &self,
        pulse: Pulse,
        alice_basis: Basis,
        env: &EveEnvironment,
        rng: &mut R,
    ) -> Result<SlotAction, AttackError> {
        let slot = pulse.slot;
        let forward = |i: Interception, rng: &mut R| match i {
            Interception::Passed(p) => vec![channel_transmit(p, &env.channel, rng)],
            Interception::Resent(p) => vec![p],
            Interception::Blocked => Vec::new(),
        };
        Ok(match &self.plan {
            Plan::Passive => {
                SlotAction::new(EveRecord::idle(slot), forward(Interception::Passed(pulse), rng))
            }
            Plan::InterceptResend { fraction, mu } => {
                let (rec, i) = intercept_resend(pulse, *fraction, *mu, rng);
                SlotAction::new(rec, forward(i, rng))
            }
            Plan::Faked { variant, p_emit, energy, offset, cw_power_mw, dark_inflation } => {
                let mut pulse = pulse;
                let basis = Basis::random(rng);
                let bit = eve_measure(&mut pulse, basis, rng);
                let emit = rng.random::<f64>() < *p_emit;
                let cw = if *cw_power_mw > 0.0 {
                    vec![Pulse::continuous_wave(slot, *cw_power_mw).with_wavelength(pulse.wavelength_nm)]
                } else {
                    Vec::new()
                };
                match (bit, emit) {
                    (Some(b), true) => {
                        let light = faked_state_emit(
                            slot,
                            basis,
                            b,
                            *variant,
                            *energy,
                            *offset,
                            *cw_power_mw,
                            pulse.wavelength_nm,
                        );
                        let mut a = SlotAction::new(EveRecord::certain(slot, basis, b), light);
                        a.extra_dark_scale = *dark_inflation;
                        a
                    }
                    _ => SlotAction::new(EveRecord::blind(slot), cw),
                }
            }
            Plan::TimeShift { dt_delay, dt_advance, channel, posterior } => {
                let dir = if rng.random_bool(0.5) { ShiftDirection::Advance } else { ShiftDirection::Delay };
                let shifted = time_shift(pulse, dir, *dt_delay, *dt_advance);
                let out = channel_transmit(shifted, channel, rng);
                let rec = EveRecord {
                    slot,
                    acted: true,
                    eve_basis: None,
                    eve_bit: Some(dir.bit()),
                    knowledge: posterior[usize::from(dir.bit())],
                };
                SlotAction::new(rec, vec![out])
            }
            Plan::Wavelength { params, mu } => {
                let mut pulse = pulse;
                let basis = Basis::random(rng);
                let rec = match eve_measure(&mut pulse, basis, rng) {
                    Some(bit) => EveRecord::certain(slot, basis, bit),
                    None => EveRecord::blind(slot),
                };
                let out = wavelength_resend(&rec, params, *mu, &env.bob)?;
                SlotAction::new(rec, out.into_iter().collect())
            }
            Plan::Trojan { params, mu } => {
                let probe = trojan_probe(alice_basis, params, env.alice_isolator.as_ref(), rng);
                let probe_light = Pulse::quantum(slot, params.probe_mu, pulse.polarization)
                    .with_wavelength(params.probe_wavelength_nm);
                let mut action = match probe.basis_estimate {
                    Some(basis) => {
                        let mut pulse = pulse;
                        match eve_measure(&mut pulse, basis, rng) {
                            Some(bit) => SlotAction::new(
                                EveRecord::certain(slot, basis, bit),
                                vec![resend_pulse(slot, basis, bit, *mu, pulse.wavelength_nm)],
                            ),
                            None => SlotAction::new(EveRecord::blind(slot), Vec::new()),
                        }
                    }
                    None => SlotAction::new(
                        EveRecord { acted: true, ..EveRecord::idle(slot) },
                        forward(Interception::Passed(pulse), rng),
                    ),
                };
                action.probe = Some(probe_light);
                action
            }
        })
    }
}

/// Trigger energy halfway inside the allowed window of every detector.
fn default_trigger(env: &EveEnvironment) -> f64 {
    let max_th = env.detectors.iter().map(|d| d.linear_threshold_photons).fold(0.0, f64::max);
    1.5 * max_th / env.bob.internal_transmission
}

fn emission_probability(env: &EveEnvironment, p_click_given_emit: f64) -> f64 {
    let p = env.honest_click_probability() / (env.measure_probability() * p_click_given_emit);
    p.min(1.0)
}

fn blinding_plan(p: &BlindingParams, env: &EveEnvironment) -> Result<Plan, AttackError> {
    let energy = p.trigger_photons.unwrap_or_else(|| default_trigger(env));
    check_trigger_sandwich(energy, env.bob.internal_transmission, &env.detectors)?;
    let share = cw_split(&env.bob, p.cw_power_mw);
    for (j, (d, s)) in env.detectors.iter().zip(&env.states).enumerate() {
        if s.mode == SpadMode::Geiger && share[j] < d.blinding_power_mw {
            return Err(AttackError::InvalidParam(format!(
                "cw_power_mw {} leaves detector {j} in Geiger mode",
                p.cw_power_mw
            )));
        }
    }
    check_offset(p.trigger_offset_ns, env)?;
    Ok(Plan::Faked {
        variant: FakedVariant::Blinding,
        p_emit: emission_probability(env, 0.5),
        energy,
        offset: p.trigger_offset_ns,
        cw_power_mw: p.cw_power_mw,
        dark_inflation: 1.0,
    })
}

fn after_gate_plan(p: &AfterGateParams, env: &EveEnvironment) -> Result<Plan, AttackError> {
    let energy = p.trigger_photons.unwrap_or_else(|| default_trigger(env));
    check_trigger_sandwich(energy, env.bob.internal_transmission, &env.detectors)?;
    if !(p.dark_inflation >= 1.0) || !(p.delay_after_gate_ns > 0.0) {
        return Err(AttackError::InvalidParam("after-gate delay must be > 0 and dark_inflation >= 1".into()));
    }
    let gate_end = env.detectors.iter().map(|d| d.gate_end()).fold(f64::MIN, f64::max);
    let offset = gate_end + p.delay_after_gate_ns;
    check_offset(offset, env)?;
    Ok(Plan::Faked {
        variant: FakedVariant::AfterGate,
        p_emit: emission_probability(env, 0.5),
        energy,
        offset,
        cw_power_mw: 0.0,
        dark_inflation: p.dark_inflation,
    })
}

fn superlinear_plan(p: &SuperlinearParams, env: &EveEnvironment) -> Result<Plan, AttackError> {
    if !(10.0..=100.0).contains(&p.mean_photons) {
        return Err(AttackError::InvalidParam(format!(
            "superlinear mean_photons {} outside [10, 100]",
            p.mean_photons
        )));
    }
    let d0 = &env.detectors[0];
    let offset = p.edge_offset_ns.unwrap_or(d0.gate_center_ns + 0.75 * d0.eta_fwhm_ns);
    for (j, d) in env.detectors.iter().enumerate() {
        let rel = offset - d.gate_center_ns;
        if !(rel > d.eta_fwhm_ns / 2.0 && rel <= d.gate_width_ns / 2.0) {
            return Err(AttackError::InvalidParam(format!(
                "edge offset {offset} ns is not on the falling edge of detector {j}"
            )));
        }
    }
    // click probabilities for Bob's two outcomes of the basis comparison
    let l = env.bob.internal_transmission;
    let mut matched = 0.0;
    let mut mismatched = 0.0;
    for (d, s) in env.detectors.iter().zip(&env.states) {
        let full = signal_click_probability(&PortInput::new(p.mean_photons * l, offset), d, s).0;
        let half = signal_click_probability(&PortInput::new(p.mean_photons * l / 2.0, offset), d, s).0;
        matched += full;
        mismatched += 1.0 - (1.0 - half) * (1.0 - half);
    }
    let n = env.detectors.len() as f64;
    let p_click = 0.5 * matched / n + 0.5 * mismatched / n;
    Ok(Plan::Faked {
        variant: FakedVariant::Superlinear,
        p_emit: emission_probability(env, p_click),
        energy: p.mean_photons,
        offset,
        cw_power_mw: 0.0,
        dark_inflation: 1.0,
    })
}

fn time_shift_plan(p: &TimeShiftParams, env: &EveEnvironment) -> Result<Plan, AttackError> {
    let fwhm = env.detectors[0].eta_fwhm_ns;
    let dt_delay = p.dt_delay_ns.unwrap_or(fwhm);
    let dt_advance = p.dt_advance_ns.unwrap_or(fwhm);
    check_offset(dt_delay, env)?;
    check_offset(-dt_advance, env)?;
    if !(p.loss_compensation >= 1.0) {
        return Err(AttackError::InvalidParam("loss_compensation must be >= 1".into()));
    }
    let (d0, d1) = env.bit_detectors();
    let eta = |j: usize, t: f64| gate_efficiency(t, &env.detectors[j], &env.states[j]);
    let posterior = [
        shift_posterior(eta(d0, dt_delay), eta(d1, dt_delay)),
        shift_posterior(eta(d1, -dt_advance), eta(d0, -dt_advance)),
    ];
    let channel = ChannelConfig {
        transmittance: (env.channel.transmittance * p.loss_compensation).min(1.0),
        ..env.channel
    };
    Ok(Plan::TimeShift { dt_delay, dt_advance, channel, posterior })
}

fn check_offset(offset: f64, env: &EveEnvironment) -> Result<(), AttackError> {
    if offset.abs() < env.alice.slot_period_ns / 2.0 {
        Ok(())
    } else {
        Err(AttackError::InvalidParam(format!("offset {offset} ns exceeds half the slot period")))
    }
}

/// Eve's share of the sifted key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveKnowledge {
    /// Sifted bits Eve holds with certainty and correctly.
    pub certain_fraction: f64,
    /// `|2 P(correct) - 1|` averaged over sifted bits, counting bits Eve has
    /// no information on as coin flips.
    pub guess_adjusted: f64,
    pub sifted_bits: usize,
}

impl EveKnowledge {
    pub fn score(&self) -> f64 {
        self.certain_fraction.max(self.guess_adjusted)
    }
}

pub fn eve_key_knowledge(session: &SessionLog) -> EveKnowledge {
    let sifted = sift(session);
    let kept: std::collections::HashSet<u64> = sifted.kept_slots.iter().copied().collect();
    let mut certain = 0usize;
    let mut advantage = 0.0;
    let mut n = 0usize;
    for r in session.records.iter().filter(|r| kept.contains(&r.slot)) {
        n += 1;
        let e = &r.eve;
        let correct = e.eve_bit == Some(r.alice.bit);
        let p_correct = match e.knowledge {
            Knowledge::None => 0.5,
            Knowledge::Certain => {
                if e.eve_basis.is_some_and(|b| b != r.alice.basis) {
                    0.5
                } else {
                    certain += usize::from(correct);
                    f64::from(u8::from(correct))
                }
            }
            Knowledge::Probabilistic(_) => f64::from(u8::from(correct)),
        };
        advantage += 2.0 * p_correct - 1.0;
    }
    if n == 0 {
        return EveKnowledge { certain_fraction: 0.0, guess_adjusted: 0.0, sifted_bits: 0 };
    }
    EveKnowledge {
        certain_fraction: certain as f64 / n as f64,
        guess_adjusted: (advantage / n as f64).abs(),
        sifted_bits: n,
    }
}
