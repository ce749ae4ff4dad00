//! Per-slot attack primitives. Eve's runtime in [`super::Eve`] chains them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AttackError, EveRecord, Knowledge, TrojanParams, WavelengthParams};
use crate::countermeasures::{isolator_round_trip, IsolatorCurve};
use crate::detectors::SpadConfig;
use crate::endpoints::{BobConfig, ReceiverScheme};
use crate::optics::{bb84_polarization, malus_probability, Basis, BasisBit, Pulse};

/// Where an intercepted pulse goes next.
#[derive(Debug, Clone, PartialEq)]
pub enum Interception {
    /// Untouched; still has to cross the channel.
    Passed(Pulse),
    /// Eve's replacement, delivered straight to Bob's entrance.
    Resent(Pulse),
    /// Nothing reaches Bob.
    Blocked,
}

/// Projective measurement of a weak pulse by Eve's ideal detector. `None`
/// for an empty pulse. Always draws the photon number and one uniform.
pub fn eve_measure<R: Rng + ?Sized>(pulse: &mut Pulse, basis: Basis, rng: &mut R) -> Option<u8> {
    let n = pulse.measure_photons(rng).unwrap_or(0);
    let u: f64 = rng.random();
    if n == 0 {
        return None;
    }
    let p0 = malus_probability(pulse.polarization.relative_to(basis.analyzer_deg())).unwrap_or(0.5);
    Some(u8::from(u >= p0))
}

/// Fresh weak pulse in Eve's state.
pub fn resend_pulse(slot: u64, basis: Basis, bit: u8, mean_photons: f64, wavelength_nm: f64) -> Pulse {
    let state = BasisBit { basis, bit };
    Pulse::quantum(slot, mean_photons, bb84_polarization(state)).with_wavelength(wavelength_nm)
}

/// Intercept-resend on a fraction `fraction` of pulses.
pub fn intercept_resend<R: Rng + ?Sized>(
    mut pulse: Pulse,
    fraction: f64,
    resend_mu: f64,
    rng: &mut R,
) -> (EveRecord, Interception) {
    let slot = pulse.slot;
    let act = rng.random::<f64>() < fraction;
    let basis = Basis::random(rng);
    if !act {
        return (EveRecord::idle(slot), Interception::Passed(pulse));
    }
    match eve_measure(&mut pulse, basis, rng) {
        None => (EveRecord::blind(slot), Interception::Blocked),
        Some(bit) => (
            EveRecord::certain(slot, basis, bit),
            Interception::Resent(resend_pulse(slot, basis, bit, resend_mu, pulse.wavelength_nm)),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FakedVariant {
    Blinding,
    AfterGate,
    Superlinear,
}

/// Light for one faked-state slot: `energy` photons at `offset_ns`, plus the
/// blinding background when `cw_power_mw > 0`.
#[allow(clippy::too_many_arguments)]
pub fn faked_state_emit(
    slot: u64,
    eve_basis: Basis,
    eve_bit: u8,
    variant: FakedVariant,
    energy: f64,
    offset_ns: f64,
    cw_power_mw: f64,
    wavelength_nm: f64,
) -> Vec<Pulse> {
    let pol = bb84_polarization(BasisBit { basis: eve_basis, bit: eve_bit });
    let mut out = Vec::with_capacity(2);
    if cw_power_mw > 0.0 {
        out.push(Pulse::continuous_wave(slot, cw_power_mw).with_wavelength(wavelength_nm));
    }
    let trigger = match variant {
        FakedVariant::Blinding | FakedVariant::AfterGate => Pulse::bright(slot, energy, pol),
        FakedVariant::Superlinear => Pulse::quantum(slot, energy, pol),
    };
    out.push(trigger.with_wavelength(wavelength_nm).with_offset(offset_ns));
    out
}

/// A bright trigger of `energy` photons, seen through `transmission`, must
/// fire a detector alone and stay below threshold when split in half.
pub fn check_trigger_sandwich(
    energy: f64,
    transmission: f64,
    detectors: &[SpadConfig],
) -> Result<(), AttackError> {
    for (j, d) in detectors.iter().enumerate() {
        let full = energy * transmission;
        if full < d.linear_threshold_photons || full / 2.0 >= d.linear_threshold_photons {
            return Err(AttackError::Sandwich { detector: j, full, threshold: d.linear_threshold_photons });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftDirection {
    Delay,
    Advance,
}

impl ShiftDirection {
    pub fn bit(self) -> u8 {
        match self {
            Self::Delay => 0,
            Self::Advance => 1,
        }
    }
}

pub fn time_shift(mut pulse: Pulse, direction: ShiftDirection, dt_delay: f64, dt_advance: f64) -> Pulse {
    pulse.arrival_offset += match direction {
        ShiftDirection::Delay => dt_delay,
        ShiftDirection::Advance => -dt_advance,
    };
    pulse
}

/// Resend Eve's result at the wavelength that steers Bob's passive basis
/// choice towards her own basis.
pub fn wavelength_resend(
    record: &EveRecord,
    params: &WavelengthParams,
    resend_mu: f64,
    bob: &BobConfig,
) -> Result<Option<Pulse>, AttackError> {
    if bob.scheme != ReceiverScheme::PassiveFourDetector {
        return Err(AttackError::Inapplicable("wavelength attack needs a passive basis choice".into()));
    }
    let (Some(basis), Some(bit)) = (record.eve_basis, record.eve_bit) else {
        return Ok(None);
    };
    let lambda = match basis {
        Basis::Rectilinear => params.lambda0_nm,
        Basis::Diagonal => params.lambda1_nm,
    };
    Ok(Some(resend_pulse(record.slot, basis, bit, resend_mu, lambda)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub basis_estimate: Option<Basis>,
    pub success_prob: f64,
    pub mu_back: f64,
}

/// Back-reflected mean photon number and detection probability of one probe.
pub fn trojan_success(params: &TrojanParams, isolator: Option<&IsolatorCurve>) -> (f64, f64) {
    let iso = isolator.map_or(1.0, |c| isolator_round_trip(params.probe_wavelength_nm, c));
    let mu_back = params.probe_mu * 10f64.powf(-params.reflectance_db / 10.0) * iso;
    (mu_back, 1.0 - (-mu_back * params.eve_detector_eta).exp())
}

/// Probe Alice's basis setting. Draws one uniform.
pub fn trojan_probe<R: Rng + ?Sized>(
    target_basis: Basis,
    params: &TrojanParams,
    isolator: Option<&IsolatorCurve>,
    rng: &mut R,
) -> ProbeOutcome {
    let (mu_back, success_prob) = trojan_success(params, isolator);
    let hit = rng.random::<f64>() < success_prob;
    ProbeOutcome { basis_estimate: hit.then_some(target_basis), success_prob, mu_back }
}

/// Eve's posterior that Bob's detector reading her guessed bit is the one
/// that fired, from the two efficiency values at the shifted arrival.
pub fn shift_posterior(eta_guess: f64, eta_other: f64) -> Knowledge {
    let total = eta_guess + eta_other;
    if total > 0.0 {
        Knowledge::Probabilistic(eta_guess / total)
    } else {
        Knowledge::Probabilistic(0.5)
    }
}
