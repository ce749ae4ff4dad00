//! Shared optical primitives: linear polarization, Malus projection,
//! Poissonian photon statistics, the BB84 state alphabet and the [`Pulse`]
//! record that every stage of the link hands to the next.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Telecom design wavelength used when nothing else is configured.
pub const DEFAULT_WAVELENGTH_NM: f64 = 1550.0;

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("non-finite angle {0}")]
    NonFiniteAngle(f64),
    #[error("mean photon number must be finite and nonnegative, got {0}")]
    InvalidMean(f64),
    #[error("basis and bit must be 0 or 1, got basis={basis} bit={bit}")]
    NotBinary { basis: u8, bit: u8 },
}

/// Linear polarization direction in degrees, normalized to `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Polarization {
    angle: f64,
}

impl Polarization {
    pub fn new(angle_deg: f64) -> Result<Self, OpticsError> {
        if !angle_deg.is_finite() {
            return Err(OpticsError::NonFiniteAngle(angle_deg));
        }
        Ok(Self { angle: normalize_half_turn(angle_deg) })
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn rotated(&self, delta_deg: f64) -> Self {
        Self { angle: normalize_half_turn(self.angle + delta_deg) }
    }

    /// Angle between this polarization and an analyzer axis.
    pub fn relative_to(&self, analyzer_deg: f64) -> f64 {
        self.angle - analyzer_deg
    }
}

impl TryFrom<f64> for Polarization {
    type Error = OpticsError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Polarization::new(v)
    }
}

impl From<Polarization> for f64 {
    fn from(p: Polarization) -> f64 {
        p.angle
    }
}

fn normalize_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(180.0);
    // rem_euclid can round up to exactly 180.0 for tiny negative inputs
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// Single-photon transmission probability through a polarizer at
/// `relative_angle` degrees: cos²θ.
pub fn malus_probability(relative_angle: f64) -> Result<f64, OpticsError> {
    if !relative_angle.is_finite() {
        return Err(OpticsError::NonFiniteAngle(relative_angle));
    }
    let c = normalize_half_turn(relative_angle).to_radians().cos();
    Ok((c * c).clamp(0.0, 1.0))
}

/// Poisson probability of exactly `n` photons in a pulse of mean `mu`.
pub fn photon_pmf(mu: f64, n: u64) -> Result<f64, OpticsError> {
    check_mean(mu)?;
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    // log-space to stay finite for large n
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    Ok((-mu + n as f64 * mu.ln() - log_fact).exp())
}

pub fn sample_photon_number<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<u64, OpticsError> {
    check_mean(mu)?;
    if mu == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mu).map_err(|_| OpticsError::InvalidMean(mu))?;
    Ok(dist.sample(rng) as u64)
}

fn check_mean(mu: f64) -> Result<(), OpticsError> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(OpticsError::InvalidMean(mu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// Basis 0: H/V.
    Rectilinear,
    /// Basis 1: D/A.
    Diagonal,
}

impl Basis {
    pub fn index(self) -> u8 {
        match self {
            Basis::Rectilinear => 0,
            Basis::Diagonal => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Basis::Rectilinear),
            1 => Some(Basis::Diagonal),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Basis::Rectilinear => Basis::Diagonal,
            Basis::Diagonal => Basis::Rectilinear,
        }
    }

    /// Analyzer axis whose transmitted port reads bit 0.
    pub fn analyzer_deg(self) -> f64 {
        match self {
            Basis::Rectilinear => 0.0,
            Basis::Diagonal => 45.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

/// One BB84 symbol: basis and bit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisBit {
    pub basis: Basis,
    pub bit: u8,
}

impl BasisBit {
    pub fn new(basis: u8, bit: u8) -> Result<Self, OpticsError> {
        match (Basis::from_index(basis), bit) {
            (Some(b), 0 | 1) => Ok(Self { basis: b, bit }),
            _ => Err(OpticsError::NotBinary { basis, bit }),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let basis = Basis::random(rng);
        let bit = u8::from(rng.random::<bool>());
        Self { basis, bit }
    }
}

/// H=0°, V=90° in basis 0; D=45°, A=135° in basis 1.
pub fn bb84_polarization(state: BasisBit) -> Polarization {
    let angle = state.basis.analyzer_deg() + 90.0 * f64::from(state.bit);
    Polarization { angle }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseKind {
    Quantum,
    BrightTrigger,
    ContinuousWave,
    Calibration,
}

/// One optical signal within a slot.
///
/// `mean_photons` is meaningful for every kind except `ContinuousWave`, which
/// carries `cw_power_mw` instead. `exact_photons` is filled in once, by
/// whoever first measures the pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub slot: u64,
    pub wavelength_nm: f64,
    pub mean_photons: f64,
    pub exact_photons: Option<u64>,
    pub polarization: Polarization,
    /// Nanoseconds relative to the nominal gate center of the slot.
    pub arrival_offset: f64,
    pub kind: PulseKind,
    pub cw_power_mw: f64,
}

impl Pulse {
    pub fn quantum(slot: u64, mean_photons: f64, polarization: Polarization) -> Self {
        Self {
            slot,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
            mean_photons,
            exact_photons: None,
            polarization,
            arrival_offset: 0.0,
            kind: PulseKind::Quantum,
            cw_power_mw: 0.0,
        }
    }

    pub fn bright(slot: u64, photons: f64, polarization: Polarization) -> Self {
        Self { kind: PulseKind::BrightTrigger, ..Self::quantum(slot, photons, polarization) }
    }

    pub fn continuous_wave(slot: u64, power_mw: f64) -> Self {
        Self {
            kind: PulseKind::ContinuousWave,
            cw_power_mw: power_mw,
            ..Self::quantum(slot, 0.0, Polarization { angle: 0.0 })
        }
    }

    pub fn with_wavelength(mut self, wavelength_nm: f64) -> Self {
        self.wavelength_nm = wavelength_nm;
        self
    }

    pub fn with_offset(mut self, offset_ns: f64) -> Self {
        self.arrival_offset = offset_ns;
        self
    }

    pub fn is_cw(&self) -> bool {
        self.kind == PulseKind::ContinuousWave
    }

    /// Photon number, sampling it on first access and pinning the result.
    pub fn measure_photons<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<u64, OpticsError> {
        if let Some(n) = self.exact_photons {
            return Ok(n);
        }
        let n = sample_photon_number(self.mean_photons, rng)?;
        self.exact_photons = Some(n);
        Ok(n)
    }

    /// Energy in photon-equivalents over one slot of length `slot_period_ns`.
    pub fn energy_photons(&self, slot_period_ns: f64) -> f64 {
        match self.kind {
            PulseKind::ContinuousWave => {
                cw_photons_per_slot(self.cw_power_mw, slot_period_ns, self.wavelength_nm)
            }
            _ => self.mean_photons,
        }
    }

    /// Scale the optical energy by a linear transmission factor.
    pub fn attenuated(mut self, factor: f64) -> Self {
        self.mean_photons *= factor;
        self.cw_power_mw *= factor;
        self.exact_photons = None;
        self
    }
}

/// Photon count delivered by `power_mw` of CW light during `slot_period_ns`.
pub fn cw_photons_per_slot(power_mw: f64, slot_period_ns: f64, wavelength_nm: f64) -> f64 {
    let photon_energy = PLANCK * LIGHT_SPEED / (wavelength_nm * 1e-9);
    power_mw * 1e-3 * slot_period_ns * 1e-9 / photon_energy
}
