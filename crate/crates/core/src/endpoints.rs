//! Alice's weak-coherent transmitter and Bob's two receiver topologies.
//!
//! Bob either picks the basis actively with a polarization modulator in
//! front of one PBS and two detectors, or lets a beam splitter pick it
//! passively for a four-detector assembly. The half-wave plate in the
//! reflected arm of the passive receiver is folded into that arm's analyzer
//! axis.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{bb84_polarization, malus_probability, Basis, BasisBit, OpticsError, Pulse};

#[derive(Debug, Error, PartialEq)]
pub enum EndpointError {
    #[error("wavelength {wavelength_nm} nm outside beam-splitter curve support [{lo}, {hi}] nm")]
    Extrapolation { wavelength_nm: f64, lo: f64, hi: f64 },
    #[error("passive receiver has no beam-splitter curve")]
    MissingCurve,
    #[error("active receiver needs an explicit basis choice")]
    MissingBasis,
    #[error("invalid beam-splitter table: {0}")]
    BadTable(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AliceConfig {
    pub mu: f64,
    pub slot_period_ns: f64,
    pub misalignment_deg: f64,
    pub wavelength_nm: f64,
}

impl Default for AliceConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            slot_period_ns: 200.0,
            misalignment_deg: 0.0,
            wavelength_nm: crate::optics::DEFAULT_WAVELENGTH_NM,
        }
    }
}

impl AliceConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mu > 0.0 && self.mu < 1.0) {
            v.push(format!("alice.mu must be in (0, 1), got {}", self.mu));
        }
        if !(self.slot_period_ns > 0.0) {
            v.push(format!("alice.slot_period_ns must be > 0, got {}", self.slot_period_ns));
        }
        if !self.misalignment_deg.is_finite() {
            v.push("alice.misalignment_deg must be finite".into());
        }
        if !(self.wavelength_nm > 0.0) {
            v.push(format!("alice.wavelength_nm must be > 0, got {}", self.wavelength_nm));
        }
        v
    }
}

/// Weak coherent pulse encoding `state`. The photon number is left unsampled.
pub fn alice_prepare(slot: u64, state: BasisBit, config: &AliceConfig) -> Pulse {
    let pol = bb84_polarization(state).rotated(config.misalignment_deg);
    Pulse::quantum(slot, config.mu, pol).with_wavelength(config.wavelength_nm)
}

/// Reflectivity of Bob's basis-selecting beam splitter versus wavelength.
/// The reflected port feeds the basis-1 arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSplitterCurve {
    /// `(wavelength_nm, reflectivity)` with strictly increasing wavelengths.
    pub points: Vec<(f64, f64)>,
    /// Set when the shape between measured points is a modeling choice.
    #[serde(default)]
    pub synthetic: bool,
}

impl BeamSplitterCurve {
    pub fn new(points: Vec<(f64, f64)>, synthetic: bool) -> Result<Self, EndpointError> {
        let curve = Self { points, synthetic };
        let v = curve.violations();
        if v.is_empty() {
            Ok(curve)
        } else {
            Err(EndpointError::BadTable(v.join("; ")))
        }
    }

    /// Flat 50/50 splitter over the telecom bands.
    pub fn symmetric() -> Self {
        Self { points: vec![(1200.0, 0.5), (1700.0, 0.5)], synthetic: false }
    }

    /// Fused-fiber splitter with R(1290 nm)=0.003 and R(1470 nm)=0.986 and a
    /// balanced 50/50 response at 1550 nm. Values in between are interpolated.
    pub fn wavelength_dependent() -> Self {
        Self {
            points: vec![
                (1260.0, 0.003),
                (1290.0, 0.003),
                (1380.0, 0.5),
                (1470.0, 0.986),
                (1510.0, 0.75),
                (1550.0, 0.5),
                (1625.0, 0.5),
            ],
            synthetic: true,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.points.len() < 2 {
            v.push("beam-splitter curve needs at least two points".into());
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                v.push(format!("beam-splitter wavelengths not increasing at {} nm", w[1].0));
            }
        }
        for &(l, r) in &self.points {
            if !(0.0..=1.0).contains(&r) || !l.is_finite() {
                v.push(format!("beam-splitter point ({l}, {r}) out of range"));
            }
        }
        v
    }

    /// Linear interpolation; errors outside the tabulated support.
    pub fn reflectivity(&self, wavelength_nm: f64) -> Result<f64, EndpointError> {
        let (lo, hi) = (self.points[0].0, self.points[self.points.len() - 1].0);
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(EndpointError::Extrapolation { wavelength_nm, lo, hi });
        }
        let idx = self.points.partition_point(|p| p.0 <= wavelength_nm);
        if idx == self.points.len() {
            return Ok(self.points[idx - 1].1);
        }
        let (l0, r0) = self.points[idx - 1];
        let (l1, r1) = self.points[idx];
        let w = (wavelength_nm - l0) / (l1 - l0);
        Ok(r0 + w * (r1 - r0))
    }

    pub fn transmittivity(&self, wavelength_nm: f64) -> Result<f64, EndpointError> {
        Ok(1.0 - self.reflectivity(wavelength_nm)?)
    }

    /// Parse a two-column `wavelength_nm reflectivity` table. Blank lines and
    /// `#` comments are skipped; commas also separate columns.
    pub fn from_table(text: &str) -> Result<Self, EndpointError> {
        let points = parse_two_column(text).map_err(EndpointError::BadTable)?;
        Self::new(points, false)
    }

    pub fn load(path: &Path) -> Result<Self, EndpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EndpointError::BadTable(format!("{}: {e}", path.display())))?;
        Self::from_table(&text)
    }
}

pub(crate) fn parse_two_column(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected 2 columns, got {}", lineno + 1, cols.len()));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1));
        out.push((parse(cols[0])?, parse(cols[1])?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverScheme {
    ActiveTwoDetector,
    PassiveFourDetector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BobConfig {
    pub scheme: ReceiverScheme,
    /// Required for the passive scheme.
    pub bs_curve: Option<BeamSplitterCurve>,
    pub modulator_misalignment_deg: f64,
    /// Lumped insertion loss of the receiver optics, as a transmission factor.
    pub internal_transmission: f64,
}

impl Default for BobConfig {
    fn default() -> Self {
        Self {
            scheme: ReceiverScheme::ActiveTwoDetector,
            bs_curve: None,
            modulator_misalignment_deg: 0.0,
            internal_transmission: 1.0,
        }
    }
}

impl BobConfig {
    pub fn passive(curve: BeamSplitterCurve) -> Self {
        Self { scheme: ReceiverScheme::PassiveFourDetector, bs_curve: Some(curve), ..Self::default() }
    }

    pub fn detector_count(&self) -> usize {
        match self.scheme {
            ReceiverScheme::ActiveTwoDetector => 2,
            ReceiverScheme::PassiveFourDetector => 4,
        }
    }

    /// Detector index behind `port` (the bit it reads) of the `basis` analyzer.
    pub fn detector_for(&self, basis: Basis, port: u8) -> usize {
        match self.scheme {
            ReceiverScheme::ActiveTwoDetector => usize::from(port),
            ReceiverScheme::PassiveFourDetector => 2 * usize::from(basis.index()) + usize::from(port),
        }
    }

    /// Bit value read by each detector.
    pub fn detector_bit(&self, detector: usize) -> u8 {
        (detector % 2) as u8
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.internal_transmission > 0.0 && self.internal_transmission <= 1.0) {
            v.push(format!(
                "bob.internal_transmission must be in (0, 1], got {}",
                self.internal_transmission
            ));
        }
        if !self.modulator_misalignment_deg.is_finite() {
            v.push("bob.modulator_misalignment_deg must be finite".into());
        }
        match (&self.scheme, &self.bs_curve) {
            (ReceiverScheme::PassiveFourDetector, None) => {
                v.push("bob.bs_curve is required for the passive scheme".into())
            }
            (_, Some(c)) => v.extend(c.violations().into_iter().map(|s| format!("bob.{s}"))),
            _ => {}
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisChoice {
    Active(Basis),
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Routing {
    pub measure_basis: Basis,
    /// Mean photons after the receiver's internal loss.
    pub delivered_mean_photons: f64,
    /// Split of `delivered_mean_photons` onto the bit-0 and bit-1 ports.
    pub port_mean_photons: [f64; 2],
}

/// Route one pulse through Bob's basis selection and analyzer.
pub fn bob_route<R: Rng + ?Sized>(
    pulse: &Pulse,
    config: &BobConfig,
    choice: BasisChoice,
    rng: &mut R,
) -> Result<Routing, EndpointError> {
    let (basis, analyzer) = match (config.scheme, choice) {
        (ReceiverScheme::ActiveTwoDetector, BasisChoice::Active(b)) => {
            (b, b.analyzer_deg() + config.modulator_misalignment_deg)
        }
        (ReceiverScheme::ActiveTwoDetector, BasisChoice::Passive) => return Err(EndpointError::MissingBasis),
        (ReceiverScheme::PassiveFourDetector, _) => {
            let b = passive_basis(pulse.wavelength_nm, config, rng)?;
            (b, b.analyzer_deg())
        }
    };
    Ok(analyze(pulse, config, basis, analyzer)?)
}

fn passive_basis<R: Rng + ?Sized>(
    wavelength_nm: f64,
    config: &BobConfig,
    rng: &mut R,
) -> Result<Basis, EndpointError> {
    let curve = config.bs_curve.as_ref().ok_or(EndpointError::MissingCurve)?;
    let r = curve.reflectivity(wavelength_nm)?;
    Ok(if rng.random::<f64>() < r { Basis::Diagonal } else { Basis::Rectilinear })
}

fn analyze(
    pulse: &Pulse,
    config: &BobConfig,
    basis: Basis,
    analyzer_deg: f64,
) -> Result<Routing, OpticsError> {
    let delivered = pulse.mean_photons * config.internal_transmission;
    let p0 = malus_probability(pulse.polarization.relative_to(analyzer_deg))?;
    let port0 = delivered * p0;
    Ok(Routing {
        measure_basis: basis,
        delivered_mean_photons: delivered,
        port_mean_photons: [port0, delivered - port0],
    })
}

/// Deterministic per-detector share of unpolarized CW light entering Bob.
pub fn cw_split(config: &BobConfig, power_mw: f64) -> Vec<f64> {
    let n = config.detector_count();
    vec![power_mw * config.internal_transmission / n as f64; n]
}
