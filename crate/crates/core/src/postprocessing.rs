//! Classical post-processing: sifting, parameter estimation, the abort
//! rule, reconciliation leakage and Toeplitz privacy amplification.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationResult;
use crate::optics::Basis;
use crate::rng::SimRng;
use crate::session::SessionLog;

#[derive(Debug, Error, PartialEq)]
pub enum PostError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("parameter-estimation sample is empty")]
    EmptySample,
    #[error("sample fraction {0} outside (0, 0.5]")]
    SampleFraction(f64),
    #[error("cannot reconcile at estimated QBER {0} >= 0.5")]
    Unreconcilable(f64),
    #[error("keys of different length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Shannon entropy of a biased coin, in bits.
pub fn binary_entropy(p: f64) -> Result<f64, PostError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PostError::Domain(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub q_abort: f64,
    pub delta_abort: f64,
    /// Theoretical QBER limit, reported only.
    pub q_l: f64,
    /// Eve's key fraction above which an unnoticed attack counts as a breach.
    pub negligible_eve_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { q_abort: 0.08, delta_abort: 0.15, q_l: 0.11, negligible_eve_fraction: 0.01 }
    }
}

impl Thresholds {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.q_abort > 0.0 && self.q_abort <= self.q_l && self.q_l < 0.5) {
            v.push(format!(
                "thresholds must satisfy 0 < q_abort <= q_l < 0.5, got q_abort={} q_l={}",
                self.q_abort, self.q_l
            ));
        }
        if !(self.delta_abort > 0.0) {
            v.push(format!("thresholds.delta_abort must be > 0, got {}", self.delta_abort));
        }
        if !(0.0..1.0).contains(&self.negligible_eve_fraction) {
            v.push("thresholds.negligible_eve_fraction must be in [0, 1)".into());
        }
        v
    }
}

/// Bits stored one per byte.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|b| *b <= 1));
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn mismatches(&self, other: &BitString) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Pack MSB-first into bytes, zero-padding the tail.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, b)| acc | (b << (7 - i)))).collect()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    fn words(&self) -> Vec<u64> {
        let mut w = vec![0u64; self.0.len().div_ceil(64)];
        for (i, b) in self.0.iter().enumerate() {
            w[i / 64] |= u64::from(*b) << (i % 64);
        }
        w
    }
}

/// One party's public basis and private bit for a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartyView {
    pub slot: u64,
    pub basis: Basis,
    pub bit: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiftedKey {
    pub alice: BitString,
    pub bob: BitString,
    pub kept_slots: Vec<u64>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.kept_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_slots.is_empty()
    }
}

/// Keep slots where both parties hold a bit and announced the same basis.
pub fn sift_views(first: &[PartyView], second: &[PartyView]) -> SiftedKey {
    let mut out = SiftedKey::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (x, y) in first.iter().zip(second) {
        debug_assert_eq!(x.slot, y.slot);
        if let (Some(bx), Some(by)) = (x.bit, y.bit) {
            if x.basis == y.basis {
                a.push(bx);
                b.push(by);
                out.kept_slots.push(x.slot);
            }
        }
    }
    out.alice = BitString::new(a);
    out.bob = BitString::new(b);
    out
}

pub fn party_views(session: &SessionLog) -> (Vec<PartyView>, Vec<PartyView>) {
    session
        .records
        .iter()
        .map(|r| {
            (
                PartyView { slot: r.slot, basis: r.alice.basis, bit: Some(r.alice.bit) },
                PartyView { slot: r.slot, basis: r.bob_basis, bit: r.bob_bit },
            )
        })
        .unzip()
}

pub fn sift(session: &SessionLog) -> SiftedKey {
    let (a, b) = party_views(session);
    sift_views(&a, &b)
}

/// What Bob expects of his detection rate absent an attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub slots: u64,
    pub clicked_slots: u64,
    pub mu: f64,
    pub eta_nominal: f64,
    /// Receiver-side transmission (internal optics times watchdog share).
    pub receiver_transmission: f64,
    pub dark_prob: f64,
    /// Detectors gated per slot.
    pub gates_per_slot: u32,
    pub expected_transmittance: f64,
}

/// Channel transmittance that explains the observed click rate.
pub fn transmittance_estimate(rate: &RateModel) -> f64 {
    if rate.slots == 0 {
        return 0.0;
    }
    let p_obs = rate.clicked_slots as f64 / rate.slots as f64;
    let no_dark = (1.0 - rate.dark_prob).powi(rate.gates_per_slot as i32);
    let p_sig = (1.0 - (1.0 - p_obs) / no_dark).clamp(0.0, 1.0 - 1e-15);
    -(1.0 - p_sig).ln() / (rate.mu * rate.eta_nominal * rate.receiver_transmission)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub qber: f64,
    pub t_est: f64,
    pub delta: f64,
    pub sample_size: usize,
    pub sample_errors: usize,
}

/// Disclose a random sample of the sifted key, estimate QBER on it and the
/// transmittance from the click rate. Returns the undisclosed remainder.
pub fn estimate_parameters<R: Rng + ?Sized>(
    sifted: &SiftedKey,
    rate: &RateModel,
    sample_fraction: f64,
    rng: &mut R,
) -> Result<(Estimate, SiftedKey), PostError> {
    if !(sample_fraction > 0.0 && sample_fraction <= 0.5) {
        return Err(PostError::SampleFraction(sample_fraction));
    }
    let n = sifted.len();
    let k = ((n as f64) * sample_fraction).round() as usize;
    if k == 0 {
        return Err(PostError::EmptySample);
    }
    let mut disclosed = vec![false; n];
    for i in sample(rng, n, k).into_iter() {
        disclosed[i] = true;
    }
    let (a, b) = (sifted.alice.bits(), sifted.bob.bits());
    let mut errors = 0;
    let mut rest = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        if disclosed[i] {
            errors += usize::from(a[i] != b[i]);
        } else {
            rest.0.push(a[i]);
            rest.1.push(b[i]);
            rest.2.push(sifted.kept_slots[i]);
        }
    }
    let t_est = transmittance_estimate(rate);
    let t = rate.expected_transmittance;
    let estimate = Estimate {
        qber: errors as f64 / k as f64,
        t_est,
        delta: (t_est - t).abs() / t,
        sample_size: k,
        sample_errors: errors,
    };
    let remaining =
        SiftedKey { alice: BitString::new(rest.0), bob: BitString::new(rest.1), kept_slots: rest.2 };
    Ok((estimate, remaining))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    Qber,
    Transmittance,
    QberAndTransmittance,
    WatchdogAlarm,
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Abort(AbortReason),
}

pub fn abort_decision(qber: f64, delta: f64, thresholds: &Thresholds) -> Decision {
    let q = qber > thresholds.q_abort;
    let d = delta >= thresholds.delta_abort;
    match (q, d) {
        (false, false) => Decision::Continue,
        (true, false) => Decision::Abort(AbortReason::Qber),
        (false, true) => Decision::Abort(AbortReason::Transmittance),
        (true, true) => Decision::Abort(AbortReason::QberAndTransmittance),
    }
}

/// Ideal reconciliation: Bob ends up with Alice's key and the exchange is
/// charged `f_ec * h(q) * n` disclosed bits.
pub fn error_correct(
    alice: &BitString,
    bob: &BitString,
    qber_estimate: f64,
    f_ec: f64,
) -> Result<(BitString, BitString, f64), PostError> {
    if alice.len() != bob.len() {
        return Err(PostError::LengthMismatch(alice.len(), bob.len()));
    }
    if !(qber_estimate < 0.5) {
        return Err(PostError::Unreconcilable(qber_estimate));
    }
    let leak = f_ec * binary_entropy(qber_estimate)? * alice.len() as f64;
    Ok((alice.clone(), alice.clone(), leak))
}

/// `max(0, n (1 - h(q)) - leak - margin)`, rounded down.
pub fn final_key_length(
    n: usize,
    qber: f64,
    ec_leak_bits: f64,
    margin_bits: f64,
) -> Result<usize, PostError> {
    let r = n as f64 * (1.0 - binary_entropy(qber)?) - ec_leak_bits - margin_bits;
    Ok(if r > 0.0 { r.floor() as usize } else { 0 })
}

/// Multiply `key` by a random `out_len x n` Toeplitz matrix over GF(2).
/// Entry `(i, j)` is `s[i - j + n - 1]` for a seeded bit string `s`.
pub fn toeplitz_hash(key: &BitString, out_len: usize, seed: u64) -> BitString {
    let n = key.len();
    if n == 0 || out_len == 0 {
        return BitString::default();
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let diag_bits = n + out_len - 1;
    let mut s = vec![0u64; diag_bits.div_ceil(64) + 1];
    for w in s.iter_mut() {
        *w = rng.next_u64();
    }
    // row i . key = sum_m s[i + m] * key[n - 1 - m]
    let reversed = BitString::new(key.bits().iter().rev().copied().collect()).words();
    let tail_mask = if n.is_multiple_of(64) { u64::MAX } else { (1u64 << (n % 64)) - 1 };
    let window = |start: usize, w: usize| -> u64 {
        let bit = start + 64 * w;
        let (q, r) = (bit / 64, bit % 64);
        if r == 0 {
            s[q]
        } else {
            (s[q] >> r) | (s.get(q + 1).copied().unwrap_or(0) << (64 - r))
        }
    };
    let last = reversed.len() - 1;
    let out = (0..out_len)
        .map(|i| {
            let mut acc = 0u32;
            for (w, kw) in reversed.iter().enumerate() {
                let mut x = window(i, w) & kw;
                if w == last {
                    x &= tail_mask;
                }
                acc ^= x.count_ones() & 1;
            }
            acc as u8
        })
        .collect();
    BitString::new(out)
}

pub fn privacy_amplify(
    key: &BitString,
    ec_leak_bits: f64,
    qber: f64,
    security_margin_bits: f64,
    seed: u64,
) -> Result<BitString, PostError> {
    let r = final_key_length(key.len(), qber, ec_leak_bits, security_margin_bits)?;
    Ok(toeplitz_hash(key, r, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub scenario: String,
    pub attack: String,
    pub seed: u64,
    pub slots: u64,
    pub clicked_slots: u64,
    pub sifted_len: usize,
    pub sample_size: usize,
    pub qber: f64,
    pub t_est: f64,
    pub delta: f64,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub ec_leak_bits: f64,
    pub final_key_len: usize,
    pub eve_certain_fraction: f64,
    pub eve_guess_adjusted: f64,
    pub breach: bool,
    pub detector_clicks: Vec<u64>,
    pub watchdog_alarms: u64,
    pub attacked_slots: u64,
    pub alarmed_attacked_slots: u64,
    pub calibration: Option<CalibrationResult>,
}

impl ProtocolReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report is always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.11).unwrap(), 0.499916, epsilon = 1e-6);
        assert_abs_diff_eq!(binary_entropy(0.05).unwrap(), 0.28640, epsilon = 5e-6);
        assert_eq!(binary_entropy(1.1), Err(PostError::Domain(1.1)));
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn abort_examples() {
        let t = Thresholds::default();
        assert_eq!(abort_decision(0.05, 0.05, &t), Decision::Continue);
        assert_eq!(abort_decision(0.09, 0.05, &t), Decision::Abort(AbortReason::Qber));
        assert_eq!(abort_decision(0.05, 0.15, &t), Decision::Abort(AbortReason::Transmittance));
        assert_eq!(abort_decision(0.08, 0.1499, &t), Decision::Continue);
    }

    #[test]
    fn leakage_examples() {
        let k = BitString::new(vec![0; 10_000]);
        let (_, _, leak) = error_correct(&k, &k, 0.0, 1.1).unwrap();
        assert_eq!(leak, 0.0);
        let (a, b, leak) = error_correct(&k, &BitString::new(vec![1; 10_000]), 0.05, 1.0).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(leak, 2864.0, epsilon = 0.5);
        assert!(error_correct(&k, &k, 0.5, 1.0).is_err());
    }

    #[test]
    fn toeplitz_matches_naive_product() {
        let mut rng = RngStreams::new(9).stream("t");
        for (n, r) in [(1, 1), (7, 3), (64, 64), (65, 10), (200, 130), (129, 1)] {
            let key = BitString::new((0..n).map(|_| rng.random_range(0..2u8)).collect());
            let fast = toeplitz_hash(&key, r, 42);
            let mut srng = SimRng::seed_from_u64(42);
            let words: Vec<u64> = (0..(n + r - 1).div_ceil(64) + 1).map(|_| srng.next_u64()).collect();
            let sbit = |k: usize| ((words[k / 64] >> (k % 64)) & 1) as u8;
            for i in 0..r {
                let mut acc = 0u8;
                for j in 0..n {
                    acc ^= sbit(i + n - 1 - j) & key.bits()[j];
                }
                assert_eq!(fast.bits()[i], acc, "n={n} r={r} i={i}");
            }
        }
    }

    #[test]
    fn amplification_lengths() {
        let key = BitString::new(vec![1, 0, 1, 1, 0, 0, 1, 0]);
        assert_eq!(privacy_amplify(&key, 0.0, 0.0, 0.0, 3).unwrap().len(), 8);
        assert_eq!(privacy_amplify(&key, 0.0, 0.0, 0.0, 3), privacy_amplify(&key, 0.0, 0.0, 0.0, 3));
        assert_eq!(final_key_length(1000, 0.2, 800.0, 0.0).unwrap(), 0);
    }

    #[test]
    fn hex_export() {
        assert_eq!(BitString::new(vec![1, 0, 1, 0, 1, 1, 1, 1, 1]).to_hex(), "af80");
    }

    #[test]
    fn estimation_removes_sample() {
        let n = 1000;
        let sifted = SiftedKey {
            alice: BitString::new(vec![0; n]),
            bob: BitString::new((0..n).map(|i| u8::from(i % 10 == 0)).collect()),
            kept_slots: (0..n as u64).collect(),
        };
        let rate = RateModel {
            slots: 10_000,
            clicked_slots: 1000,
            mu: 0.5,
            eta_nominal: 1.0,
            receiver_transmission: 1.0,
            dark_prob: 0.0,
            gates_per_slot: 2,
            expected_transmittance: 0.2107210313156526,
        };
        let mut rng = RngStreams::new(1).stream("s");
        let (est, rest) = estimate_parameters(&sifted, &rate, 0.2, &mut rng).unwrap();
        assert_eq!(est.sample_size, 200);
        assert_eq!(rest.len(), 800);
        assert!(est.delta < 1e-9, "{est:?}");
        assert!((est.qber - 0.1).abs() < 0.06);
        let empty = SiftedKey::default();
        assert_eq!(estimate_parameters(&empty, &rate, 0.2, &mut rng), Err(PostError::EmptySample));
    }
}
