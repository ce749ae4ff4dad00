//! Slot-based Monte Carlo simulator of a BB84 link with gated SPAD
//! receivers, a pluggable eavesdropper and detector-side countermeasures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod calibration;
pub mod countermeasures;
pub mod detectors;
pub mod endpoints;
pub mod harness;
pub mod optics;
pub mod postprocessing;
pub mod rng;
pub mod session;
