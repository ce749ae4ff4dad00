//! Per-slot transcript of one key exchange.

use serde::{Deserialize, Serialize};

use crate::adversary::EveRecord;
use crate::calibration::CalibrationResult;
use crate::detectors::{ClickCause, DamageReport};
use crate::optics::{Basis, BasisBit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub alice: BasisBit,
    pub bob_basis: Basis,
    /// Bit Bob records, if any detector fired.
    pub bob_bit: Option<u8>,
    /// Bitmask of detectors that fired.
    pub clicks: u8,
    /// Cause of the click that set `bob_bit`.
    pub cause: Option<ClickCause>,
    /// The recorded bit was randomized by bit-mapped gating.
    pub remapped: bool,
    pub eve: EveRecord,
    pub alarm: bool,
}

impl SlotRecord {
    pub fn double_click(&self) -> bool {
        self.clicks.count_ones() > 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<SlotRecord>,
    pub detector_clicks: Vec<u64>,
    /// Slots in which Bob's watchdog alarmed.
    pub watchdog_alarms: u64,
    pub alice_watchdog_alarms: u64,
    /// Alarms raised before the exchange started, e.g. by a damage beam.
    pub setup_alarms: u64,
    pub attacked_slots: u64,
    pub alarmed_attacked_slots: u64,
    pub calibration: Option<CalibrationResult>,
    pub damage: Vec<DamageReport>,
}

impl SessionLog {
    pub fn clicked_slots(&self) -> u64 {
        self.records.iter().filter(|r| r.clicks != 0).count() as u64
    }

    pub fn any_alarm(&self) -> bool {
        self.watchdog_alarms + self.alice_watchdog_alarms + self.setup_alarms > 0
    }
}
