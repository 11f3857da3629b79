//! Reliable broadcast with bit reduction.
//!
//! The dealer's fingerprint and start time spread first with COMMIT/HEARD
//! attestations; every node then treats the schedule-ordered set of its
//! attesting neighbors as a Bad Santa stream and samples it for the full
//! message, which it accepts only if it hashes to the locked fingerprint.
//!
//! The two phases run back to back. The data phase starts at the first
//! dealer slot `t_data` after the fingerprint phase falls quiet. Each node
//! gets a first data slot from a [`DataOrder`], reads only attesters whose
//! first slot precedes its own, and repeats its transmissions once per
//! sampling round at a fixed spacing. Under [`DataOrder::Announce`] the
//! first slots replay the order in which nodes announced their COMMIT.

mod data_phase;
pub mod fault;
pub mod fingerprint;
mod fp_phase;
mod run;

pub use data_phase::{run_data_phase, DataOutcome};
pub use fault::{
    generate_max_plan, parse_scenario, t_max, validate_fault_plan, ByzantineMode, CrashTiming, FaultPlan,
    Regime, Scenario, ValidationReport,
};
pub use fingerprint::{fingerprint, fp_bits, Fingerprint};
pub use fp_phase::{run_fingerprint_phase, FpOutcome};
pub use run::{run_broadcast, BroadcastRun, NodeRecord, RunRecord, RunSummary};

use serde::{Deserialize, Serialize};

use crate::grid::{Coord, GridSpec, SlotSchedule};
use crate::stream::Strategy;

/// Bits used to carry `t_init` on the wire.
pub const T_INIT_BITS: u64 = 32;
/// Bits of the record-kind tag.
pub const KIND_BITS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Preliminary sampling rounds; 0 selects the single-round sampler.
    pub k: usize,
    /// Data transmissions per node when `k + 1` is smaller.
    pub rebroadcasts: usize,
    /// Attestation threshold override.
    pub theta: Option<usize>,
    /// Data-phase transmission order override.
    pub order: Option<DataOrder>,
    pub seed: u64,
}

/// How data transmissions and streams are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataOrder {
    /// A node first transmits at its first slot after
    /// `t_data + P (dx² + dy²)`, with offsets from the dealer.
    Distance,
    /// Data slots replay the COMMIT announce order, shifted by
    /// `t_data - t_init`.
    Announce,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            k: 0,
            rebroadcasts: 2,
            theta: None,
            order: None,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    /// Attestations needed to lock a fingerprint: one more than the number
    /// of nodes per neighborhood that may lie.
    pub fn threshold(&self, spec: &GridSpec, regime: Option<Regime>) -> usize {
        self.theta.unwrap_or(match regime {
            Some(Regime::Byzantine) => t_max(spec.r) + 1,
            _ => 1,
        })
    }

    pub fn data_order(&self, regime: Option<Regime>) -> DataOrder {
        self.order.unwrap_or(match regime {
            Some(Regime::Byzantine) => DataOrder::Distance,
            _ => DataOrder::Announce,
        })
    }

    pub fn strategy(&self) -> Strategy {
        if self.k == 0 {
            Strategy::SingleRound
        } else {
            Strategy::MultiRound { rounds: self.k + 1 }
        }
    }

    /// Data transmissions each node makes.
    pub fn transmissions(&self) -> usize {
        self.rebroadcasts.max(self.k + 1).max(1)
    }
}

/// Latest step by which `(x, y)` (dealer offsets) commits to the fingerprint
/// in a fault-free grid: `t_init + 2(2r+1)²(|x|+|y|−r)`, never before `t_init`.
pub fn commit_deadline(x: i64, y: i64, r: usize, t_init: u64) -> u64 {
    let period = ((2 * r + 1) * (2 * r + 1)) as i64;
    let extra = 2 * period * (x.abs() + y.abs() - r as i64);
    t_init + extra.max(0) as u64
}

/// First own slot of `(x, y)` (dealer offsets) at or after
/// `t_init + 2(2r+1)²(|x|+|y|+r) + 1`.
pub fn data_wait_gate(x: i64, y: i64, r: usize, t_init: u64, schedule: &SlotSchedule, absolute: Coord) -> u64 {
    let period = ((2 * r + 1) * (2 * r + 1)) as u64;
    let earliest = t_init + 2 * period * (x.unsigned_abs() + y.unsigned_abs() + r as u64) + 1;
    schedule.next_turn(absolute, earliest)
}

/// What a node does in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Honest,
    Crash(CrashTiming),
    Byzantine(ByzantineMode),
}

impl Role {
    /// Follows the protocol through the fingerprint phase.
    pub fn honest_in_fp(self) -> bool {
        matches!(
            self,
            Role::Honest | Role::Crash(CrashTiming::AfterFingerprint) | Role::Byzantine(ByzantineMode::WrongData)
        )
    }

    /// Must end the run holding the dealer's message.
    pub fn is_correct(self) -> bool {
        self == Role::Honest
    }

    pub fn name(self) -> String {
        match self {
            Role::Honest => "honest".into(),
            Role::Crash(CrashTiming::Start) => "failstop".into(),
            Role::Crash(CrashTiming::AfterFingerprint) => "failstop-late".into(),
            Role::Byzantine(m) => format!("byzantine-{m}"),
        }
    }
}

pub fn roles(spec: &GridSpec, plan: &FaultPlan) -> Vec<Role> {
    spec.coords()
        .map(|c| {
            if let Some(t) = plan.failstop.get(&c) {
                Role::Crash(*t)
            } else if let Some(m) = plan.byzantine.get(&c) {
                Role::Byzantine(*m)
            } else {
                Role::Honest
            }
        })
        .collect()
}

/// Identifier of a `(fingerprint, t_init)` pair in a run's value table.
pub type ValueId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FpValue {
    pub fingerprint: Fingerprint,
    pub t_init: u64,
}

/// Wire records. Fingerprint records refer to the run's value table; their
/// size is charged as if the fingerprint and `t_init` were carried inline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// The dealer's initial `(h(m), t_init)`.
    Initial { value: ValueId },
    CommitFp { sender: usize, value: ValueId },
    HeardFp { sender: usize, witness: usize, value: ValueId },
    CommitData { sender: usize, message: std::sync::Arc<Vec<u8>> },
}

/// Everything one node sends in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Frame {
    pub records: Vec<ProtocolMessage>,
}

/// Bits needed for a node identifier in a grid of `nodes` nodes.
pub fn id_bits(nodes: usize) -> u64 {
    (usize::BITS - nodes.saturating_sub(1).leading_zeros()).max(1) as u64
}

impl Frame {
    /// Size on the wire: a header with the sender id, then one group per
    /// distinct value (fingerprint, `t_init`, commit flag, witness count and
    /// witness ids), then any data payloads.
    pub fn bit_len(&self, fp_bits: u64, ids: u64) -> u64 {
        let mut groups: Vec<ValueId> = Vec::new();
        let mut bits = KIND_BITS + ids;
        for rec in &self.records {
            match rec {
                ProtocolMessage::Initial { value } | ProtocolMessage::CommitFp { value, .. } => {
                    if !groups.contains(value) {
                        groups.push(*value);
                    }
                }
                ProtocolMessage::HeardFp { value, .. } => {
                    if !groups.contains(value) {
                        groups.push(*value);
                    }
                    bits += ids;
                }
                ProtocolMessage::CommitData { message, .. } => bits += message.len() as u64 * 8,
            }
        }
        bits + groups.len() as u64 * (fp_bits + T_INIT_BITS + 1 + ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_schedule;

    #[test]
    fn deadline_examples() {
        assert_eq!(commit_deadline(2, 1, 1, 0), 36);
        assert_eq!(commit_deadline(1, 0, 1, 5), 5);
        assert_eq!(commit_deadline(1, 1, 1, 5), 23);
        assert_eq!(commit_deadline(10, 0, 3, 100), 786);
        assert_eq!(commit_deadline(-2, -1, 1, 0), 36);
    }

    #[test]
    fn gate_examples() {
        let spec = GridSpec::new(9, 9, 1).unwrap();
        let s = build_schedule(&spec);
        let c = Coord::new(1, 1);
        assert_eq!(data_wait_gate(1, 1, 1, 0, &s, c), 58);
        // a dealer neighbor still waits out the full gate
        let c = Coord::new(1, 0);
        assert!(data_wait_gate(1, 0, 1, 0, &s, c) > 2 * 9 * 2);
    }

    #[test]
    fn gate_after_every_neighbor_deadline() {
        let spec = GridSpec::new(20, 20, 2).unwrap();
        let s = build_schedule(&spec);
        for q in spec.coords() {
            let gate = data_wait_gate(q.x, q.y, 2, 7, &s, q);
            for nb in spec.neighborhood(q) {
                assert!(gate >= commit_deadline(nb.x, nb.y, 2, 7));
            }
        }
    }

    #[test]
    fn frame_size() {
        let f = Frame {
            records: vec![
                ProtocolMessage::CommitFp { sender: 1, value: 0 },
                ProtocolMessage::HeardFp {
                    sender: 1,
                    witness: 2,
                    value: 0,
                },
                ProtocolMessage::HeardFp {
                    sender: 1,
                    witness: 3,
                    value: 7,
                },
            ],
        };
        // header 2 + 4, two groups of 32 + 32 + 1 + 4, two witnesses of 4
        assert_eq!(f.bit_len(32, 4), 6 + 2 * 69 + 8);
        assert_eq!(id_bits(16), 4);
        assert_eq!(id_bits(17), 5);
        assert_eq!(id_bits(1), 1);
    }
}
