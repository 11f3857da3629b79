use serde::{Deserialize, Serialize};

use super::{
    commit_deadline, fp_bits, roles, run_data_phase, run_fingerprint_phase, validate_fault_plan, CrashTiming,
    DataOutcome, FaultPlan, FpOutcome, ProtocolConfig, Regime, Role,
};
use crate::error::Result;
use crate::grid::{GridSpec, Network};
use crate::metrics::{awake_fraction, ratio_to_f64, EnergyLedger, LedgerPhase};

/// Per-node line of a run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub x: i64,
    pub y: i64,
    pub role: String,
    pub commit_time_fp: Option<u64>,
    pub commit_time_data: Option<u64>,
    /// Fault-free fingerprint commit deadline.
    pub fp_deadline: u64,
    pub awake_slots: u64,
    pub total_slots: u64,
    pub listened_bits: u64,
    pub sent_bits: u64,
    pub committed_ok: Option<bool>,
    pub ledger: EnergyLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub nodes: usize,
    pub correct_nodes: usize,
    /// Correct nodes that ended holding the dealer's message.
    pub delivered: usize,
    /// Any node (correct or not) that committed a different message.
    pub wrong_commits: usize,
    pub agreement: bool,
    pub t_init: u64,
    pub fp_quiet_at: u64,
    pub t_data: u64,
    pub end: u64,
    /// Correct nodes that locked the fingerprint after their fault-free deadline.
    pub late_fp_commits: usize,
    pub max_awake_fraction: f64,
    pub mean_awake_fraction: f64,
    pub max_data_awake_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: GridSpec,
    pub regime: Option<Regime>,
    pub config: ProtocolConfig,
    pub theta: usize,
    pub message_bytes: usize,
    pub fp_bits: u32,
    pub summary: RunSummary,
    pub nodes: Vec<NodeRecord>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct BroadcastRun {
    pub record: RunRecord,
    pub roles: Vec<Role>,
    pub fp: FpOutcome,
    pub data: DataOutcome,
    pub ledgers: Vec<EnergyLedger>,
}

/// Validates `plan`, then runs both phases on a fresh network.
///
/// An empty plan runs under the fail-stop threshold. Plans that break the
/// density rules are rejected with `Error::FaultPlan` before any step runs.
pub fn run_broadcast(spec: GridSpec, plan: &FaultPlan, message: &[u8], config: &ProtocolConfig) -> Result<BroadcastRun> {
    let regime = if plan.byzantine.is_empty() { Regime::FailStop } else { Regime::Byzantine };
    validate_fault_plan(plan, &spec, regime).into_result()?;
    let roles = roles(&spec, plan);
    let theta = config.threshold(&spec, plan.regime());

    let mut net = Network::new(spec);
    for (c, t) in &plan.failstop {
        if *t == CrashTiming::Start {
            net.fail_stop(*c);
        }
    }
    let fp = run_fingerprint_phase(&mut net, &roles, message, theta, config)?;
    for (c, t) in &plan.failstop {
        if *t == CrashTiming::AfterFingerprint {
            net.fail_stop(*c);
        }
    }
    for (i, b) in fp.bits_to_commit.iter().enumerate() {
        net.ledgers[i].fp_bits_to_commit = b.unwrap_or(0);
    }
    let data = run_data_phase(&mut net, &roles, &fp, message, config.data_order(plan.regime()), config)?;

    let ledgers = net.ledgers.clone();
    let mut nodes = Vec::with_capacity(spec.node_count());
    for (i, c) in spec.coords().enumerate() {
        let o = spec.offset(c);
        let l = ledgers[i];
        nodes.push(NodeRecord {
            x: c.x,
            y: c.y,
            role: roles[i].name(),
            commit_time_fp: fp.commits[i].map(|(_, t)| t),
            commit_time_data: data.commit_times[i],
            fp_deadline: commit_deadline(o.x, o.y, spec.r, fp.t_init),
            awake_slots: l.awake_slots,
            total_slots: l.total_slots(),
            listened_bits: l.listened_bits,
            sent_bits: l.sent_bits,
            committed_ok: data.committed_ok[i],
            ledger: l,
        });
    }
    let summary = summarize(&roles, &nodes, &ledgers, &fp, &data);
    let record = RunRecord {
        spec,
        regime: plan.regime(),
        config: *config,
        theta,
        message_bytes: message.len(),
        fp_bits: fp_bits(message.len() as u64 * 8),
        summary,
        nodes,
    };
    Ok(BroadcastRun {
        record,
        roles,
        fp,
        data,
        ledgers,
    })
}

fn summarize(roles: &[Role], nodes: &[NodeRecord], ledgers: &[EnergyLedger], fp: &FpOutcome, data: &DataOutcome) -> RunSummary {
    let correct: Vec<usize> = (0..roles.len()).filter(|&i| roles[i].is_correct()).collect();
    let delivered = correct.iter().filter(|&&i| nodes[i].committed_ok == Some(true)).count();
    let wrong_commits = nodes.iter().filter(|n| n.committed_ok == Some(false)).count();
    let late_fp_commits = correct
        .iter()
        .filter(|&&i| nodes[i].commit_time_fp.is_some_and(|t| t > nodes[i].fp_deadline))
        .count();
    let fractions: Vec<f64> = correct
        .iter()
        .map(|&i| ratio_to_f64(awake_fraction(&ledgers[i], LedgerPhase::Overall)))
        .collect();
    let max_data = correct
        .iter()
        .map(|&i| ratio_to_f64(awake_fraction(&ledgers[i], LedgerPhase::Data)))
        .fold(0.0, f64::max);
    RunSummary {
        nodes: roles.len(),
        correct_nodes: correct.len(),
        delivered,
        wrong_commits,
        agreement: delivered == correct.len() && wrong_commits == 0,
        t_init: fp.t_init,
        fp_quiet_at: fp.quiet_at,
        t_data: data.t_data,
        end: data.end,
        late_fp_commits,
        max_awake_fraction: fractions.iter().copied().fold(0.0, f64::max),
        mean_awake_fraction: if fractions.is_empty() {
            0.0
        } else {
            fractions.iter().sum::<f64>() / fractions.len() as f64
        },
        max_data_awake_fraction: max_data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::grid::Coord;
    use crate::protocol::ByzantineMode;

    fn centered(w: usize, r: usize) -> GridSpec {
        let c = (w / 2) as i64;
        GridSpec::with_dealer(w, w, r, Coord::new(c, c)).unwrap()
    }

    #[test]
    fn fault_free_run_delivers_within_deadlines() {
        let spec = centered(11, 1);
        let run = run_broadcast(spec, &FaultPlan::default(), b"grid payload", &ProtocolConfig::default()).unwrap();
        let s = &run.record.summary;
        assert!(s.agreement);
        assert_eq!(s.delivered, spec.node_count());
        assert_eq!(s.late_fp_commits, 0);
        for n in &run.record.nodes {
            assert!(n.commit_time_fp.unwrap() <= n.fp_deadline);
            assert!(n.commit_time_data.unwrap() >= s.t_data || (n.x, n.y) == (5, 5));
        }
    }

    #[test]
    fn data_phase_awake_only_for_listens_and_transmits() {
        let spec = centered(13, 2);
        let cfg = ProtocolConfig { k: 2, seed: 9, ..Default::default() };
        let run = run_broadcast(spec, &FaultPlan::default(), &[3u8; 40], &cfg).unwrap();
        for l in &run.ledgers {
            assert_eq!(l.data_awake_slots, l.data_listens + l.data_transmits);
            assert!(l.data_transmits <= (cfg.rebroadcasts * (cfg.k + 1)) as u64);
            // every fingerprint-phase slot is awake
            assert_eq!(l.fp_awake_slots, l.fp_phase_slots);
        }
    }

    #[test]
    fn wrong_data_neighbors_read_as_zeros() {
        let spec = centered(11, 1);
        let mut plan = FaultPlan::default();
        plan.byzantine.insert(Coord::new(7, 5), ByzantineMode::WrongData);
        plan.byzantine.insert(Coord::new(2, 9), ByzantineMode::WrongData);
        let run = run_broadcast(spec, &plan, b"the real message", &ProtocolConfig::default()).unwrap();
        assert!(run.record.summary.agreement);
        assert_eq!(run.record.summary.wrong_commits, 0);
    }

    #[test]
    fn dense_plan_is_rejected_before_running() {
        let spec = centered(9, 1);
        let mut plan = FaultPlan::default();
        for (x, y) in [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)] {
            plan.failstop.insert(Coord::new(x, y), CrashTiming::Start);
        }
        let err = run_broadcast(spec, &plan, b"m", &ProtocolConfig::default()).unwrap_err();
        assert!(matches!(err, Error::FaultPlan(_)));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = centered(9, 1);
        let cfg = ProtocolConfig { k: 1, seed: 42, ..Default::default() };
        let a = run_broadcast(spec, &FaultPlan::default(), b"same", &cfg).unwrap();
        let b = run_broadcast(spec, &FaultPlan::default(), b"same", &cfg).unwrap();
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn record_serializes_to_json() {
        let spec = centered(7, 1);
        let run = run_broadcast(spec, &FaultPlan::default(), b"json", &ProtocolConfig::default()).unwrap();
        let text = serde_json::to_string(&run.record).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, run.record);
    }
}
