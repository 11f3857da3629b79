//! Fingerprint phase: COMMIT/HEARD attestation until every correct node locks
//! the dealer's `(h(m), t_init)`.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fingerprint::{fingerprint, fingerprint_with_len};
use super::{id_bits, ByzantineMode, CrashTiming, FpValue, Frame, ProtocolConfig, ProtocolMessage, Role, ValueId};
use crate::error::{Error, Result};
use crate::grid::{Coord, GridSpec, Network, Phase, SlotProtocol};

/// Per-node result of the fingerprint phase.
#[derive(Debug, Clone)]
pub struct FpOutcome {
    pub t_init: u64,
    /// First step at which no correct node had anything left to send.
    pub quiet_at: u64,
    pub values: Vec<FpValue>,
    pub true_value: ValueId,
    /// The value equivocating nodes push.
    pub fake_value: ValueId,
    /// `(f_maj, commit step)` per node.
    pub commits: Vec<Option<(ValueId, u64)>>,
    /// Nodes that sent each node a COMMIT (or the dealer's initial frame)
    /// carrying that node's locked value.
    pub attesters: Vec<Vec<usize>>,
    pub bits_to_commit: Vec<Option<u64>>,
    /// Step at which each node broadcast its own COMMIT (the dealer: `t_init`).
    pub announced: Vec<Option<u64>>,
}

impl FpOutcome {
    pub fn f_maj(&self, node: usize) -> Option<&FpValue> {
        self.commits[node].map(|(v, _)| &self.values[v as usize])
    }
}

#[derive(Debug, Clone, Default)]
struct FpNode {
    committed: Option<(ValueId, u64)>,
    commit_from: BTreeMap<usize, ValueId>,
    heard: BTreeMap<(usize, usize), ValueId>,
    pending_commit: Option<ValueId>,
    pending_heard: Vec<(usize, ValueId)>,
    bits_heard: u64,
    bits_to_commit: Option<u64>,
    announced: Option<u64>,
    /// Records added since the last threshold check: value and endpoints.
    fresh: Vec<(ValueId, usize, usize)>,
    /// Per value, attestations whose endpoints lie in N(q), for each center
    /// `q` within 2r, indexed by offset from this node.
    inside: Vec<(ValueId, Vec<u16>)>,
    dirty: bool,
}

impl FpNode {
    fn has_pending(&self) -> bool {
        self.pending_commit.is_some() || !self.pending_heard.is_empty()
    }
}

struct FpPhase<'a> {
    spec: GridSpec,
    roles: &'a [Role],
    theta: usize,
    fp_bits: u64,
    ids: u64,
    dealer: usize,
    t_init: u64,
    values: Vec<FpValue>,
    fake_value: ValueId,
    nodes: Vec<FpNode>,
    dirty: Vec<usize>,
    rng: ChaCha8Rng,
    quiet: bool,
}

impl FpPhase<'_> {
    fn new_value(&mut self, value: FpValue) -> ValueId {
        self.values.push(value);
        (self.values.len() - 1) as ValueId
    }

    fn garbage_value(&mut self) -> ValueId {
        let mut bytes = [0u8; 32];
        self.rng.fill_bytes(&mut bytes);
        let value = FpValue {
            fingerprint: fingerprint_with_len(&bytes, self.fp_bits as u32),
            t_init: self.rng.gen(),
        };
        self.new_value(value)
    }

    fn commit(&mut self, node: usize, value: ValueId, step: u64) {
        let n = &mut self.nodes[node];
        n.committed = Some((value, step));
        n.pending_commit = Some(value);
        n.bits_to_commit = Some(n.bits_heard);
    }

    /// Whether `node` holds `theta` node-disjoint attestations for `value`
    /// whose endpoints all lie in one neighborhood N(q), for some `q` in
    /// `centers`.
    fn reaches_threshold(&self, node: usize, value: ValueId, centers: &[Coord]) -> bool {
        let st = &self.nodes[node];
        let commits: Vec<Coord> = st
            .commit_from
            .iter()
            .filter(|(_, v)| **v == value)
            .map(|(s, _)| self.spec.coord(*s))
            .collect();
        let heards: Vec<(Coord, Coord)> = st
            .heard
            .iter()
            .filter(|(_, v)| **v == value)
            .map(|((a, w), _)| (self.spec.coord(*a), self.spec.coord(*w)))
            .filter(|(a, w)| a != w)
            .collect();
        if commits.len() + heards.len() < self.theta {
            return false;
        }
        let r = self.spec.r as i64;
        let mut used: Vec<Coord> = Vec::with_capacity(2 * self.theta);
        for &q in centers {
            let inside = |c: &Coord| c.linf(q) <= r;
            let direct = commits.iter().filter(|c| inside(c)).count();
            if direct >= self.theta {
                return true;
            }
            used.clear();
            used.extend(commits.iter().copied().filter(inside));
            let mut paths = direct;
            for (a, w) in &heards {
                if inside(a) && inside(w) && !used.contains(a) && !used.contains(w) {
                    used.push(*a);
                    used.push(*w);
                    paths += 1;
                    if paths >= self.theta {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Counts the record `(a, w)` at every center whose neighborhood holds
    /// both endpoints, and pushes the centers that reach `theta` to `out`.
    /// Only such centers can have gained a path since the last check.
    fn count_record(&mut self, node: usize, value: ValueId, a: usize, w: usize, out: &mut Vec<(ValueId, Coord)>) {
        let r = self.spec.r as i64;
        let side = 4 * r + 1;
        let me = self.spec.coord(node);
        let (a, w) = (self.spec.coord(a), self.spec.coord(w));
        let (x0, x1) = ((a.x.max(w.x) - r).max(0), (a.x.min(w.x) + r).min(self.spec.width as i64 - 1));
        let (y0, y1) = ((a.y.max(w.y) - r).max(0), (a.y.min(w.y) + r).min(self.spec.height as i64 - 1));
        let theta = self.theta;
        let st = &mut self.nodes[node];
        let slot = match st.inside.iter().position(|(v, _)| *v == value) {
            Some(i) => i,
            None => {
                st.inside.push((value, vec![0; (side * side) as usize]));
                st.inside.len() - 1
            }
        };
        let counts = &mut st.inside[slot].1;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = ((y - me.y + 2 * r) * side + (x - me.x + 2 * r)) as usize;
                counts[i] += 1;
                if counts[i] as usize >= theta {
                    out.push((value, Coord::new(x, y)));
                }
            }
        }
    }
}

impl SlotProtocol for FpPhase<'_> {
    type Msg = Frame;

    fn transmit(&mut self, node: usize, step: u64) -> Option<(Frame, u64)> {
        if step < self.t_init {
            return None;
        }
        let mut records = Vec::new();
        match self.roles[node] {
            Role::Byzantine(ByzantineMode::Silent) | Role::Crash(CrashTiming::Start) => return None,
            Role::Byzantine(ByzantineMode::GarbageFp) => {
                if self.quiet {
                    return None;
                }
                let v = self.garbage_value();
                records.push(ProtocolMessage::CommitFp { sender: node, value: v });
                let me = self.spec.coord(node);
                let around: Vec<usize> = self.spec.neighborhood(me).map(|c| self.spec.index(c)).collect();
                for _ in 0..3 {
                    let witness = around[self.rng.gen_range(0..around.len())];
                    let value = self.garbage_value();
                    records.push(ProtocolMessage::HeardFp {
                        sender: node,
                        witness,
                        value,
                    });
                }
            }
            _ => {
                if node == self.dealer && step == self.t_init {
                    let (value, _) = self.nodes[node].committed.expect("dealer starts committed");
                    records.push(ProtocolMessage::Initial { value });
                }
                let st = &mut self.nodes[node];
                if let Some(value) = st.pending_commit.take() {
                    records.push(ProtocolMessage::CommitFp { sender: node, value });
                    st.announced.get_or_insert(step);
                }
                for (witness, value) in st.pending_heard.drain(..) {
                    records.push(ProtocolMessage::HeardFp {
                        sender: node,
                        witness,
                        value,
                    });
                }
            }
        }
        if records.is_empty() {
            return None;
        }
        let frame = Frame { records };
        let bits = frame.bit_len(self.fp_bits, self.ids);
        Some((frame, bits))
    }

    fn listening(&self, _node: usize, _step: u64) -> bool {
        true
    }

    fn receive(&mut self, node: usize, from: usize, frame: &Frame, bits: u64, step: u64) {
        let role = self.roles[node];
        let equivocating = role == Role::Byzantine(ByzantineMode::EquivocateFp);
        if !role.honest_in_fp() && !equivocating {
            return;
        }
        let fake = self.fake_value;
        let st = &mut self.nodes[node];
        st.bits_heard += bits;
        let mut direct = None;
        for rec in &frame.records {
            match *rec {
                ProtocolMessage::Initial { value } | ProtocolMessage::CommitFp { value, .. } => {
                    if matches!(rec, ProtocolMessage::Initial { .. }) && from == self.dealer {
                        direct = Some(value);
                    }
                    if st.commit_from.contains_key(&from) {
                        continue;
                    }
                    st.commit_from.insert(from, value);
                    st.pending_heard.push((from, if equivocating { fake } else { value }));
                    if st.committed.is_none() {
                        st.fresh.push((value, from, from));
                    }
                    st.dirty = true;
                }
                ProtocolMessage::HeardFp { witness, value, .. } => {
                    if st.committed.is_none() && !st.heard.contains_key(&(from, witness)) {
                        st.heard.insert((from, witness), value);
                        if from != witness {
                            st.fresh.push((value, from, witness));
                        }
                        st.dirty = true;
                    }
                }
                ProtocolMessage::CommitData { .. } => {}
            }
        }
        if st.dirty && st.committed.is_none() {
            self.dirty.push(node);
        }
        if let (Some(value), None, false) = (direct, st.committed, equivocating) {
            self.commit(node, value, step);
        }
    }

    fn end_step(&mut self, step: u64) {
        let mut dirty = std::mem::take(&mut self.dirty);
        dirty.sort_unstable();
        dirty.dedup();
        for node in dirty {
            self.nodes[node].dirty = false;
            if self.nodes[node].committed.is_some() || !self.roles[node].honest_in_fp() {
                continue;
            }
            let fresh = std::mem::take(&mut self.nodes[node].fresh);
            let mut checks = Vec::new();
            for &(v, a, w) in &fresh {
                self.count_record(node, v, a, w, &mut checks);
            }
            if checks.is_empty() {
                continue;
            }
            checks.sort_unstable();
            checks.dedup();
            let mut by_value: BTreeMap<ValueId, Vec<Coord>> = BTreeMap::new();
            for (v, q) in checks {
                by_value.entry(v).or_default().push(q);
            }
            if let Some(v) = by_value
                .iter()
                .find(|(v, qs)| self.reaches_threshold(node, **v, qs))
                .map(|(v, _)| *v)
            {
                self.commit(node, v, step);
            }
        }
        self.quiet = self
            .nodes
            .iter()
            .zip(self.roles)
            .all(|(n, role)| !n.has_pending() || !(role.honest_in_fp() || *role == Role::Byzantine(ByzantineMode::EquivocateFp)));
    }
}

/// Runs the fingerprint phase on `net` until it falls quiet.
///
/// Fails with `FingerprintPhaseStall` if some node that follows the protocol
/// through this phase never locks a value.
pub fn run_fingerprint_phase(
    net: &mut Network,
    roles: &[Role],
    message: &[u8],
    theta: usize,
    config: &ProtocolConfig,
) -> Result<FpOutcome> {
    let spec = net.spec;
    net.phase = Phase::Fingerprint;
    let dealer = spec.index(spec.dealer);
    let t_init = net.schedule.next_turn(spec.dealer, net.now());
    let fp_bits = super::fp_bits(message.len() as u64 * 8) as u64;
    let truth = FpValue {
        fingerprint: fingerprint(message),
        t_init,
    };
    let mut fake_msg = message.to_vec();
    fake_msg.push(0xA5);
    let fake = FpValue {
        fingerprint: fingerprint_with_len(&fake_msg, fp_bits as u32),
        t_init: t_init + 1,
    };
    let mut phase = FpPhase {
        spec,
        roles,
        theta: theta.max(1),
        fp_bits,
        ids: id_bits(spec.node_count()),
        dealer,
        t_init,
        values: vec![truth, fake],
        fake_value: 1,
        nodes: vec![FpNode::default(); spec.node_count()],
        dirty: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x6670_5f70_6861_7365),
        quiet: false,
    };
    phase.nodes[dealer].committed = Some((0, t_init));
    phase.nodes[dealer].bits_to_commit = Some(0);
    phase.nodes[dealer].announced = Some(t_init);
    for (i, role) in roles.iter().enumerate() {
        if *role == Role::Byzantine(ByzantineMode::EquivocateFp) {
            let me = spec.coord(i);
            let claims: Vec<(usize, ValueId)> = spec
                .neighborhood(me)
                .map(|c| spec.index(c))
                .filter(|&w| w != i)
                .map(|w| (w, 1))
                .collect();
            let st = &mut phase.nodes[i];
            st.committed = Some((1, t_init));
            st.pending_commit = Some(1);
            st.pending_heard = claims;
        }
    }

    let period = net.schedule.period;
    let horizon = t_init + 4 * period * (spec.width + spec.height + 2 * spec.r + 2) as u64;
    loop {
        net.step(&mut phase)?;
        if (phase.quiet && net.now() > t_init) || net.now() > horizon {
            break;
        }
    }

    let stalled: Vec<usize> = (0..spec.node_count())
        .filter(|&i| roles[i].honest_in_fp() && phase.nodes[i].committed.is_none())
        .collect();
    if let Some(&first) = stalled.first() {
        return Err(Error::FingerprintPhaseStall {
            stalled: stalled.len(),
            first: spec.coord(first),
        });
    }
    let commits: Vec<Option<(ValueId, u64)>> = phase
        .nodes
        .iter()
        .zip(roles)
        .map(|(n, role)| if role.honest_in_fp() { n.committed } else { None })
        .collect();
    let attesters = phase
        .nodes
        .iter()
        .zip(&commits)
        .map(|(n, c)| match c {
            Some((v, _)) => n.commit_from.iter().filter(|(_, x)| *x == v).map(|(s, _)| *s).collect(),
            None => Vec::new(),
        })
        .collect();
    Ok(FpOutcome {
        t_init,
        quiet_at: net.now(),
        true_value: 0,
        fake_value: 1,
        bits_to_commit: phase.nodes.iter().map(|n| n.bits_to_commit).collect(),
        announced: phase.nodes.iter().map(|n| n.announced).collect(),
        values: phase.values,
        commits,
        attesters,
    })
}
