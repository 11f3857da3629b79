//! Data phase: each node samples the transmissions of its attesters as a
//! Bad Santa stream and keeps the first message that hashes to its locked
//! fingerprint.
//!
//! Every node has a key: its first data slot. The stream of node p holds
//! the attesters whose key precedes p's, in key order. Sampling round `i`
//! reads each of them in its `i`-th transmission, and a position reads 1 iff
//! a message matching p's fingerprint actually arrives in that slot. Odd
//! streams get a trailing phantom position that reads 0 without a listen.
//!
//! All reads happen before p's own slot in the same round, so by induction
//! on the key every correct node holds the message by its final-round slot
//! whenever correct members outnumber the rest of its stream.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fingerprint::{fingerprint, Fingerprint};
use super::{id_bits, DataOrder, ByzantineMode, FpOutcome, ProtocolConfig, ProtocolMessage, Role};
use super::{Frame, KIND_BITS};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Network, Phase, SlotProtocol};
use crate::metrics::EnergyLedger;
use crate::stream::{Sampler, StrategyConfig, StreamLength, Transcript};

#[derive(Debug, Clone)]
pub struct DataOutcome {
    pub t_data: u64,
    pub end: u64,
    pub commit_times: Vec<Option<u64>>,
    /// Whether the committed message equals the dealer's.
    pub committed_ok: Vec<Option<bool>>,
    /// Stream members in order, per node.
    pub streams: Vec<Vec<usize>>,
    pub transcripts: Vec<Option<Transcript>>,
    /// First data transmission step per node.
    pub first_transmit: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
struct DataNode {
    committed_at: Option<u64>,
    message: Option<Arc<Vec<u8>>>,
    f_maj: Option<Fingerprint>,
    stream: Vec<Option<usize>>,
    sampler: Option<Sampler>,
    /// Listen slot and the attester expected in it.
    waiting: Option<(u64, usize)>,
    candidate: Option<Arc<Vec<u8>>>,
    sent: usize,
    rounds_started: usize,
}

struct DataPhase<'a> {
    spec: GridSpec,
    roles: &'a [Role],
    ids: u64,
    first_tx: Vec<u64>,
    epoch: u64,
    transmissions: usize,
    truth: Arc<Vec<u8>>,
    forged: Arc<Vec<u8>>,
    rng: ChaCha8Rng,
    nodes: Vec<DataNode>,
    extras: Vec<EnergyLedger>,
    agenda: BTreeMap<u64, Vec<usize>>,
    error: Option<Error>,
}

impl DataPhase<'_> {
    fn data_frame(&self, node: usize, message: Arc<Vec<u8>>) -> (Frame, u64) {
        let bits = KIND_BITS + self.ids + message.len() as u64 * 8;
        (
            Frame {
                records: vec![ProtocolMessage::CommitData { sender: node, message }],
            },
            bits,
        )
    }

    /// Pulls queries from the sampler until one needs a real listen.
    fn advance(&mut self, node: usize) {
        let st = &mut self.nodes[node];
        let Some(sampler) = st.sampler.as_mut() else { return };
        loop {
            match sampler.next_query() {
                Ok(None) => {
                    st.waiting = None;
                    return;
                }
                Ok(Some((round, pos))) => {
                    if round + 1 > st.rounds_started {
                        self.extras[node].stream_positions_passed += st.stream.len() as u64;
                        st.rounds_started = round + 1;
                    }
                    match st.stream[pos] {
                        None => sampler.record(false),
                        Some(member) => {
                            let at = self.first_tx[member] + round as u64 * self.epoch;
                            st.waiting = Some((at, member));
                            self.agenda.entry(at).or_default().push(node);
                            return;
                        }
                    }
                }
                Err(e) => {
                    st.waiting = None;
                    self.error.get_or_insert(Error::DataPhaseStall {
                        node: self.spec.coord(node),
                        reason: e.to_string(),
                    });
                    return;
                }
            }
        }
    }

    fn last_transmission(&self) -> u64 {
        let tail = (self.transmissions as u64 - 1) * self.epoch;
        self.first_tx.iter().map(|t| t + tail).max().unwrap_or(0)
    }
}

impl SlotProtocol for DataPhase<'_> {
    type Msg = Frame;

    fn transmit(&mut self, node: usize, step: u64) -> Option<(Frame, u64)> {
        let st = &self.nodes[node];
        if st.sent >= self.transmissions || step != self.first_tx[node] + st.sent as u64 * self.epoch {
            return None;
        }
        self.nodes[node].sent += 1;
        let payload = match self.roles[node] {
            Role::Honest => match (&self.nodes[node].message, self.nodes[node].committed_at) {
                (Some(m), Some(at)) if at < step => m.clone(),
                _ => return None,
            },
            Role::Byzantine(ByzantineMode::WrongData | ByzantineMode::EquivocateFp) => self.forged.clone(),
            Role::Byzantine(ByzantineMode::GarbageFp) => {
                let mut junk = vec![0u8; self.truth.len()];
                self.rng.fill_bytes(&mut junk);
                Arc::new(junk)
            }
            Role::Byzantine(ByzantineMode::Silent) | Role::Crash(_) => return None,
        };
        self.extras[node].data_transmits += 1;
        Some(self.data_frame(node, payload))
    }

    fn listening(&self, node: usize, step: u64) -> bool {
        matches!(self.nodes[node].waiting, Some((at, _)) if at == step)
    }

    fn receive(&mut self, node: usize, from: usize, frame: &Frame, _bits: u64, step: u64) {
        let st = &mut self.nodes[node];
        if st.waiting != Some((step, from)) {
            return;
        }
        self.extras[node].data_messages_heard += 1;
        for rec in &frame.records {
            if let ProtocolMessage::CommitData { message, .. } = rec {
                if Some(&fingerprint(message)) == st.f_maj.as_ref() {
                    st.candidate = Some(message.clone());
                }
            }
        }
    }

    fn end_step(&mut self, step: u64) {
        let Some(due) = self.agenda.remove(&step) else { return };
        for node in due {
            self.extras[node].data_listens += 1;
            let st = &mut self.nodes[node];
            st.waiting = None;
            let got = st.candidate.take();
            let found = got.is_some();
            if let Some(sampler) = st.sampler.as_mut() {
                sampler.record(found);
            }
            if found {
                st.committed_at = Some(step);
                st.message = got;
            } else if st.sampler.is_some() {
                self.advance(node);
            } else {
                self.error.get_or_insert(Error::DataPhaseStall {
                    node: self.spec.coord(node),
                    reason: "the dealer's data did not verify".into(),
                });
            }
        }
    }
}

/// Gap between a node's consecutive transmissions: one period for a single
/// round, otherwise the smallest period multiple exceeding the spread of
/// first slots inside any neighborhood, so round `i` of every stream ends
/// before round `i + 1` starts.
fn round_spacing(spec: &GridSpec, first_tx: &[u64], period: u64, k: usize) -> u64 {
    if k == 0 {
        return period;
    }
    let spread = spec
        .coords()
        .map(|c| {
            let (lo, hi) = spec
                .neighborhood(c)
                .map(|nb| first_tx[spec.index(nb)])
                .fold((u64::MAX, 0), |(lo, hi), t| (lo.min(t), hi.max(t)));
            hi - lo
        })
        .max()
        .unwrap_or(0);
    (spread / period + 1) * period
}

fn node_seed(base: u64, node: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(node as u64 + 1);
    rng.next_u64()
}

/// Runs the data phase after `fp`. Late crashes must already be applied to
/// `net`. Charges the stream counters into `net.ledgers`.
pub fn run_data_phase(
    net: &mut Network,
    roles: &[Role],
    fp: &FpOutcome,
    message: &[u8],
    order: DataOrder,
    config: &ProtocolConfig,
) -> Result<DataOutcome> {
    let spec = net.spec;
    net.phase = Phase::Data;
    let t_data = net.schedule.next_turn(spec.dealer, net.now());
    let period = net.schedule.period;
    let first_tx: Vec<u64> = match order {
        DataOrder::Announce => {
            let shift = t_data - fp.t_init;
            spec.coords()
                .zip(&fp.announced)
                .map(|(c, at)| match at {
                    Some(at) => at + shift,
                    None => net.schedule.next_turn(c, t_data),
                })
                .collect()
        }
        DataOrder::Distance => spec
            .coords()
            .map(|c| {
                let o = spec.offset(c);
                let key = (o.x * o.x + o.y * o.y) as u64;
                net.schedule.next_turn(c, t_data + period * key)
            })
            .collect(),
    };
    let epoch = round_spacing(&spec, &first_tx, period, config.k);
    let truth = Arc::new(message.to_vec());
    let mut forged = message.to_vec();
    forged.push(0xA5);
    let dealer = spec.index(spec.dealer);
    let mut phase = DataPhase {
        spec,
        roles,
        ids: id_bits(spec.node_count()),
        first_tx,
        epoch,
        transmissions: config.transmissions(),
        truth: truth.clone(),
        forged: Arc::new(forged),
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x6461_7461),
        nodes: vec![DataNode::default(); spec.node_count()],
        extras: vec![EnergyLedger::default(); spec.node_count()],
        agenda: BTreeMap::new(),
        error: None,
    };
    phase.nodes[dealer].committed_at = Some(fp.t_init);
    phase.nodes[dealer].message = Some(truth.clone());

    let mut streams = vec![Vec::new(); spec.node_count()];
    for node in 0..spec.node_count() {
        if roles[node] != Role::Honest || node == dealer {
            continue;
        }
        let st = &mut phase.nodes[node];
        st.f_maj = fp.f_maj(node).map(|v| v.fingerprint.clone());
        let me = spec.coord(node);
        if spec.in_neighborhood(spec.dealer, me) {
            let at = phase.first_tx[dealer];
            st.waiting = Some((at, dealer));
            phase.agenda.entry(at).or_default().push(node);
            continue;
        }
        let mut members: Vec<usize> = fp.attesters[node]
            .iter()
            .copied()
            .filter(|&g| phase.first_tx[g] < phase.first_tx[node])
            .collect();
        members.sort_by_key(|&g| phase.first_tx[g]);
        streams[node] = members.clone();
        let mut stream: Vec<Option<usize>> = members.into_iter().map(Some).collect();
        if stream.len() % 2 == 1 {
            stream.push(None);
        }
        let n = match StreamLength::new(stream.len()) {
            Ok(n) => n,
            Err(_) => {
                return Err(Error::DataPhaseStall {
                    node: me,
                    reason: "no attester transmits before this node".into(),
                })
            }
        };
        st.stream = stream;
        st.sampler = Some(Sampler::new(StrategyConfig {
            n,
            strategy: config.strategy(),
            seed: node_seed(config.seed, node),
        }));
        phase.advance(node);
    }
    if let Some(e) = phase.error.take() {
        return Err(e);
    }

    let end = phase.last_transmission() + 1;
    while net.now() < end {
        net.step(&mut phase)?;
        if let Some(e) = phase.error.take() {
            return Err(e);
        }
    }

    for (node, role) in roles.iter().enumerate() {
        if *role == Role::Honest && phase.nodes[node].committed_at.is_none() {
            return Err(Error::DataPhaseStall {
                node: spec.coord(node),
                reason: "run ended before a verifying message arrived".into(),
            });
        }
        let l = &mut net.ledgers[node];
        let x = &phase.extras[node];
        l.data_listens += x.data_listens;
        l.data_messages_heard += x.data_messages_heard;
        l.data_transmits += x.data_transmits;
        l.stream_positions_passed += x.stream_positions_passed;
    }
    let committed_ok = phase
        .nodes
        .iter()
        .map(|n| n.message.as_ref().map(|m| m.as_slice() == message))
        .collect();
    Ok(DataOutcome {
        t_data,
        end: net.now(),
        commit_times: phase.nodes.iter().map(|n| n.committed_at).collect(),
        committed_ok,
        streams,
        transcripts: phase
            .nodes
            .iter()
            .map(|n| n.sampler.as_ref().map(|s| s.transcript().clone()))
            .collect(),
        first_transmit: phase.first_tx,
    })
}
