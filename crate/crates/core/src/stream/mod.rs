//! Bad Santa query strategies.
//!
//! A stream of `n` bits passes by once; at least half of them are ones. A
//! strategy may query any bit as it passes and must stop on a one. Every
//! strategy here is Las Vegas: it always finds a one, only its cost is random.
//!
//! All randomness is drawn up front for a round (positions are committed
//! before the stream passes) and positions are visited in increasing order.

mod sampler;

pub use sampler::Sampler;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of bits in one stream. Always even and at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamLength(usize);

impl StreamLength {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidLength(n));
        }
        Ok(StreamLength(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn half(self) -> usize {
        self.0 / 2
    }

    /// Minimum number of ones any valid stream carries.
    pub fn required_ones(self) -> usize {
        self.0.div_ceil(2)
    }
}

/// A queryable one-pass bit stream.
// a stream length is never zero, so there is no `is_empty`
#[allow(clippy::len_without_is_empty)]
pub trait BitSource {
    fn len(&self) -> StreamLength;

    /// Answers the bit at `position`. Positions must strictly increase.
    fn answer(&mut self, position: usize) -> Result<bool>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub stream_round: usize,
    pub position: usize,
    pub answer: bool,
}

/// Ordered record of one strategy run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub queries: Vec<Query>,
    pub found_at: Option<usize>,
    pub found_round: Option<usize>,
}

impl Transcript {
    pub fn cost(&self) -> usize {
        self.queries.len()
    }

    pub fn found(&self) -> bool {
        self.found_at.is_some()
    }

    /// Queries made in one stream round.
    pub fn round(&self, stream_round: usize) -> impl Iterator<Item = &Query> {
        self.queries.iter().filter(move |q| q.stream_round == stream_round)
    }

    pub fn rounds_used(&self) -> usize {
        self.queries.last().map_or(0, |q| q.stream_round + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Query n/2 + 1 random positions.
    Naive,
    /// Sample ⌈√n⌉ positions of the first half, then scan the second half.
    SingleRound,
    /// `rounds` = k + 1 streams: k sampling rounds of ⌈lg^(i)(n/2)⌉ queries,
    /// then the single-round strategy on the last stream.
    MultiRound { rounds: usize },
}

impl Strategy {
    pub fn rounds(self) -> usize {
        match self {
            Strategy::Naive | Strategy::SingleRound => 1,
            Strategy::MultiRound { rounds } => rounds.max(1),
        }
    }

    /// Multi-round with one stream is the single-round strategy.
    pub fn normalized(self) -> Self {
        match self {
            Strategy::MultiRound { rounds } if rounds <= 1 => Strategy::SingleRound,
            s => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self.normalized() {
            Strategy::Naive => "naive",
            Strategy::SingleRound => "single",
            Strategy::MultiRound { .. } => "multi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub n: StreamLength,
    pub strategy: Strategy,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn rounds(&self) -> usize {
        self.strategy.rounds()
    }
}

/// How one stream round spends its queries: a uniform sample without
/// replacement of `count` positions in `sample`, then, if nothing was found,
/// a consecutive scan over `scan`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub sample: std::ops::Range<usize>,
    pub count: usize,
    pub scan: Option<std::ops::Range<usize>>,
}

impl RoundPlan {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let len = self.sample.len();
        let mut picked: Vec<usize> = index::sample(rng, len, self.count.min(len))
            .into_iter()
            .map(|i| i + self.sample.start)
            .collect();
        picked.sort_unstable();
        picked
    }
}

/// ⌈√n⌉ phase-one queries, never more than the first half holds.
pub fn phase_one_count(n: StreamLength) -> usize {
    let n = n.get();
    let mut s = (n as f64).sqrt() as usize;
    while s * s < n {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    s.min(n / 2)
}

/// Plan for stream round `round` (0-based) of `strategy`.
pub fn round_plan(strategy: Strategy, n: StreamLength, round: usize) -> Option<RoundPlan> {
    let total = n.get();
    match strategy.normalized() {
        Strategy::Naive if round == 0 => Some(RoundPlan {
            sample: 0..total,
            count: n.half() + 1,
            scan: None,
        }),
        Strategy::SingleRound if round == 0 => Some(single_round_plan(n)),
        Strategy::MultiRound { rounds } if round + 1 < rounds => {
            let depth = rounds - 1 - round;
            let count = (iterated_log(n.half() as f64, depth) as usize).min(total);
            Some(RoundPlan {
                sample: 0..total,
                count,
                scan: None,
            })
        }
        Strategy::MultiRound { rounds } if round + 1 == rounds => Some(single_round_plan(n)),
        _ => None,
    }
}

fn single_round_plan(n: StreamLength) -> RoundPlan {
    RoundPlan {
        sample: 0..n.half(),
        count: phase_one_count(n),
        scan: Some(n.half()..n.get()),
    }
}

/// `lg^(depth)(x)` rounded up and clamped to at least 1.
pub fn iterated_log(x: f64, depth: usize) -> u64 {
    assert!(x >= 1.0, "iterated_log needs x >= 1");
    let mut v = x;
    for _ in 0..depth {
        if v <= 1.0 {
            return 1;
        }
        v = v.log2();
    }
    // absorb float noise on exact powers of two
    let rounded = v.round();
    let v = if (v - rounded).abs() < 1e-9 { rounded } else { v };
    (v.ceil() as u64).max(1)
}

/// Number of `lg` applications until the value drops to at most 1.
pub fn lg_star(x: f64) -> usize {
    let mut v = x;
    let mut count = 0;
    while v > 1.0 {
        v = v.log2();
        count += 1;
    }
    count
}

/// Runs `strategy` against one source per stream round.
pub fn run_strategy<S: BitSource>(
    strategy: Strategy,
    sources: &mut [S],
    n: StreamLength,
    seed: u64,
) -> Result<Transcript> {
    let strategy = strategy.normalized();
    if sources.len() < strategy.rounds() {
        return Err(Error::Config(format!(
            "{} needs {} streams, got {}",
            strategy.name(),
            strategy.rounds(),
            sources.len()
        )));
    }
    if let Some(src) = sources.iter().find(|s| s.len() != n) {
        return Err(Error::Config(format!(
            "source length {} does not match n = {}",
            src.len().get(),
            n.get()
        )));
    }
    let mut sampler = Sampler::new(StrategyConfig { n, strategy, seed });
    while let Some((round, position)) = sampler.next_query()? {
        let bit = sources[round].answer(position)?;
        sampler.record(bit);
    }
    Ok(sampler.into_transcript())
}

pub fn naive_strategy<S: BitSource>(source: &mut S, n: StreamLength, seed: u64) -> Result<Transcript> {
    run_strategy(Strategy::Naive, std::slice::from_mut(source), n, seed)
}

pub fn single_round_strategy<S: BitSource>(
    source: &mut S,
    n: StreamLength,
    seed: u64,
) -> Result<Transcript> {
    run_strategy(Strategy::SingleRound, std::slice::from_mut(source), n, seed)
}

pub fn multi_round_strategy<S: BitSource>(
    sources: &mut [S],
    n: StreamLength,
    seed: u64,
) -> Result<Transcript> {
    let rounds = sources.len();
    run_strategy(Strategy::MultiRound { rounds }, sources, n, seed)
}
