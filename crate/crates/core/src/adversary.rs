//! Stream sources: fixed vectors, the lower-bound input distributions, and
//! greedy adversaries.
//!
//! Intervals in the lower-bound constructions are written 1-based and closed
//! in the literature; here `[a, b]` maps to the 0-based half-open range
//! `a - 1 .. b`. So the first half is `0..n/2` and the window after it is
//! `n/2 .. n/2 + √n`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{BitSource, StreamLength};

/// Which lower-bound case a `Case1Case2k` draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseDraw {
    Case1,
    Case2 { k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Fixed,
    Case1Case2k(CaseDraw),
    /// Index (0, 1, 2) of the all-zero third.
    ThreeInterval { zero_interval: usize },
    /// One-pass greedy: answers 0 while the positions not yet reached can
    /// still carry every one it still owes. Its answers depend only on the
    /// position, never on which positions were skipped, so against
    /// stop-on-first-one strategies it behaves as the stream 0^{n/2} 1^{n/2}.
    GreedyAdaptive,
    /// Sees the query pattern: answers 0 while the positions it has not yet
    /// been asked about (skipped ones included) can still carry the owed ones.
    /// Forces n/2 + 1 queries on any stop-on-first-one strategy.
    QueryAware,
    LastHalfOnes,
    AllOnes,
}

/// A one-pass bit stream that promises at least ⌈n/2⌉ ones.
#[derive(Debug, Clone)]
pub struct StreamSource {
    n: StreamLength,
    kind: SourceKind,
    bits: Option<Vec<bool>>,
    last: Option<usize>,
    answered: usize,
    ones: usize,
}

fn count_ones(bits: &[bool]) -> usize {
    bits.iter().filter(|&&b| b).count()
}

impl StreamSource {
    fn with_kind(n: StreamLength, kind: SourceKind, bits: Option<Vec<bool>>) -> Self {
        StreamSource {
            n,
            kind,
            bits,
            last: None,
            answered: 0,
            ones: 0,
        }
    }

    pub fn fixed(bits: Vec<bool>) -> Result<Self> {
        let n = StreamLength::new(bits.len())?;
        let ones = count_ones(&bits);
        if ones < n.required_ones() {
            return Err(Error::SourceContractViolation(format!(
                "fixed stream has {ones} ones, needs {}",
                n.required_ones()
            )));
        }
        Ok(Self::with_kind(n, SourceKind::Fixed, Some(bits)))
    }

    pub fn all_ones(n: StreamLength) -> Self {
        Self::with_kind(n, SourceKind::AllOnes, None)
    }

    pub fn last_half_ones(n: StreamLength) -> Self {
        Self::with_kind(n, SourceKind::LastHalfOnes, None)
    }

    pub fn greedy(n: StreamLength) -> Self {
        Self::with_kind(n, SourceKind::GreedyAdaptive, None)
    }

    pub fn query_aware(n: StreamLength) -> Self {
        Self::with_kind(n, SourceKind::QueryAware, None)
    }

    /// Draw from the single-round lower-bound distribution.
    ///
    /// Draws with fewer than n/2 ones are redrawn unless `allow_subhalf`.
    pub fn case1_case2k(n: StreamLength, seed: u64, allow_subhalf: bool) -> Result<Self> {
        let root = perfect_square_root(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let (draw, bits) = if rng.gen_bool(0.5) {
                (CaseDraw::Case1, case1_bits(n, &mut rng)?)
            } else {
                let k = rng.gen_range(0..root);
                (CaseDraw::Case2 { k }, case2k_bits(n, k, &mut rng)?)
            };
            if allow_subhalf || count_ones(&bits) >= n.required_ones() {
                return Ok(Self::with_kind(n, SourceKind::Case1Case2k(draw), Some(bits)));
            }
        }
    }

    /// A CASE 1 draw only.
    pub fn case1(n: StreamLength, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = case1_bits(n, &mut rng)?;
        Ok(Self::with_kind(n, SourceKind::Case1Case2k(CaseDraw::Case1), Some(bits)))
    }

    pub fn three_interval(n: StreamLength, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero_interval = rng.gen_range(0..3);
        let bits = three_interval_bits(n, zero_interval, &mut rng)?;
        Ok(Self::with_kind(n, SourceKind::ThreeInterval { zero_interval }, Some(bits)))
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// The pre-sampled vector, for the non-adaptive kinds that carry one.
    pub fn bits(&self) -> Option<&[bool]> {
        self.bits.as_deref()
    }

    /// Starts a fresh pass over the same stream.
    pub fn reset(&mut self) {
        self.last = None;
        self.answered = 0;
        self.ones = 0;
    }

    /// Ones that are still owed by the stream after the answers so far.
    fn owed(&self) -> usize {
        self.n.required_ones().saturating_sub(self.ones)
    }
}

impl BitSource for StreamSource {
    fn len(&self) -> StreamLength {
        self.n
    }

    fn answer(&mut self, position: usize) -> Result<bool> {
        let n = self.n.get();
        if position >= n {
            return Err(Error::OutOfRange { position, len: n });
        }
        if let Some(last) = self.last {
            if position <= last {
                return Err(Error::Revisit { position, last });
            }
        }
        let bit = match self.kind {
            SourceKind::AllOnes => true,
            SourceKind::LastHalfOnes => position >= self.n.half(),
            SourceKind::GreedyAdaptive => n - position - 1 < self.owed(),
            SourceKind::QueryAware => n - self.answered - 1 < self.owed(),
            _ => self.bits.as_ref().expect("vector-backed kind")[position],
        };
        self.last = Some(position);
        self.answered += 1;
        if bit {
            self.ones += 1;
        }
        Ok(bit)
    }
}

fn perfect_square_root(n: StreamLength) -> Result<usize> {
    let n = n.get();
    let root = (n as f64).sqrt().round() as usize;
    if root * root != n {
        return Err(Error::Config(format!("CASE 1/CASE 2k needs a perfect square n, got {n}")));
    }
    Ok(root)
}

fn random_subset<R: Rng + ?Sized>(rng: &mut R, range: std::ops::Range<usize>, count: usize) -> Vec<usize> {
    index::sample(rng, range.len(), count)
        .into_iter()
        .map(|i| i + range.start)
        .collect()
}

/// √n random ones in the first half, a zero window of √n after it, ones after that.
pub fn case1_bits<R: Rng + ?Sized>(n: StreamLength, rng: &mut R) -> Result<Vec<bool>> {
    let root = perfect_square_root(n)?;
    let (len, half) = (n.get(), n.half());
    let mut bits = vec![false; len];
    for p in random_subset(rng, 0..half, root.min(half)) {
        bits[p] = true;
    }
    for b in bits.iter_mut().skip((half + root).min(len)) {
        *b = true;
    }
    Ok(bits)
}

/// `k` random zeros in the first half, `√n - k` random zeros in the window
/// after it (the rest of the window ones), zeros everywhere else.
pub fn case2k_bits<R: Rng + ?Sized>(n: StreamLength, k: usize, rng: &mut R) -> Result<Vec<bool>> {
    let root = perfect_square_root(n)?;
    if k >= root {
        return Err(Error::Config(format!("CASE 2k needs k < √n = {root}, got {k}")));
    }
    let (len, half) = (n.get(), n.half());
    let window = half..(half + root).min(len);
    let mut bits = vec![false; len];
    for b in bits.iter_mut().take(half) {
        *b = true;
    }
    for p in random_subset(rng, 0..half, k.min(half)) {
        bits[p] = false;
    }
    for p in window.clone() {
        bits[p] = true;
    }
    let zeros = (root - k).min(window.len());
    for p in random_subset(rng, window, zeros) {
        bits[p] = false;
    }
    Ok(bits)
}

/// One third all zeros, n/4 random ones in each of the other two.
pub fn three_interval_bits<R: Rng + ?Sized>(
    n: StreamLength,
    zero_interval: usize,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let len = n.get();
    if !len.is_multiple_of(12) {
        return Err(Error::Config(format!("three-interval needs n divisible by 12, got {len}")));
    }
    let third = len / 3;
    let mut bits = vec![false; len];
    for interval in (0..3).filter(|&i| i != zero_interval) {
        let start = interval * third;
        for p in random_subset(rng, start..start + third, len / 4) {
            bits[p] = true;
        }
    }
    Ok(bits)
}

/// Factory for fresh sources, one per trial and stream round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Adversary {
    /// Corpus of fixed streams; trial `i` uses entry `i mod len`.
    Fixed(Vec<Vec<bool>>),
    Greedy,
    QueryAware,
    Case1Case2k,
    Case1,
    ThreeInterval,
    AllOnes,
    LastHalfOnes,
}

impl Adversary {
    pub fn name(&self) -> &'static str {
        match self {
            Adversary::Fixed(_) => "fixed",
            Adversary::Greedy => "greedy",
            Adversary::QueryAware => "queryaware",
            Adversary::Case1Case2k => "case12k",
            Adversary::Case1 => "case1",
            Adversary::ThreeInterval => "threeinterval",
            Adversary::AllOnes => "allones",
            Adversary::LastHalfOnes => "lasthalf",
        }
    }

    /// Whether the adversary fixes its stream without seeing the queries.
    pub fn is_oblivious(&self) -> bool {
        !matches!(self, Adversary::QueryAware)
    }

    /// Whether this factory can produce streams of length `n`.
    pub fn supports(&self, n: StreamLength) -> bool {
        match self {
            Adversary::Fixed(corpus) => corpus.iter().all(|b| b.len() == n.get()),
            Adversary::Case1Case2k | Adversary::Case1 => perfect_square_root(n).is_ok(),
            Adversary::ThreeInterval => n.get().is_multiple_of(12),
            _ => true,
        }
    }

    pub fn make(&self, n: StreamLength, index: u64, seed: u64) -> Result<StreamSource> {
        Ok(match self {
            Adversary::Fixed(corpus) => {
                if corpus.is_empty() {
                    return Err(Error::Config("empty fixed-stream corpus".into()));
                }
                StreamSource::fixed(corpus[(index % corpus.len() as u64) as usize].clone())?
            }
            Adversary::Greedy => StreamSource::greedy(n),
            Adversary::QueryAware => StreamSource::query_aware(n),
            Adversary::Case1Case2k => StreamSource::case1_case2k(n, seed, false)?,
            Adversary::Case1 => StreamSource::case1(n, seed)?,
            Adversary::ThreeInterval => StreamSource::three_interval(n, seed)?,
            Adversary::AllOnes => StreamSource::all_ones(n),
            Adversary::LastHalfOnes => StreamSource::last_half_ones(n),
        })
    }
}

/// Parses one stream per line of ASCII `0`/`1`. Blank lines and `#` comments are skipped.
pub fn parse_streams(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bits = line
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Scenario {
                    line: i + 1,
                    msg: format!("unexpected character {other:?} in stream"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(bits);
    }
    Ok(out)
}

pub fn format_stream(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
