use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{round_plan, Query, StrategyConfig, Transcript};
use crate::error::{Error, Result};

/// Resumable strategy driver.
///
/// The caller asks for the next `(stream_round, position)`, answers it, and
/// repeats until `next_query` returns `None`. This lets the broadcast
/// simulator interleave a node's sampling with the global clock.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: StrategyConfig,
    rng: ChaCha8Rng,
    round: usize,
    planned: VecDeque<usize>,
    scan: Option<std::ops::Range<usize>>,
    pending: Option<(usize, usize)>,
    transcript: Transcript,
}

impl Sampler {
    pub fn new(config: StrategyConfig) -> Self {
        let mut sampler = Sampler {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            round: 0,
            planned: VecDeque::new(),
            scan: None,
            pending: None,
            transcript: Transcript::default(),
        };
        sampler.plan_round();
        sampler
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    fn plan_round(&mut self) {
        let plan = round_plan(self.config.strategy, self.config.n, self.round)
            .expect("round within strategy bounds");
        self.planned = plan.draw(&mut self.rng).into();
        self.scan = plan.scan;
    }

    /// Next position to query, or `None` once a one has been found.
    ///
    /// Returns `SourceContractViolation` when every stream is exhausted
    /// without a one, which only happens if a source broke its ones promise.
    pub fn next_query(&mut self) -> Result<Option<(usize, usize)>> {
        if self.transcript.found() {
            return Ok(None);
        }
        if let Some(p) = self.pending {
            return Ok(Some(p));
        }
        loop {
            if let Some(pos) = self.planned.pop_front() {
                self.pending = Some((self.round, pos));
                return Ok(self.pending);
            }
            if let Some(scan) = self.scan.as_mut() {
                if let Some(pos) = scan.next() {
                    self.pending = Some((self.round, pos));
                    return Ok(self.pending);
                }
            }
            if self.round + 1 < self.config.strategy.rounds() {
                self.round += 1;
                self.plan_round();
                continue;
            }
            return Err(Error::SourceContractViolation(format!(
                "{} exhausted {} stream(s) of length {} without finding a one",
                self.config.strategy.name(),
                self.round + 1,
                self.config.n.get()
            )));
        }
    }

    /// Records the answer to the query last returned by `next_query`.
    pub fn record(&mut self, answer: bool) {
        let (stream_round, position) = self.pending.take().expect("record without a pending query");
        self.transcript.queries.push(Query {
            stream_round,
            position,
            answer,
        });
        if answer {
            self.transcript.found_at = Some(position);
            self.transcript.found_round = Some(stream_round);
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
