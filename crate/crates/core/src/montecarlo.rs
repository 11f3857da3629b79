//! Seeded Monte Carlo estimates of strategy cost.

use num_traits::Float;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::{Adversary, StreamSource};
use crate::error::Result;
use crate::stream::{run_strategy, Strategy, StreamLength, Transcript};

/// Seed of trial `index` under base seed `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// Seed for the source feeding stream round `round` of a trial. Drawn from a
/// separate ChaCha stream so it never coincides with the strategy's own seed.
pub fn source_seed(trial_seed: u64, round: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(1 + round as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: u64,
    pub seed: u64,
    pub cost: usize,
    pub found: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSummary<F> {
    pub trials: usize,
    pub mean: F,
    pub max: usize,
    /// Normal-approximation 95% interval for the mean.
    pub ci95: (F, F),
    pub failures: usize,
}

impl<F: Float> CostSummary<F> {
    pub fn from_costs(costs: &[usize], failures: usize) -> Self {
        let trials = costs.len();
        let count = F::from(trials.max(1)).unwrap();
        let mean = costs.iter().fold(F::zero(), |acc, &c| acc + F::from(c).unwrap()) / count;
        let var = if trials > 1 {
            costs.iter().fold(F::zero(), |acc, &c| {
                let d = F::from(c).unwrap() - mean;
                acc + d * d
            }) / F::from(trials - 1).unwrap()
        } else {
            F::zero()
        };
        let half = F::from(1.96).unwrap() * (var / count).sqrt();
        CostSummary {
            trials,
            mean,
            max: costs.iter().copied().max().unwrap_or(0),
            ci95: (mean - half, mean + half),
            failures,
        }
    }
}

/// Runs `trials` independent strategy runs. `factory(trial_seed, round)`
/// supplies a fresh source per stream round.
pub fn monte_carlo_trials(
    strategy: Strategy,
    mut factory: impl FnMut(u64, usize) -> Result<StreamSource>,
    n: StreamLength,
    trials: u64,
    seed: u64,
) -> Result<Vec<(TrialRecord, Transcript)>> {
    let rounds = strategy.normalized().rounds();
    (0..trials)
        .map(|index| {
            let s = trial_seed(seed, index);
            let mut sources = (0..rounds).map(|r| factory(s, r)).collect::<Result<Vec<_>>>()?;
            let transcript = run_strategy(strategy, &mut sources, n, s)?;
            let record = TrialRecord {
                index,
                seed: s,
                cost: transcript.cost(),
                found: transcript.found(),
            };
            Ok((record, transcript))
        })
        .collect()
}

/// Sources for one adversary, one per stream round, seeded from the trial.
pub fn adversary_factory(adversary: &Adversary, n: StreamLength) -> impl FnMut(u64, usize) -> Result<StreamSource> + '_ {
    move |s, round| {
        let index = s.wrapping_mul(CORPUS_STRIDE).wrapping_add(round as u64);
        adversary.make(n, index, source_seed(s, round))
    }
}

// Fixed corpora cycle through entries; a large odd stride per trial keeps
// the rounds of one trial on different entries.
const CORPUS_STRIDE: u64 = 0x9E37_79B9;

pub fn monte_carlo_cost<F: Float>(
    strategy: Strategy,
    adversary: &Adversary,
    n: StreamLength,
    trials: u64,
    seed: u64,
) -> Result<CostSummary<F>> {
    let mut factory = adversary_factory(adversary, n);
    let mut costs = Vec::with_capacity(trials as usize);
    let mut failures = 0;
    let rounds = strategy.normalized().rounds();
    for index in 0..trials {
        let s = trial_seed(seed, index);
        let mut sources = (0..rounds).map(|r| factory(s, r)).collect::<Result<Vec<_>>>()?;
        let t = run_strategy(strategy, &mut sources, n, s)?;
        if !t.found() {
            failures += 1;
        }
        costs.push(t.cost());
    }
    Ok(CostSummary::from_costs(&costs, failures))
}
