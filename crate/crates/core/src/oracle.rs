//! Exact expected costs by enumerating a strategy's random choices.
//!
//! Every round draws a uniform subset of fixed size, so exact expectations are
//! averages over all subsets. Rounds run on independent streams, which makes
//! the worst case over tuples of fixed streams a backward recursion:
//! `W_last = max_s cost(s)`, `W_i = max_s cost_i(s) + fail_i(s) * W_{i+1}`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num};

use crate::adversary::StreamSource;
use crate::error::{Error, Result};
use crate::stream::{round_plan, BitSource, RoundPlan, Strategy, StreamLength};

/// Largest n the exhaustive oracle accepts.
pub const MAX_EXHAUSTIVE_N: usize = 12;

/// Scalar the oracle accumulates in: `BigRational` for exact answers, `f64`
/// for quick estimates.
pub trait OracleScalar: Num + FromPrimitive + Clone + PartialOrd + std::fmt::Debug {}

impl<T> OracleScalar for T where T: Num + FromPrimitive + Clone + PartialOrd + std::fmt::Debug {}

pub type ExactCost = BigRational;

pub fn ratio(num: i64, den: i64) -> ExactCost {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Expected cost and failure probability of one round against one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<S> {
    pub expected_cost: S,
    pub fail_probability: S,
}

fn scalar<S: OracleScalar>(v: usize) -> S {
    S::from_usize(v).expect("count fits the scalar type")
}

/// Visits every `count`-subset of `0..len` in lexicographic order.
pub fn for_each_subset(len: usize, count: usize, mut visit: impl FnMut(&[usize])) {
    if count > len {
        return;
    }
    let mut idx: Vec<usize> = (0..count).collect();
    loop {
        visit(&idx);
        let mut i = count;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + len - count {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..count {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact outcome of `plan` against fresh copies of `source`.
pub fn round_outcome<S: OracleScalar>(plan: &RoundPlan, source: &StreamSource) -> Result<RoundOutcome<S>> {
    let len = plan.sample.len();
    let count = plan.count.min(len);
    let mut total_cost = 0usize;
    let mut failures = 0usize;
    let mut subsets = 0usize;
    let mut err = None;
    for_each_subset(len, count, |subset| {
        if err.is_some() {
            return;
        }
        subsets += 1;
        let mut src = source.clone();
        src.reset();
        let positions = subset
            .iter()
            .map(|&i| i + plan.sample.start)
            .chain(plan.scan.clone().into_iter().flatten());
        let mut cost = 0;
        let mut found = false;
        for p in positions {
            match src.answer(p) {
                Ok(bit) => {
                    cost += 1;
                    if bit {
                        found = true;
                        break;
                    }
                }
                Err(e) => {
                    err = Some(e);
                    return;
                }
            }
        }
        if !found && plan.scan.is_some() {
            err = Some(Error::SourceContractViolation(
                "scan reached the end of the stream without a one".into(),
            ));
        }
        total_cost += cost;
        if !found {
            failures += 1;
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let denom: S = scalar(subsets);
    Ok(RoundOutcome {
        expected_cost: scalar::<S>(total_cost) / denom.clone(),
        fail_probability: scalar::<S>(failures) / denom,
    })
}

/// Every stream of length `n` with at least ⌈n/2⌉ ones.
pub fn valid_streams(n: StreamLength) -> impl Iterator<Item = Vec<bool>> {
    let len = n.get();
    let need = n.required_ones();
    (0u32..(1u32 << len))
        .filter(move |m| m.count_ones() as usize >= need)
        .map(move |m| (0..len).map(|i| (m >> i) & 1 == 1).collect())
}

fn plans(strategy: Strategy, n: StreamLength) -> Vec<RoundPlan> {
    (0..strategy.rounds())
        .map(|r| round_plan(strategy, n, r).expect("round in range"))
        .collect()
}

/// Exact expected cost when round `r` runs against `source_for(r)`.
pub fn exact_expected_cost<S: OracleScalar>(
    strategy: Strategy,
    n: StreamLength,
    mut source_for: impl FnMut(usize) -> StreamSource,
) -> Result<S> {
    let strategy = strategy.normalized();
    let mut total = S::zero();
    let mut reach = S::one();
    for (r, plan) in plans(strategy, n).iter().enumerate() {
        let out = round_outcome::<S>(plan, &source_for(r))?;
        total = total + reach.clone() * out.expected_cost;
        reach = reach * out.fail_probability;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase<S> {
    /// Max over tuples of fixed streams (one per round) of the expected cost.
    pub worst_fixed: S,
    /// A stream attaining the max in the first round.
    pub worst_first_stream: Vec<bool>,
    /// Expected cost against the one-pass greedy adversary on every round.
    pub greedy: S,
    /// Whether every enumerated run found a one.
    pub always_found: bool,
}

/// Worst expected cost over all fixed streams with ≥ ⌈n/2⌉ ones, by exhaustive
/// enumeration of both the streams and the strategy's random choices.
pub fn brute_force_worst_cost<S: OracleScalar>(strategy: Strategy, n: StreamLength) -> Result<WorstCase<S>> {
    if n.get() > MAX_EXHAUSTIVE_N {
        return Err(Error::Size {
            n: n.get(),
            max: MAX_EXHAUSTIVE_N,
        });
    }
    let strategy = strategy.normalized();
    let streams: Vec<Vec<bool>> = valid_streams(n).collect();
    let plans = plans(strategy, n);

    let mut worst_rest = S::zero();
    let mut worst_stream = Vec::new();
    for plan in plans.iter().rev() {
        let mut best: Option<(S, &Vec<bool>)> = None;
        for bits in &streams {
            let src = StreamSource::fixed(bits.clone())?;
            let out = round_outcome::<S>(plan, &src)?;
            let value = out.expected_cost + out.fail_probability * worst_rest.clone();
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, bits));
            }
        }
        let (value, bits) = best.expect("at least one valid stream");
        worst_rest = value;
        worst_stream = bits.clone();
    }

    let greedy = exact_expected_cost::<S>(strategy, n, |_| StreamSource::greedy(n))?;
    Ok(WorstCase {
        worst_fixed: worst_rest,
        worst_first_stream: worst_stream,
        greedy,
        always_found: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn len(n: usize) -> StreamLength {
        StreamLength::new(n).unwrap()
    }

    #[test]
    fn subsets_enumerated_once_each() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.first().unwrap(), &vec![0, 1, 2]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3, 4]);
        let mut empty = 0;
        for_each_subset(3, 0, |_| empty += 1);
        assert_eq!(empty, 1);
    }

    #[test]
    fn single_round_n4_is_three() {
        let w = brute_force_worst_cost::<ExactCost>(Strategy::SingleRound, len(4)).unwrap();
        assert_eq!(w.worst_fixed, ratio(3, 1));
        assert_eq!(w.greedy, ratio(3, 1));
    }

    #[test]
    fn naive_n2_visits_both_positions_in_order() {
        // stream 01: the plan is {0, 1}, visited in order, so the cost is 2
        let w = brute_force_worst_cost::<ExactCost>(Strategy::Naive, len(2)).unwrap();
        assert_eq!(w.worst_fixed, ratio(2, 1));
        assert_eq!(w.worst_first_stream, vec![false, true]);
    }

    #[test]
    fn all_ones_costs_one() {
        let n = len(8);
        for s in [Strategy::Naive, Strategy::SingleRound, Strategy::MultiRound { rounds: 3 }] {
            let c: ExactCost = exact_expected_cost(s, n, |_| StreamSource::all_ones(n)).unwrap();
            assert_eq!(c, ratio(1, 1));
        }
    }

    #[test]
    fn size_error_above_twelve() {
        assert_eq!(
            brute_force_worst_cost::<f64>(Strategy::Naive, len(14)).unwrap_err(),
            Error::Size { n: 14, max: 12 }
        );
    }

    #[test]
    fn float_and_exact_agree() {
        let n = len(10);
        let exact = brute_force_worst_cost::<ExactCost>(Strategy::SingleRound, n).unwrap();
        let approx = brute_force_worst_cost::<f64>(Strategy::SingleRound, n).unwrap();
        let exact_f = num_traits::ToPrimitive::to_f64(&exact.worst_fixed).unwrap();
        assert!((exact_f - approx.worst_fixed).abs() < 1e-12);
    }
}
