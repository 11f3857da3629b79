//! Bad Santa query strategies, exact small-n oracles, and a deterministic
//! simulator of energy-aware reliable broadcast on a grid radio network.
//!
//! Numeric summaries are generic over `num_traits::Float`, and the exhaustive
//! oracle over any `Num` scalar including exact rationals. The aliases below
//! fix the scalar for common use.

pub mod adversary;
pub mod cli;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod montecarlo;
pub mod oracle;
pub mod protocol;
pub mod stream;

pub use error::{Error, Result};

/// Exact rational expected cost.
pub type ExactCost = oracle::ExactCost;
pub type CostSummary = montecarlo::CostSummary<f64>;
pub type CostSummaryF32 = montecarlo::CostSummary<f32>;
pub type ScalingReport = metrics::ScalingReport<f64>;
pub type WorstCase = oracle::WorstCase<ExactCost>;
