//! Sparse-DTMC analysis: PCTL evaluation, reachability probabilities,
//! expected rewards, exact-rational solving, and Monte Carlo estimation.

pub mod dtmc;
pub mod exact;
pub mod mc;
pub mod pctl;
pub mod solver;

pub use dtmc::{RewardStructure, SparseDtmc};
pub use exact::{evaluate_exact, ExactDtmc, ExactEvalResult, ExactRewardStructure, ExactValue};
pub use mc::{mc_estimate, McEstimate};
pub use pctl::{evaluate, parse_pctl, EvalOutcome, EvalResult, PctlFormula};
pub use solver::{
    dense_expected_reward, dense_unbounded_until, expected_reward, prob_bounded_until, prob_next,
    prob_unbounded_until, SolveStats,
};

use thiserror::Error;

/// Errors from analysis (evaluation and solving).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("reward operator needs a reward structure")]
    RewardsRequired,
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { residual: f64, iterations: u64 },
    #[error("dense solver limited to {limit} states, model has {states}")]
    DenseLimitExceeded { states: usize, limit: usize },
    #[error("exact solver limited to {limit} states, model has {states}")]
    ExactLimitExceeded { states: usize, limit: usize },
    #[error("query operator is only allowed at top level")]
    NestedQuery,
}
