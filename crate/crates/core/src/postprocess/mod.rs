//! Post-processing of scores and predictions: tolerance-bounded per-group
//! thresholds, tolerance sweeps, equalized-odds mixing and reject-option
//! classification.

mod mixing;
mod reject;
mod thresholds;

pub use mixing::{apply_mixing, equalize_odds_mixing, mixed_rates, MixingOutcome, MixingPolicy};
pub use reject::{roc_reject_option, RocSpec};
pub use thresholds::{
    apply_policy, candidate_thresholds, optimize_thresholds, solve_thresholds, sweep_tau, SweepResult, SweepRow,
    ThresholdPolicy, ThresholdSolution, ToleranceSpec, DEFAULT_TAU_FN,
};
