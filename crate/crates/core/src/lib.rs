//! Fairness auditing and repair for tabular binary classifiers.
//!
//! Group metrics and intersectional audits live in [`groupmetrics`],
//! individual-fairness measures in [`individual`] and [`lipschitz`]. The
//! repair stages are [`preprocess`], [`inprocess`] and [`postprocess`]; the
//! centrepiece of the last is [`postprocess::optimize_thresholds`], which
//! minimizes the cost-weighted error subject to a bound on every pairwise
//! miss-rate gap.

pub mod dataset;
pub mod error;
pub mod groupmetrics;
pub mod individual;
pub mod inprocess;
pub mod lipschitz;
pub mod lp;
pub mod postprocess;
pub mod preprocess;
pub mod rng;

pub use dataset::{Dataset, GroupIndex, ProtectedAttr, Schema};
pub use error::{Error, Result};
pub use groupmetrics::{CostSpec, FairnessReport, Metric};
