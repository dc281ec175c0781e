//! Fairness under a fixed budget of positive decisions.
//!
//! A [`ScoredDataset`] holds model scores, binary labels and a group key per
//! instance. Every allocation selects a prefix of each group's score ranking,
//! so an allocation is a vector of per-group counts summing to the budget `K`.
//!
//! - [`enforce`]: demographic parity and equal opportunity at an exact budget.
//! - [`minimax`]: minimise the worst group's harm, plus an exhaustive oracle.
//! - [`bounds`]: swap-counting bounds on the cost of fairness.
//! - [`analysis`]: cost sweeps, allocation curves and parameter studies.
//! - [`synth`]: seeded synthetic datasets with controllable disparity and noise.

pub mod allocation;
pub mod analysis;
pub mod apportion;
pub mod bounds;
pub mod dataset;
pub mod enforce;
pub mod error;
mod leveling;
pub mod metrics;
pub mod minimax;
pub mod report;
pub mod synth;

pub use allocation::Allocation;
pub use dataset::{ColumnMap, GroupStats, ScoredDataset, ScoredSample, Split};
pub use enforce::{enforce, enforce_dp, enforce_harm_cap, EnforcementResult};
pub use error::{Error, Result};
pub use metrics::{HarmKind, HarmSpec, MetricAtR};
pub use minimax::solve_minimax;
