//! Scoring and experiment protocols.

mod ari;
mod benchmark;
mod cv;
mod slope;
mod stats;

pub use ari::{adjusted_rand_index, joint_ari};
pub use benchmark::{run_synthetic_benchmark, BenchmarkRun, BenchmarkSpec};
pub use cv::{cross_validate, fold_assignment, CrossValidation, FoldRecord};
pub use slope::{select_by_slope, slope_heuristic, SlopePoint, SlopeSelection};
pub use stats::{welch_t_test, ExperimentResult, WelchTest};
