//! Simulation harness: generators with known truths and the Monte Carlo
//! experiments built on them.

pub mod experiments;
pub mod models;
pub mod report;

pub use experiments::{
    beta_cell, coverage_experiment, mirse_terms, power_experiment, predictive_consistency_experiment,
    rmirse, rmirse_experiment, size_cell, CoverageConfig, DataSource, ExperimentSpec, PowerConfig,
    PredictiveConfig, PredictiveDesign, RmirseConfig, COVERAGE_TARGETS,
};
pub use models::{
    sample_conditional, sample_marginal, ConditionalModel, CovariateLaw, MarginalModel, ScedasisShape,
};
pub use report::{ExperimentReport, ReportRow};
