//! Fair classification when the protected attribute is observed through a
//! noisy channel.
//!
//! Group-fairness constraints evaluated directly on noisily recorded
//! attributes can certify a classifier that is badly unfair on the
//! underlying groups. This crate trains linear classifiers whose constraints
//! are denoised first: observed per-group rates are mapped back through the
//! inverse of the flipping channel, and the fairness program is posed on
//! those reconstructed rates with an explicit slack for estimation error.
//!
//! The pieces are usable on their own:
//!
//! - [`data`]: labeled datasets with categorical protected attributes, CSV
//!   loading, and seeded splits.
//! - [`noise`]: row-stochastic flipping channels, denoising via the inverse
//!   transpose, and noise injection for experiments.
//! - [`metrics`]: eight group-conditional rate families and the min/max
//!   fairness ratio over groups.
//! - [`constraints`]: denoised rate estimates and the residual system
//!   (all-pairs ratio bounds plus per-group mass floors).
//! - [`model`] and [`train`]: logistic models, the soft-indicator surrogate,
//!   and constrained training.
//! - [`solver`]: augmented Lagrangian over L-BFGS with random restarts.
//! - [`baselines`]: unconstrained, constraint-on-noisy-data, and randomized
//!   reference methods.
//! - [`analysis`]: closed forms for how flipping distorts the fairness
//!   ratio, bounds under channel misspecification, and a worked example of
//!   constraining against a predicted attribute.
//! - [`synth`] and [`harness`]: synthetic benchmarks and the repeated
//!   inject/train/evaluate experiment loop with canonical JSON reports.

// Validations are written `!(x > 0.0)` on purpose: the negation rejects
// NaN, where the direct `x <= 0.0` form would silently accept it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod constraints;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod seed;
pub mod solver;
pub mod synth;
pub mod train;

pub use analysis::{
    attribute_predictor_example, simulate_observed_ratio, true_ratio_upper_bound, BinaryPopulation,
    RatioBound,
};
pub use baselines::{randomized_labeling, train_naive_fair, train_unconstrained};
pub use constraints::{
    denoised_estimates, residuals, smooth_residuals, ConstraintConfig, ConstraintResiduals,
    DenoisedEstimates,
};
pub use data::{load_csv, split, write_csv, DatasetSchema, LabeledDataset, ProtectedColumn};
pub use error::{Error, Result};
pub use harness::{
    aggregate, load_dataset, report_to_json, run_experiment, sweep, write_report, DatasetSource,
    ExperimentConfig, ExperimentReport, Method, MetricPlan, NoiseSpec, RepRow, ReportCell, Stat,
    SweepAxis,
};
pub use metrics::{accuracy, empirical_rates, group_rates, omega, MetricKind, RateVectors};
pub use model::{logistic_loss_grad, LinearClassifier};
pub use noise::{estimation_error_bound, inject_noise, EstimationErrorBound, NoiseMatrix};
pub use solver::{
    minimize, minimize_constrained, SolveResult, SolveStatus, SolverConfig, VIOLATION_TOL,
};
pub use synth::{make_synthetic, SyntheticSpec};
pub use train::{constraint_residual_values, train_denoised, Surrogate};
