//! Loss assembly, dataset generation, training, metrics and experiment runners.

mod data;
mod eval;
mod metrics;
mod studies;
mod train;

use thiserror::Error;

use crate::autodiff::AdError;
use crate::expr::ExprError;
use crate::model::ModelError;
use crate::pde_zoo::ZooError;
use crate::solvers::SolverError;

pub use data::{
    generate, input_indices, make_batch, model_time, normalize_batch, sample_from_trajectory, stamp_times,
    BatchSpec, Dataset, GenPart, GenReport, GenSpec, NormStats, Sample, SymbolInput, MAX_RESAMPLES,
};
pub use eval::{
    evaluate, run_time_marching, EvalOptions, RolloutOptions, RolloutReport, WindowError, MAX_ROLLOUT_HORIZON,
};
pub use metrics::{
    r2_sample, r2_score, relative_l2, relative_l2_sample, FamilyMetrics, MetricReport, SampleOutcome, SetMetric,
};
pub use studies::{
    colliding_dataset, collision_comparison, fit, ic_collisions, run_input_ablation, run_study, run_study1,
    run_study1_with, run_table1, run_transfer_study, run_weight_ablation, similarity, weight_grid, Fitted, StudyId,
    StudyReport, StudyRow, StudySettings, StudySpec, BASE_FAMILIES, COLLIDING_FAMILIES, UNSEEN_OPERATOR_TRAIN,
};
pub use train::{loss, train, LossRecord, LossVars, LossWeights, TrainConfig, TrainLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dataset generation: {0}")]
    Generation(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}
