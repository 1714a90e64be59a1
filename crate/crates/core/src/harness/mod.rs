//! Training schedules, the model registry, robustness evaluation and
//! analysis exports.

mod eval;
mod export;
mod model;
mod rollout;
mod train;

pub use eval::{evaluate, retention, EvalSettings, ScoreRow, ScoreTable};
pub use export::{export_rule_updates, RuleUpdates};
pub use model::{
    standard_models, standard_models_with, parameter_count, scaled_schedule, MergePoint, MergeSchedule,
    ModelConfig, ModelKind, DEFAULT_GENERATIONS, SMALL_HIDDEN,
};
pub use rollout::Controller;
pub use train::{
    branch_runs, branch_runs_from, rules_run_name, train, GenerationStats, Lineage, MergeEvent,
    RunRecord, TrainSettings, TrainedModel, Trainer, MERGE_N_INIT,
};
