//! AdamW optimization with a cosine schedule, deterministic toy tasks, and
//! the sweep harnesses.
//!
//! A single run is sequential and bit-reproducible. Sweep jobs are
//! independent and may execute in parallel; reports are assembled in a
//! canonical order regardless of completion order.

mod optim;
mod sweep;
mod task;
mod train;

pub use optim::{adamw_step, learning_rate_at, OptimizerConfig, OptimizerState};
pub use sweep::{
    assemble_report, plan_sweep, run_job, run_sweep, ArmMedian, SweepAxis, SweepEntry, SweepGrid,
    SweepJob, SweepReport,
};
pub use task::{
    argmax_columns, make_teacher_student_task, make_toy_classification_task, matched_budget_rank,
    tanh_matrix, ClassificationBatch, Metric, RegressionBatch, Task, TeacherStudentTask,
    ToyClassificationTask,
};
pub use train::{evaluate_adapters, train, RunMetrics, TrainOutcome};
