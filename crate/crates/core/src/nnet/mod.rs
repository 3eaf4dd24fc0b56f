//! One-hidden-layer ReLU classifier with hand-written backpropagation.

mod checkpoint;
mod checks;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use checks::{
    gradient_suite, lift_suite, random_model, random_targets, GradSuiteReport, LiftSuiteReport,
    GRAD_EPS, GRAD_TOL, KINK_MARGIN, LIFT_TOL,
};
pub use gradcheck::{grad_check, min_kink_distance};
pub use loss::{
    classify_error, error_from_logits, log_sum_exp, loss_and_grad, loss_and_logit_grad, loss_only,
    LossKind,
};
pub use model::{init_mlp, lift_model, param_count, MlpModel};
pub use optim::{opt_step, LrSchedule, OptimConfig, OptimState, OptimizerKind};
pub use train::{evaluate, train, EvalMetrics, TraceRow, TrainConfig, TrainSource, TrainTrace};
