//! Run configuration, the training loop, evaluation, metric files and the
//! ablation runner.

mod ablation;
mod config;
mod eval;
mod learner;
mod metrics;
mod train;

pub use ablation::{ablation_run, median, AblationRow, Setting, Sweep, Variant};
pub use config::{AgentKind, EnvKind, Precision, RunConfig};
pub use eval::{evaluate, evaluate_checkpoint, load_learner, EvalResult};
pub use learner::{Head, Learner};
pub use metrics::{read_metrics, write_metrics, write_summary, MetricsRecord};
pub use train::{area_under_curve, train, TrainOutput};
