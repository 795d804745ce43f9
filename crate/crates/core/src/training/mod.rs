//! Loss, gradients, the RAdam optimizer, learning-rate schedules and the
//! training loop shared by pre-training and finetuning.

mod radam;
mod run;
mod schedule;

pub use crate::model::{backward, loss, LossValue};
pub use radam::{radam_step, rho_t, OptimizerState, RadamStep};
pub use run::{run_training, write_metrics, BatchSpec, StepMetrics, TrainConfig};
pub use schedule::{lr_at, ScheduleConfig};
