//! Mini-batch training, gradient checking, and group-size sweeps.

mod config;
mod gradcheck;
mod sweep;
mod trainer;

pub use config::TrainConfig;
pub use gradcheck::{gradcheck, GradcheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use sweep::{mean_ci95, paired_t_test, run_group_size_sweep, PairedTest, SweepRow, SweepTable};
pub use trainer::{prepare_dataset, train, EvalPoint, TrainReport};
