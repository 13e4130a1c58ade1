//! Linear constant-velocity Kalman filter over radio positions and
//! speed-derived velocity.

mod filter;
mod run;
mod tune;

pub use filter::{process_noise, transition, Innovation, KfConfig, KfState};
pub use run::{kf_run, mean_abs_error, HeadingSample, KfInputs, KfRun, KfRunOptions};
pub use tune::{kf_tune, KfGrid, KfTrainingSet, TuneResult};
