//! Error metrics, settling analysis and the experiment runners.

pub mod dataset;
pub mod estimators;
pub mod experiments;
pub mod metrics;
pub mod pool;

pub use dataset::{simulate_subject, SimulationConfig, Subject};
pub use estimators::{classic_estimates, kf_estimates, pdrnn_estimates, EstimatorKind};
pub use metrics::{median, median_settling, position_errors, settling_time, summarize, summarize_timed, ErrorReport, TimedError, SETTLING_HOLD};
pub use experiments::{
    make_cohort, run_activity_comparison, run_delta_parity, run_design, run_forecast_sweep, run_input_variation, run_recal_sweep, subject_seed, test_subjects,
    thin_radio, train_network, tune_kf, Cell, Cohort, Design, ExperimentConfig, ExperimentResult, GroupSummary, SettlingStats, Trajectory,
};
pub use pool::run_jobs;
