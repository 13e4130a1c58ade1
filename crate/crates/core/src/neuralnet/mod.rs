//! Recurrent fusion network: per-tick FF layers → stacked LSTM → dropout →
//! FF head, trained with BPTT and Adam, with MC-dropout uncertainty.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod network;
pub mod predict;
pub mod spec;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState, StepOutcome};
pub use checkpoint::{ModelCheckpoint, TrainingMeta};
pub use features::{build_examples, window_features, Example, FeatureConfig, Normalizer, OutputMode, WindowFeatures};
pub use network::{Mode, Network};
pub use predict::{mc_dropout_predict, predict_trajectory, McPrediction, PredictOptions, Predictor};
pub use spec::{init_params, NetworkSpec};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};
