//! Desk-scale laboratory for loosely coupled radio/inertial pedestrian dead
//! reckoning.
//!
//! The crate simulates reference trajectories and asynchronous sensor
//! streams ([`simkit`]), resamples and windows them ([`streams`]), and
//! estimates poses with classical dead reckoning ([`classic`]), a
//! constant-velocity Kalman filter ([`kalman`]) and a recurrent fusion
//! network ([`neuralnet`]). [`evalkit`] scores the estimators and runs the
//! experiment designs.

pub mod angle;
pub mod classic;
pub mod error;
pub mod evalkit;
pub mod kalman;
pub mod neuralnet;
pub mod pose;
pub mod simkit;
pub mod streams;

pub use error::{Error, ErrorClass, Result};
pub use pose::PoseEstimate;
pub use simkit::{ActivityKind, ActivityProfile, ReferencePose, SensorNoiseSpec};
pub use streams::{Channel, Modality, Segment, SensorSample, WindowBundle};
