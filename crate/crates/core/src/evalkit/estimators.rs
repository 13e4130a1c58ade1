//! Uniform wrappers that turn each estimator's output into `PoseEstimate`s.

use serde::{Deserialize, Serialize};

use super::dataset::Subject;
use crate::classic::{reconstruct_segment, ClassicOptions};
use crate::error::Result;
use crate::kalman::{kf_run, KfConfig, KfRunOptions};
use crate::neuralnet::{predict_trajectory, PredictOptions, Predictor};
use crate::pose::PoseEstimate;
use crate::streams::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Classic,
    Kf,
    Pdrnn,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Classic => "classic",
            EstimatorKind::Kf => "kf",
            EstimatorKind::Pdrnn => "pdrnn",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" | "pdr" => Ok(EstimatorKind::Classic),
            "kf" => Ok(EstimatorKind::Kf),
            "pdrnn" | "nn" => Ok(EstimatorKind::Pdrnn),
            other => Err(crate::Error::config("estimator", format!("unknown estimator `{other}`"))),
        }
    }
}

pub fn classic_estimates(seg: &Segment, opts: &ClassicOptions) -> Result<Vec<PoseEstimate>> {
    Ok(reconstruct_segment(seg, opts)?
        .points
        .iter()
        .map(|p| PoseEstimate { t: p.t, mean: [p.x, p.y], var: [0.0; 2], horizon: 0.0 })
        .collect())
}

/// Filter estimates at every segment tick, forecast `horizon` seconds ahead.
pub fn kf_estimates(subject: &Subject, config: &KfConfig, horizon: f64, calibration_window: f64) -> Result<Vec<PoseEstimate>> {
    let inputs = subject.kf_inputs(calibration_window)?;
    let seg = &subject.segment;
    let opts = KfRunOptions { horizon, ..KfRunOptions::default() };
    let times: Vec<f64> = seg.times().into_iter().filter(|t| t + horizon <= seg.time(seg.len - 1) + 1e-9).collect();
    Ok(kf_run(&inputs, config, &times, &opts)?.estimates)
}

pub fn pdrnn_estimates(seg: &Segment, predictor: &Predictor, opts: &PredictOptions) -> Result<Vec<PoseEstimate>> {
    let mut est = predict_trajectory(seg, predictor, opts)?;
    let t_end = seg.time(seg.len - 1) + 1e-9;
    est.retain(|e| e.t <= t_end);
    Ok(est)
}
