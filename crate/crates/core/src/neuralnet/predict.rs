use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::ModelCheckpoint;
use super::features::{target_tick, window_features, OutputMode, WindowFeatures};
use super::network::{dropout_mask, Network};
use crate::error::{Error, Result};
use crate::pose::PoseEstimate;
use crate::streams::{Channel, Segment};

/// Output-space mean and per-axis variance of repeated dropout passes.
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// True when a single pass was taken and the variance carries no information.
    pub degenerate: bool,
}

/// A loaded checkpoint ready for repeated inference.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub checkpoint: ModelCheckpoint,
    net: Network,
}

impl Predictor {
    pub fn new(checkpoint: ModelCheckpoint) -> Result<Self> {
        checkpoint.check()?;
        let net = Network::new(checkpoint.spec.clone())?;
        Ok(Self { checkpoint, net })
    }

    /// Deterministic prediction (dropout off), in raw output units.
    pub fn predict(&self, f: &WindowFeatures) -> Result<Vec<f64>> {
        let x = self.standardize(f);
        let mut y = self.net.forward(&self.checkpoint.weights, &x, super::network::Mode::Infer)?;
        self.checkpoint.output_norm.invert(&mut y);
        Ok(y)
    }

    /// `passes` forward passes with distinct dropout masks. The LSTM trunk is
    /// shared across passes since dropout only acts after it.
    pub fn mc_dropout(&self, f: &WindowFeatures, passes: usize, seed: u64) -> Result<McPrediction> {
        if passes == 0 {
            return Err(Error::config("mc_passes", "must be >= 1"));
        }
        let x = self.standardize(f);
        let w = &self.checkpoint.weights;
        let trunk = self.net.trunk(w, &x)?;
        let h = trunk.last_hidden();
        let dim = self.checkpoint.spec.output_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = vec![0.0; dim];
        let mut sum2 = vec![0.0; dim];
        let outputs: Vec<Vec<f64>> = (0..passes)
            .map(|_| {
                let mask = dropout_mask(self.checkpoint.spec.dropout, h.len(), rng.random());
                let mut y = self.net.head(w, h, Some(mask)).output;
                self.checkpoint.output_norm.invert(&mut y);
                y
            })
            .collect();
        // shifted by the first pass so identical outputs give exactly zero variance
        let y0 = outputs[0].clone();
        for y in &outputs {
            for j in 0..dim {
                let d = y[j] - y0[j];
                sum[j] += d;
                sum2[j] += d * d;
            }
        }
        let n = passes as f64;
        let mean: Vec<f64> = (0..dim).map(|j| y0[j] + sum[j] / n).collect();
        let var = if passes > 1 {
            (0..dim).map(|j| ((sum2[j] - sum[j] * sum[j] / n) / (n - 1.0)).max(0.0)).collect()
        } else {
            vec![0.0; dim]
        };
        Ok(McPrediction { mean, var, degenerate: passes == 1 })
    }

    fn standardize(&self, f: &WindowFeatures) -> Vec<f64> {
        let mut x = f.inputs.clone();
        self.checkpoint.input_norm.apply(&mut x, Some(&f.valid));
        x
    }
}

/// Free-function form of [`Predictor::mc_dropout`].
pub fn mc_dropout_predict(
    checkpoint: &ModelCheckpoint,
    features: &WindowFeatures,
    passes: usize,
    seed: u64,
) -> Result<McPrediction> {
    Predictor::new(checkpoint.clone())?.mc_dropout(features, passes, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    /// Ticks between successive windows (absolute mode); delta mode always
    /// uses the checkpoint's delta stride.
    pub stride: usize,
    /// Dropout passes per window; 0 disables MC dropout (variance 0).
    pub mc_passes: usize,
    pub seed: u64,
    /// Delta mode start position; defaults to the radio fix at the first
    /// previous-estimate tick.
    pub start: Option<[f64; 2]>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { stride: 1, mc_passes: 0, seed: 0, start: None }
    }
}

/// Slides windows over `seg` and emits one estimate per window, stamped at
/// the target time (window end + horizon).
pub fn predict_trajectory(seg: &Segment, predictor: &Predictor, opts: &PredictOptions) -> Result<Vec<PoseEstimate>> {
    let cfg = &predictor.checkpoint.features;
    for c in &cfg.inputs {
        seg.channel(*c)?;
    }
    if opts.stride == 0 {
        return Err(Error::config("stride", "must be >= 1"));
    }
    let n = cfg.window;
    if seg.len < n {
        return Ok(Vec::new());
    }
    let run = |f: &WindowFeatures, k: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        if opts.mc_passes == 0 {
            Ok((predictor.predict(f)?, vec![0.0; 2]))
        } else {
            let mc = predictor.mc_dropout(f, opts.mc_passes, opts.seed.wrapping_add(k as u64))?;
            Ok((mc.mean, mc.var))
        }
    };
    let mut out = Vec::new();
    match cfg.output_mode {
        OutputMode::Absolute => {
            let mut start = 0;
            while start + n <= seg.len {
                let f = window_features(seg, cfg, start, None)?;
                let (y, var) = run(&f, start)?;
                out.push(PoseEstimate {
                    t: seg.time(target_tick(seg, cfg, start)),
                    mean: [f.anchor[0] + y[0], f.anchor[1] + y[1]],
                    var: [var[0], var[1]],
                    horizon: cfg.horizon,
                });
                start += opts.stride;
            }
        }
        OutputMode::Delta => {
            let s = cfg.delta_stride();
            let first_prev = target_tick(seg, cfg, 0).saturating_sub(s);
            let mut prev = match opts.start {
                Some(p) => p,
                None => seg.channel(Channel::PRadio)?.point(first_prev.min(seg.len - 1)),
            };
            let mut start = 0;
            while start + n <= seg.len {
                let f = window_features(seg, cfg, start, Some(prev))?;
                let (y, var) = run(&f, start)?;
                prev = [prev[0] + y[0], prev[1] + y[1]];
                out.push(PoseEstimate {
                    t: seg.time(target_tick(seg, cfg, start)),
                    mean: prev,
                    var: [var[0], var[1]],
                    horizon: cfg.horizon,
                });
                start += s;
            }
        }
    }
    Ok(out)
}
