//! Turning segment windows into network inputs and targets.
//!
//! Positions are expressed relative to an *anchor*, the last valid radio fix
//! inside the window, so the network never sees absolute coordinates.
//! Headings enter as (sin, cos). Invalid ticks are zero-imputed after
//! standardization and, optionally, flagged by an appended validity channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{horizon_ticks, make_windows, Channel, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// Predict the target position relative to the window anchor.
    Absolute,
    /// Predict the displacement from the previous estimate, which is fed back
    /// as an extra input.
    Delta,
}

impl std::str::FromStr for OutputMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(OutputMode::Absolute),
            "delta" => Ok(OutputMode::Delta),
            other => Err(Error::config("output_mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub inputs: Vec<Channel>,
    /// Append one validity flag per input channel.
    pub validity_mask: bool,
    pub output_mode: OutputMode,
    /// Window length in ticks.
    pub window: usize,
    pub overlap: f64,
    /// Forecast horizon in seconds.
    pub horizon: f64,
    /// Std (m) of the noise added to the previous-estimate input in delta training.
    pub delta_jitter: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            inputs: vec![Channel::PRadio, Channel::Speed],
            validity_mask: true,
            output_mode: OutputMode::Absolute,
            window: 128,
            overlap: 0.5,
            horizon: 0.0,
            delta_jitter: 0.1,
        }
    }
}

fn channel_features(c: Channel) -> usize {
    match c {
        Channel::PRadio => 2,
        Channel::ThetaRadio | Channel::ThetaOri => 2,
        Channel::Speed => 1,
        Channel::Acc => 3,
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::config("inputs", "select at least one channel"));
        }
        if self.output_mode == OutputMode::Delta && !self.inputs.contains(&Channel::PRadio) {
            return Err(Error::config("inputs", "delta mode needs p_radio"));
        }
        if self.window < 2 {
            return Err(Error::config("window", "must be >= 2 ticks"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("overlap", "must be in [0, 1)"));
        }
        if !(self.horizon >= 0.0) || !(self.delta_jitter >= 0.0) {
            return Err(Error::config("horizon", "horizon and jitter must be >= 0"));
        }
        Ok(())
    }

    /// Number of input features per tick.
    pub fn input_dim(&self) -> usize {
        let base: usize = self.inputs.iter().map(|c| channel_features(*c)).sum();
        let mask = if self.validity_mask { self.inputs.len() } else { 0 };
        let delta = if self.output_mode == OutputMode::Delta { 2 } else { 0 };
        base + mask + delta
    }

    /// Tick spacing between successive estimates in delta mode.
    pub fn delta_stride(&self) -> usize {
        (self.window / 2).max(1)
    }

    /// Column indices that are validity flags and therefore never standardized.
    pub fn mask_columns(&self) -> Vec<usize> {
        if !self.validity_mask {
            return Vec::new();
        }
        let base: usize = self.inputs.iter().map(|c| channel_features(*c)).sum();
        (base..base + self.inputs.len()).collect()
    }
}

/// Raw (unstandardized) features of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    /// Row-major `window × input_dim`.
    pub inputs: Vec<f64>,
    /// Per-tick validity of every feature column (mask columns always valid).
    pub valid: Vec<bool>,
    pub anchor: [f64; 2],
}

fn anchor_of(seg: &Segment, start: usize, end: usize) -> Result<[f64; 2]> {
    let p = seg.channel(Channel::PRadio)?;
    let k = (start..=end).rev().find(|&k| p.is_valid(k)).unwrap_or(end);
    Ok(p.point(k))
}

/// Features for the window `[start, start + window)`. In delta mode `prev`
/// is the previous position estimate.
pub fn window_features(seg: &Segment, cfg: &FeatureConfig, start: usize, prev: Option<[f64; 2]>) -> Result<WindowFeatures> {
    let n = cfg.window;
    let end = start + n - 1;
    if end >= seg.len {
        return Err(Error::Shape(format!("window ending at tick {end} exceeds segment length {}", seg.len)));
    }
    let anchor = anchor_of(seg, start, end)?;
    let dim = cfg.input_dim();
    let mut inputs = vec![0.0; n * dim];
    let mut valid = vec![true; n * dim];
    let mask_base: usize = cfg.inputs.iter().map(|c| channel_features(*c)).sum();
    let mut col = 0;
    for (ci, &c) in cfg.inputs.iter().enumerate() {
        let data = seg.channel(c)?;
        let w = channel_features(c);
        for t in 0..n {
            let k = start + t;
            let mut ok = data.is_valid(k);
            let row = &mut inputs[t * dim + col..t * dim + col + w];
            match c {
                Channel::PRadio => match cfg.output_mode {
                    OutputMode::Absolute => {
                        let p = data.point(k);
                        row.copy_from_slice(&[p[0] - anchor[0], p[1] - anchor[1]]);
                    }
                    OutputMode::Delta => {
                        if k == 0 || !data.is_valid(k - 1) {
                            ok = false;
                        } else {
                            let (a, b) = (data.point(k - 1), data.point(k));
                            row.copy_from_slice(&[b[0] - a[0], b[1] - a[1]]);
                        }
                    }
                },
                Channel::ThetaRadio | Channel::ThetaOri => {
                    let a = data.row(k)[0];
                    row.copy_from_slice(&[a.sin(), a.cos()]);
                }
                Channel::Speed | Channel::Acc => row.copy_from_slice(data.row(k)),
            }
            if !ok {
                row.fill(0.0);
                valid[t * dim + col..t * dim + col + w].fill(false);
            }
            if cfg.validity_mask {
                inputs[t * dim + mask_base + ci] = if ok { 1.0 } else { 0.0 };
            }
        }
        col += w;
    }
    if cfg.output_mode == OutputMode::Delta {
        let prev = prev.ok_or_else(|| Error::config("prev", "delta mode needs a previous estimate"))?;
        let off = dim - 2;
        for t in 0..n {
            inputs[t * dim + off] = anchor[0] - prev[0];
            inputs[t * dim + off + 1] = anchor[1] - prev[1];
        }
    }
    Ok(WindowFeatures { inputs, valid, anchor })
}

/// One supervised example in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: WindowFeatures,
    pub target: [f64; 2],
    /// Position the target is expressed relative to (anchor or previous estimate).
    pub origin: [f64; 2],
    pub segment: usize,
    pub target_tick: usize,
}

/// Windows of every segment with their targets. Delta-mode previous estimates
/// are the reference `delta_stride` ticks before the target plus Gaussian jitter.
pub fn build_examples(segments: &[Segment], cfg: &FeatureConfig, seed: u64) -> Result<Vec<Example>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.delta_jitter.max(0.0)).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut out = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        let reference = seg.reference()?;
        for w in make_windows(seg, cfg.window, cfg.overlap, cfg.horizon)? {
            let goal = reference[w.target_tick].position();
            let (prev, origin_is_prev) = match cfg.output_mode {
                OutputMode::Absolute => (None, false),
                OutputMode::Delta => {
                    let s = cfg.delta_stride();
                    if w.target_tick < s {
                        continue;
                    }
                    let r = reference[w.target_tick - s].position();
                    let p = [r[0] + jitter.sample(&mut rng), r[1] + jitter.sample(&mut rng)];
                    (Some(p), true)
                }
            };
            let features = window_features(seg, cfg, w.start_tick, prev)?;
            let origin = if origin_is_prev { prev.unwrap() } else { features.anchor };
            out.push(Example {
                target: [goal[0] - origin[0], goal[1] - origin[1]],
                origin,
                features,
                segment: si,
                target_tick: w.target_tick,
            });
        }
    }
    Ok(out)
}

/// Target tick of the window starting at `start`.
pub fn target_tick(seg: &Segment, cfg: &FeatureConfig, start: usize) -> usize {
    start + cfg.window - 1 + horizon_ticks(cfg.horizon, seg.fs)
}

/// Per-column affine standardization `(x − mean)/std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Statistics over rows of width `dim`, skipping entries flagged invalid
    /// and leaving the columns in `skip` untouched.
    pub fn fit<'a>(rows: impl Iterator<Item = (&'a [f64], Option<&'a [bool]>)>, dim: usize, skip: &[usize]) -> Self {
        let mut n = vec![0usize; dim];
        let mut s = vec![0.0; dim];
        let mut s2 = vec![0.0; dim];
        for (row, valid) in rows {
            for j in 0..dim {
                if valid.is_some_and(|v| !v[j]) {
                    continue;
                }
                n[j] += 1;
                s[j] += row[j];
                s2[j] += row[j] * row[j];
            }
        }
        let mut norm = Self::identity(dim);
        for j in 0..dim {
            if skip.contains(&j) || n[j] == 0 {
                continue;
            }
            let m = s[j] / n[j] as f64;
            let var = (s2[j] / n[j] as f64 - m * m).max(0.0);
            norm.mean[j] = m;
            norm.std[j] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        norm
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes row-major data in place; invalid entries become 0.
    pub fn apply(&self, data: &mut [f64], valid: Option<&[bool]>) {
        let d = self.dim();
        for (i, x) in data.iter_mut().enumerate() {
            let j = i % d;
            *x = if valid.is_some_and(|v| !v[i]) { 0.0 } else { (*x - self.mean[j]) / self.std[j] };
        }
    }

    pub fn invert(&self, data: &mut [f64]) {
        let d = self.dim();
        for (i, x) in data.iter_mut().enumerate() {
            *x = *x * self.std[i % d] + self.mean[i % d];
        }
    }
}
