use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::{ModelCheckpoint, TrainingMeta};
use super::features::{Example, FeatureConfig, Normalizer};
use super::network::{add_l2, Mode, Network};
use super::spec::{init_params, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam: AdamConfig,
    /// Multiply the learning rate by `lr_factor` every this many epochs.
    pub lr_halve_every: usize,
    pub lr_factor: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub l2: f64,
    /// Global-norm gradient clip; 0 disables clipping.
    pub grad_clip: f64,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            adam: AdamConfig::default(),
            lr_halve_every: 25,
            lr_factor: 0.5,
            batch: 1024,
            max_epochs: 100,
            patience: 10,
            l2: 1e-5,
            grad_clip: 1.0,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small batches and a larger step so a few epochs on minutes of data converge.
    pub fn desk() -> Self {
        Self {
            lr: 0.005,
            lr_halve_every: 12,
            batch: 16,
            max_epochs: 40,
            patience: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_factor", self.lr_factor),
            ("adam.eps", self.adam.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::config("adam.beta", "betas must lie in [0, 1)"));
        }
        if self.batch == 0 || self.max_epochs == 0 || self.lr_halve_every == 0 {
            return Err(Error::config("batch", "batch, max_epochs and lr_halve_every must be > 0"));
        }
        if !(self.l2 >= 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::config("l2", "l2 and grad_clip must be >= 0"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_factor.powi((epoch / self.lr_halve_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mse: f64,
    pub best_val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochStats>,
    pub skipped_steps: usize,
}

/// Standardized copy of the examples' inputs and targets.
struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn prepare(examples: &[Example], input_norm: &Normalizer, output_norm: &Normalizer) -> Prepared {
    let inputs = examples
        .iter()
        .map(|e| {
            let mut x = e.features.inputs.clone();
            input_norm.apply(&mut x, Some(&e.features.valid));
            x
        })
        .collect();
    let targets = examples
        .iter()
        .map(|e| {
            let mut y = e.target.to_vec();
            output_norm.apply(&mut y, None);
            y
        })
        .collect();
    Prepared { inputs, targets }
}

/// Mean squared Euclidean error in metres² over a prepared set.
fn validation_mse(net: &Network, params: &[f64], set: &Prepared, output_norm: &Normalizer) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        let y = net.forward(params, x, Mode::Infer)?;
        total += y
            .iter()
            .zip(t)
            .zip(&output_norm.std)
            .map(|((a, b), s)| ((a - b) * s).powi(2))
            .sum::<f64>();
    }
    Ok(total / set.inputs.len() as f64)
}

/// Mini-batch Adam training with step decay and early stopping. Returns the
/// parameters of the epoch with the lowest validation error.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    spec: &NetworkSpec,
    features: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("train", "training split is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::config("validation", "validation split is empty"));
    }
    if spec.input_dim != features.input_dim() || spec.output_dim != 2 {
        return Err(Error::config("network", "spec dims do not match the feature config"));
    }
    let net = Network::new(spec.clone())?;
    let dim = spec.input_dim;
    let input_norm = Normalizer::fit(
        train_set.iter().flat_map(|e| {
            e.features
                .inputs
                .chunks_exact(dim)
                .zip(e.features.valid.chunks_exact(dim))
                .map(|(r, v)| (r, Some(v)))
        }),
        dim,
        &features.mask_columns(),
    );
    let output_norm = Normalizer::fit(train_set.iter().map(|e| (&e.target[..], None)), 2, &[]);
    let tr = prepare(train_set, &input_norm, &output_norm);
    let va = prepare(val_set, &input_norm, &output_norm);

    let mut params = init_params(spec);
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..tr.inputs.len()).collect();
    let mut grad = vec![0.0; params.len()];

    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut history = Vec::new();
    let (mut since_best, mut skipped) = (0usize, 0usize);
    let (mut train_losses, mut val_mses) = (Vec::new(), Vec::new());

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let mode = Mode::Train { mask_seed: rng.random() };
                let (trunk, head) = net.forward_cached(&params, &tr.inputs[i], mode)?;
                batch_loss += net.backward(&params, &tr.inputs[i], &trunk, &head, &tr.targets[i], &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let penalty = add_l2(&net.layout, &params, cfg.l2, &mut grad);
            epoch_loss += batch_loss + penalty * batch.len() as f64;
            if let super::adam::StepOutcome::Skipped = adam_step(&mut params, &mut grad, &mut state, &cfg.adam, lr, cfg.grad_clip) {
                skipped += 1;
            }
        }
        let train_loss = epoch_loss / tr.inputs.len() as f64;
        let val_mse = validation_mse(&net, &params, &va, &output_norm)?;
        train_losses.push(train_loss);
        val_mses.push(val_mse);
        if val_mse < best.0 {
            best = (val_mse, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::debug!("epoch {epoch}: lr {lr:.2e} train {train_loss:.5} val {val_mse:.5}");
        history.push(EpochStats { epoch, lr, train_loss, val_mse, best_val_mse: best.0 });
        if !val_mse.is_finite() {
            log::warn!("validation error is not finite at epoch {epoch}; stopping");
            break;
        }
        if since_best > cfg.patience {
            break;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numeric("training diverged before any finite validation error".into()));
    }
    let checkpoint = ModelCheckpoint {
        spec: spec.clone(),
        features: features.clone(),
        input_norm,
        output_norm,
        meta: Some(TrainingMeta {
            epochs_run: history.len(),
            best_epoch: best.2,
            train_loss: train_losses,
            val_mse: val_mses,
            seed: cfg.seed,
            config: cfg.clone(),
        }),
        weights: best.1,
    };
    Ok(TrainOutcome { checkpoint, history, skipped_steps: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::features::WindowFeatures;
    use crate::streams::Channel;

    /// Constant-velocity windows of (x, y) positions; target is the endpoint
    /// relative to the last position one tick ahead.
    fn toy(n: usize, seed: u64) -> (FeatureConfig, Vec<Example>) {
        let features = FeatureConfig {
            inputs: vec![Channel::PRadio],
            validity_mask: false,
            window: 6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = (0..n)
            .map(|i| {
                let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let mut inputs = Vec::new();
                for t in 0..6 {
                    let back = (5 - t) as f64;
                    inputs.extend_from_slice(&[-v[0] * back, -v[1] * back]);
                }
                Example {
                    features: WindowFeatures { valid: vec![true; inputs.len()], inputs, anchor: [0.0, 0.0] },
                    target: v,
                    origin: [0.0, 0.0],
                    segment: 0,
                    target_tick: i,
                }
            })
            .collect();
        (features, ex)
    }

    fn toy_spec(features: &FeatureConfig) -> NetworkSpec {
        NetworkSpec {
            input_dim: features.input_dim(),
            ff_in: vec![8],
            lstm_layers: 1,
            lstm_cells: 8,
            dropout: 0.0,
            ff_out: vec![],
            output_dim: 2,
            init_seed: 1,
        }
    }

    #[test]
    fn learns_constant_velocity_endpoint() {
        let (features, ex) = toy(300, 3);
        let (tr, va) = ex.split_at(240);
        let cfg = TrainConfig {
            lr: 0.01,
            batch: 16,
            max_epochs: 50,
            patience: 50,
            l2: 0.0,
            lr_halve_every: 15,
            ..TrainConfig::default()
        };
        let out = train(tr, va, &toy_spec(&features), &features, &cfg).unwrap();
        let best = out.history.last().unwrap().best_val_mse;
        assert!(best < 1e-3, "validation MSE {best}");
        // best-so-far never increases
        assert!(out.history.windows(2).all(|w| w[1].best_val_mse <= w[0].best_val_mse));
    }

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        let (features, ex) = toy(60, 5);
        let (tr, va) = ex.split_at(40);
        // a huge step makes the run worsen quickly
        let cfg = TrainConfig { lr: 0.5, batch: 8, max_epochs: 30, patience: 0, grad_clip: 0.0, ..TrainConfig::default() };
        let out = train(tr, va, &toy_spec(&features), &features, &cfg).unwrap();
        let h = &out.history;
        let first_bad = (1..h.len()).find(|&e| h[e].val_mse >= h[e - 1].best_val_mse);
        let stop = h.len() - 1;
        assert_eq!(Some(stop), first_bad);
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let (features, ex) = toy(40, 8);
        let (tr, va) = ex.split_at(30);
        let spec = NetworkSpec { dropout: 0.5, ..toy_spec(&features) };
        let cfg = TrainConfig { batch: 8, max_epochs: 3, ..TrainConfig::default() };
        let a = train(tr, va, &spec, &features, &cfg).unwrap().checkpoint;
        let b = train(tr, va, &spec, &features, &cfg).unwrap().checkpoint;
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write(&mut ba).unwrap();
        b.write(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn empty_splits_are_config_errors() {
        let (features, ex) = toy(4, 1);
        let spec = toy_spec(&features);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[], &ex, &spec, &features, &cfg), Err(Error::Config { .. })));
        assert!(matches!(train(&ex, &[], &spec, &features, &cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn lr_schedule_halves() {
        let cfg = TrainConfig { lr: 0.01, lr_halve_every: 3, ..TrainConfig::default() };
        assert_eq!(cfg.lr_at(0), 0.01);
        assert_eq!(cfg.lr_at(2), 0.01);
        assert_eq!(cfg.lr_at(3), 0.005);
        assert_eq!(cfg.lr_at(7), 0.0025);
    }
}
