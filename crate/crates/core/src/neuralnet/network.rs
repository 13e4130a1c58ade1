use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Dense, Layout, LstmLayer, NetworkSpec};
use crate::error::{Error, Result};

/// How the dropout layer behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Infer,
    /// Dropout active with a mask drawn from this seed.
    Train { mask_seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layout: Layout,
}

/// Activations of the per-tick FF layers and the LSTM stack for one window.
#[derive(Debug, Clone)]
pub struct Trunk {
    pub ticks: usize,
    ff_in: Vec<Vec<f64>>,
    lstm: Vec<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    /// Post-activation gates `[i f g o]` per tick, `T × 4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Dropout mask and downstream activations for one pass through the head.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// Per-unit multiplier: 0 or 1/(1−p); all ones in inference.
    pub mask: Vec<f64>,
    dropped: Vec<f64>,
    acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let j = 4 * k;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W·x + b` for a dense block.
fn affine(p: &[f64], d: &Dense, x: &[f64], out: &mut [f64]) {
    let w = &p[d.w..d.b];
    let b = &p[d.b..d.b + d.out];
    for r in 0..d.out {
        out[r] = b[r] + dot(&w[r * d.inp..(r + 1) * d.inp], x);
    }
}

/// Accumulates `dW += dz ⊗ x`, `db += dz`; writes `Wᵀ·dz` into `dx` when given.
fn affine_back(p: &[f64], d: &Dense, x: &[f64], dz: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
    for r in 0..d.out {
        if dz[r] != 0.0 {
            axpy(dz[r], x, &mut grad[d.w + r * d.inp..d.w + (r + 1) * d.inp]);
        }
        grad[d.b + r] += dz[r];
    }
    if let Some(dx) = dx {
        dx.fill(0.0);
        for r in 0..d.out {
            if dz[r] != 0.0 {
                axpy(dz[r], &p[d.w + r * d.inp..d.w + (r + 1) * d.inp], dx);
            }
        }
    }
}

/// Inverted-dropout multipliers for `n` units.
pub fn dropout_mask(rate: f64, n: usize, seed: u64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 - rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        Ok(Self { spec, layout })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    fn check(&self, params: &[f64], inputs: &[f64]) -> Result<usize> {
        if params.len() != self.layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                params.len()
            )));
        }
        let d = self.spec.input_dim;
        if inputs.is_empty() || inputs.len() % d != 0 {
            return Err(Error::Shape(format!(
                "input length {} is not a positive multiple of input_dim {d}",
                inputs.len()
            )));
        }
        Ok(inputs.len() / d)
    }

    /// Per-tick FF layers followed by the LSTM stack over the whole window.
    /// `inputs` is row-major `T × input_dim`.
    pub fn trunk(&self, params: &[f64], inputs: &[f64]) -> Result<Trunk> {
        let ticks = self.check(params, inputs)?;
        let mut ff_in: Vec<Vec<f64>> = Vec::with_capacity(self.layout.ff_in.len());
        for (i, d) in self.layout.ff_in.iter().enumerate() {
            let x: &[f64] = if i == 0 { inputs } else { &ff_in[i - 1] };
            let mut out = vec![0.0; ticks * d.out];
            for t in 0..ticks {
                let o = &mut out[t * d.out..(t + 1) * d.out];
                affine(params, d, &x[t * d.inp..(t + 1) * d.inp], o);
                o.iter_mut().for_each(|v| *v = v.tanh());
            }
            ff_in.push(out);
        }
        let mut lstm: Vec<LstmCache> = Vec::with_capacity(self.layout.lstm.len());
        for (i, l) in self.layout.lstm.iter().enumerate() {
            let x: &[f64] = match (i, ff_in.last()) {
                (0, Some(a)) => a,
                (0, None) => inputs,
                _ => &lstm[i - 1].h,
            };
            let cache = lstm_forward(params, l, x, ticks);
            lstm.push(cache);
        }
        Ok(Trunk { ticks, ff_in, lstm })
    }

    /// Dropout (if `mask` is given) and the output FF layers applied to `h`.
    pub fn head(&self, params: &[f64], h: &[f64], mask: Option<Vec<f64>>) -> HeadCache {
        let mask = mask.unwrap_or_else(|| vec![1.0; h.len()]);
        let dropped: Vec<f64> = h.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layout.ff_out.len());
        for d in &self.layout.ff_out {
            let x = acts.last().unwrap_or(&dropped);
            let mut out = vec![0.0; d.out];
            affine(params, d, x, &mut out);
            out.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(out);
        }
        let d = &self.layout.head;
        let mut output = vec![0.0; d.out];
        affine(params, d, acts.last().unwrap_or(&dropped), &mut output);
        HeadCache { mask, dropped, acts, output }
    }

    pub fn mask_for(&self, mode: Mode) -> Option<Vec<f64>> {
        match mode {
            Mode::Infer => None,
            Mode::Train { mask_seed } => Some(dropout_mask(self.spec.dropout, self.spec.lstm_cells, mask_seed)),
        }
    }

    pub fn forward_cached(&self, params: &[f64], inputs: &[f64], mode: Mode) -> Result<(Trunk, HeadCache)> {
        let trunk = self.trunk(params, inputs)?;
        let head = self.head(params, trunk.last_hidden(), self.mask_for(mode));
        Ok((trunk, head))
    }

    pub fn forward(&self, params: &[f64], inputs: &[f64], mode: Mode) -> Result<Vec<f64>> {
        Ok(self.forward_cached(params, inputs, mode)?.1.output)
    }

    /// Backpropagation through time of `½‖y − target‖²`; the gradient is
    /// *added* to `grad` so mini-batches can accumulate. Returns the data loss.
    pub fn backward(
        &self,
        params: &[f64],
        inputs: &[f64],
        trunk: &Trunk,
        head: &HeadCache,
        target: &[f64],
        grad: &mut [f64],
    ) -> Result<f64> {
        if target.len() != self.spec.output_dim {
            return Err(Error::Shape(format!(
                "target has {} values, network outputs {}",
                target.len(),
                self.spec.output_dim
            )));
        }
        if grad.len() != self.layout.total {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let dy: Vec<f64> = head.output.iter().zip(target).map(|(y, t)| y - t).collect();
        let loss = 0.5 * dy.iter().map(|e| e * e).sum::<f64>();

        // head
        let d = &self.layout.head;
        let mut dx = vec![0.0; d.inp];
        affine_back(params, d, head.acts.last().unwrap_or(&head.dropped), &dy, grad, Some(&mut dx));
        for (i, d) in self.layout.ff_out.iter().enumerate().rev() {
            let a = &head.acts[i];
            let dz: Vec<f64> = dx.iter().zip(a).map(|(g, a)| g * (1.0 - a * a)).collect();
            let x = if i == 0 { &head.dropped } else { &head.acts[i - 1] };
            let mut below = vec![0.0; d.inp];
            affine_back(params, d, x, &dz, grad, Some(&mut below));
            dx = below;
        }
        // dropout
        let dh_last: Vec<f64> = dx.iter().zip(&head.mask).map(|(g, m)| g * m).collect();

        // LSTM stack, top to bottom
        let ticks = trunk.ticks;
        let top = self.layout.lstm.len() - 1;
        let mut dh_ext = vec![0.0; ticks * self.layout.lstm[top].hidden];
        dh_ext[(ticks - 1) * self.layout.lstm[top].hidden..].copy_from_slice(&dh_last);
        for i in (0..self.layout.lstm.len()).rev() {
            let l = &self.layout.lstm[i];
            let x: &[f64] = match (i, trunk.ff_in.last()) {
                (0, Some(a)) => a,
                (0, None) => inputs,
                _ => &trunk.lstm[i - 1].h,
            };
            dh_ext = lstm_backward(params, l, x, &trunk.lstm[i], &dh_ext, ticks, grad);
        }

        // per-tick input FF layers
        let mut dact = dh_ext;
        for (i, d) in self.layout.ff_in.iter().enumerate().rev() {
            let a = &trunk.ff_in[i];
            let x: &[f64] = if i == 0 { inputs } else { &trunk.ff_in[i - 1] };
            let mut below = if i > 0 { vec![0.0; ticks * d.inp] } else { Vec::new() };
            for t in 0..ticks {
                let dz: Vec<f64> = dact[t * d.out..(t + 1) * d.out]
                    .iter()
                    .zip(&a[t * d.out..(t + 1) * d.out])
                    .map(|(g, a)| g * (1.0 - a * a))
                    .collect();
                let xt = &x[t * d.inp..(t + 1) * d.inp];
                if i > 0 {
                    affine_back(params, d, xt, &dz, grad, Some(&mut below[t * d.inp..(t + 1) * d.inp]));
                } else {
                    affine_back(params, d, xt, &dz, grad, None);
                }
            }
            dact = below;
        }
        Ok(loss)
    }

    /// Single-window loss `½‖y−t‖² + l2·‖W‖²` and its full gradient.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        inputs: &[f64],
        target: &[f64],
        l2: f64,
        mode: Mode,
    ) -> Result<(f64, Vec<f64>)> {
        let (trunk, head) = self.forward_cached(params, inputs, mode)?;
        let mut grad = vec![0.0; self.layout.total];
        let loss = self.backward(params, inputs, &trunk, &head, target, &mut grad)?;
        Ok((loss + add_l2(&self.layout, params, l2, &mut grad), grad))
    }
}

impl Trunk {
    /// Hidden state of the top LSTM layer at the last tick.
    pub fn last_hidden(&self) -> &[f64] {
        let top = self.lstm.last().expect("at least one LSTM layer");
        let h = top.h.len() / self.ticks;
        &top.h[(self.ticks - 1) * h..]
    }
}

/// Adds the gradient of `l2·‖W‖²` (weights only, not biases) and returns the penalty.
pub fn add_l2(layout: &Layout, params: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let mut penalty = 0.0;
    for r in layout.weight_ranges() {
        for j in r {
            penalty += params[j] * params[j];
            grad[j] += 2.0 * l2 * params[j];
        }
    }
    l2 * penalty
}

fn lstm_forward(p: &[f64], l: &LstmLayer, x: &[f64], ticks: usize) -> LstmCache {
    let (h, cols) = (l.hidden, l.cols());
    let w = &p[l.w..l.b];
    let b = &p[l.b..l.b + 4 * h];
    let mut cache = LstmCache {
        gates: vec![0.0; ticks * 4 * h],
        c: vec![0.0; ticks * h],
        tanh_c: vec![0.0; ticks * h],
        h: vec![0.0; ticks * h],
    };
    let mut z = vec![0.0; cols];
    for t in 0..ticks {
        z[..l.inp].copy_from_slice(&x[t * l.inp..(t + 1) * l.inp]);
        if t > 0 {
            z[l.inp..].copy_from_slice(&cache.h[(t - 1) * h..t * h]);
        }
        let g = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for r in 0..4 * h {
            let a = b[r] + dot(&w[r * cols..(r + 1) * cols], &z);
            g[r] = if (2 * h..3 * h).contains(&r) { a.tanh() } else { sigmoid(a) };
        }
        for k in 0..h {
            let c_prev = if t > 0 { cache.c[(t - 1) * h + k] } else { 0.0 };
            let c = g[h + k] * c_prev + g[k] * g[2 * h + k];
            let tc = c.tanh();
            cache.c[t * h + k] = c;
            cache.tanh_c[t * h + k] = tc;
            cache.h[t * h + k] = g[3 * h + k] * tc;
        }
    }
    cache
}

/// BPTT through one LSTM layer. `dh_ext` holds the loss gradient w.r.t. each
/// tick's hidden output from above; returns the gradient w.r.t. the layer input.
fn lstm_backward(
    p: &[f64],
    l: &LstmLayer,
    x: &[f64],
    cache: &LstmCache,
    dh_ext: &[f64],
    ticks: usize,
    grad: &mut [f64],
) -> Vec<f64> {
    let (h, cols) = (l.hidden, l.cols());
    let mut dx = vec![0.0; ticks * l.inp];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    let mut z = vec![0.0; cols];
    let mut dz = vec![0.0; cols];
    for t in (0..ticks).rev() {
        let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let dh = dh_ext[t * h + k] + dh_next[k];
            let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = cache.tanh_c[t * h + k];
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            let c_prev = if t > 0 { cache.c[(t - 1) * h + k] } else { 0.0 };
            da[k] = dc * gg * i * (1.0 - i);
            da[h + k] = dc * c_prev * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - gg * gg);
            da[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        z[..l.inp].copy_from_slice(&x[t * l.inp..(t + 1) * l.inp]);
        if t > 0 {
            z[l.inp..].copy_from_slice(&cache.h[(t - 1) * h..t * h]);
        } else {
            z[l.inp..].fill(0.0);
        }
        dz.fill(0.0);
        for r in 0..4 * h {
            let a = da[r];
            grad[l.b + r] += a;
            if a != 0.0 {
                axpy(a, &z, &mut grad[l.w + r * cols..l.w + (r + 1) * cols]);
                axpy(a, &p[l.w + r * cols..l.w + (r + 1) * cols], &mut dz);
            }
        }
        dx[t * l.inp..(t + 1) * l.inp].copy_from_slice(&dz[..l.inp]);
        dh_next.copy_from_slice(&dz[l.inp..]);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::spec::init_params;
    use rand_distr::{Distribution, Uniform};

    fn small_spec(dropout: f64) -> NetworkSpec {
        NetworkSpec {
            input_dim: 3,
            ff_in: vec![3],
            lstm_layers: 1,
            lstm_cells: 4,
            dropout,
            ff_out: vec![3],
            output_dim: 2,
            init_seed: 11,
        }
    }

    fn random_params(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-scale, scale).unwrap();
        (0..n).map(|_| u.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Network::new(NetworkSpec::desk(5, 2)).unwrap();
        let params = vec![0.0; net.param_count()];
        let inputs: Vec<f64> = (0..5 * 7).map(|k| (k as f64).sin() * 3.0).collect();
        let y = net.forward(&params, &inputs, Mode::Infer).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn inference_is_bitwise_deterministic() {
        let spec = NetworkSpec::desk(4, 2);
        let net = Network::new(spec.clone()).unwrap();
        let params = init_params(&spec);
        let inputs: Vec<f64> = (0..4 * 16).map(|k| (k as f64 * 0.37).cos()).collect();
        let a = net.forward(&params, &inputs, Mode::Infer).unwrap();
        let b = net.forward(&params, &inputs, Mode::Infer).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let net = Network::new(small_spec(0.0)).unwrap();
        let params = vec![0.0; net.param_count()];
        assert!(matches!(net.forward(&params, &[1.0; 4], Mode::Infer), Err(Error::Shape(_))));
        assert!(matches!(net.forward(&params[1..], &[1.0; 3], Mode::Infer), Err(Error::Shape(_))));
    }

    #[test]
    fn single_cell_matches_hand_recurrence() {
        // no FF layers: input → 1-cell LSTM → linear head (weight 1, bias 0)
        let spec = NetworkSpec {
            input_dim: 1,
            ff_in: vec![],
            lstm_layers: 1,
            lstm_cells: 1,
            dropout: 0.0,
            ff_out: vec![],
            output_dim: 1,
            init_seed: 0,
        };
        let net = Network::new(spec).unwrap();
        let l = net.layout.lstm[0];
        let mut p = vec![0.0; net.param_count()];
        // rows i, f, g, o; columns [x, h]
        let w = [[0.5, -0.3], [0.2, 0.4], [1.1, -0.7], [-0.6, 0.9]];
        let b = [0.1, 1.0, -0.2, 0.05];
        for r in 0..4 {
            p[l.w + 2 * r] = w[r][0];
            p[l.w + 2 * r + 1] = w[r][1];
            p[l.b + r] = b[r];
        }
        p[net.layout.head.w] = 1.0;
        let xs = [0.8, -1.3];

        let s = |a: f64| 1.0 / (1.0 + (-a).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let pre: Vec<f64> = (0..4).map(|r| w[r][0] * x + w[r][1] * h + b[r]).collect();
            let (i, f, g, o) = (s(pre[0]), s(pre[1]), pre[2].tanh(), s(pre[3]));
            c = f * c + i * g;
            h = o * c.tanh();
        }
        let y = net.forward(&p, &xs, Mode::Infer).unwrap();
        assert!((y[0] - h).abs() < 1e-12, "{} vs {h}", y[0]);
    }

    fn finite_difference_check(spec: NetworkSpec, ticks: usize, l2: f64, mode: Mode) {
        let net = Network::new(spec.clone()).unwrap();
        let params = random_params(net.param_count(), 5, 0.8);
        let inputs = random_params(ticks * spec.input_dim, 6, 1.0);
        let target = random_params(spec.output_dim, 7, 1.0);
        let (_, grad) = net.loss_and_grad(&params, &inputs, &target, l2, mode).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += eps;
            let up = net.loss_and_grad(&p, &inputs, &target, l2, mode).unwrap().0;
            p[j] -= 2.0 * eps;
            let down = net.loss_and_grad(&p, &inputs, &target, l2, mode).unwrap().0;
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(small_spec(0.0), 2, 0.0, Mode::Infer);
    }

    #[test]
    fn gradients_match_with_l2_dropout_and_stacking() {
        let spec = NetworkSpec {
            input_dim: 2,
            ff_in: vec![3, 3],
            lstm_layers: 2,
            lstm_cells: 3,
            dropout: 0.4,
            ff_out: vec![],
            output_dim: 2,
            init_seed: 3,
        };
        finite_difference_check(spec, 4, 0.01, Mode::Train { mask_seed: 9 });
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let spec = small_spec(0.0);
        let net = Network::new(spec.clone()).unwrap();
        let params = init_params(&spec);
        let inputs = random_params(3 * 5, 1, 1.0);
        let y = net.forward(&params, &inputs, Mode::Infer).unwrap();
        let (loss, grad) = net.loss_and_grad(&params, &inputs, &y, 0.0, Mode::Infer).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn pure_regularizer_gradient() {
        let spec = small_spec(0.0);
        let net = Network::new(spec.clone()).unwrap();
        let params = random_params(net.param_count(), 2, 0.5);
        let inputs = random_params(3 * 3, 4, 1.0);
        let y = net.forward(&params, &inputs, Mode::Infer).unwrap();
        let l2 = 0.03;
        let (_, grad) = net.loss_and_grad(&params, &inputs, &y, l2, Mode::Infer).unwrap();
        let mut is_weight = vec![false; params.len()];
        for r in net.layout.weight_ranges() {
            r.for_each(|j| is_weight[j] = true);
        }
        for j in 0..params.len() {
            let expected = if is_weight[j] { 2.0 * l2 * params[j] } else { 0.0 };
            assert_eq!(grad[j], expected, "parameter {j}");
        }
    }

    #[test]
    fn dropout_mask_is_inverted_and_seeded() {
        let m = dropout_mask(0.5, 10_000, 3);
        assert!(m.iter().all(|v| *v == 0.0 || *v == 2.0));
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        // E[mask] = 1, sd of the mean = 1/√n
        assert!((mean - 1.0).abs() < 3.0 / 100.0);
        assert_eq!(m, dropout_mask(0.5, 10_000, 3));
        assert_eq!(dropout_mask(0.0, 4, 3), vec![1.0; 4]);
    }
}
