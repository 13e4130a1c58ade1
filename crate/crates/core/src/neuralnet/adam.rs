use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of applied steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Step taken; the gradient norm before clipping.
    Applied { grad_norm: f64 },
    /// Gradient contained NaN/∞; nothing changed.
    Skipped,
}

pub fn global_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `g` in place so its global L2 norm is at most `clip`. Returns the original norm.
pub fn clip_global_norm(g: &mut [f64], clip: f64) -> f64 {
    let norm = global_norm(g);
    if clip > 0.0 && norm > clip {
        let s = clip / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

/// One bias-corrected Adam update with global-norm clipping (`clip <= 0` disables it).
pub fn adam_step(
    params: &mut [f64],
    grad: &mut [f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
    clip: f64,
) -> StepOutcome {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    if grad.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite gradient at step {}; update skipped", state.t + 1);
        return StepOutcome::Skipped;
    }
    let grad_norm = clip_global_norm(grad, clip);
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for j in 0..params.len() {
        let g = grad[j];
        state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
        state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[j] / bc1;
        let v_hat = state.v[j] / bc2;
        params[j] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    StepOutcome::Applied { grad_norm }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut p = vec![0.5, -1.0];
        let mut st = AdamState { m: vec![0.2, -0.1], v: vec![0.04, 0.01], t: 3 };
        adam_step(&mut p, &mut [0.0, 0.0], &mut st, &AdamConfig::default(), 0.01, 1.0);
        // moments decay; the update is nonzero only through the old moments
        assert_eq!(st.m, vec![0.9 * 0.2, 0.9 * -0.1]);
        assert_eq!(st.v, vec![0.999 * 0.04, 0.999 * 0.01]);
        let mut p0 = vec![0.5, -1.0];
        let mut fresh = AdamState::new(2);
        adam_step(&mut p0, &mut [0.0, 0.0], &mut fresh, &AdamConfig::default(), 0.01, 1.0);
        assert_eq!(p0, vec![0.5, -1.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let g = [0.3, -2.0e-4, 0.0, 5.0];
        let mut p = vec![1.0; 4];
        let mut st = AdamState::new(4);
        let lr = 0.001;
        adam_step(&mut p, &mut g.clone(), &mut st, &cfg, lr, 0.0);
        for j in 0..4 {
            let expected = 1.0 - lr * g[j] / (g[j].abs() + cfg.eps);
            assert!((p[j] - expected).abs() < 1e-12, "{j}: {} vs {expected}", p[j]);
        }
    }

    #[test]
    fn clipping_hits_requested_norm() {
        let mut g = vec![6.0, 8.0];
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 10.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![0.3, 0.4];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2);
        let out = adam_step(&mut p, &mut [f64::NAN, 1.0], &mut st, &AdamConfig::default(), 0.1, 1.0);
        assert_eq!(out, StepOutcome::Skipped);
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.t, 0);
    }
}
