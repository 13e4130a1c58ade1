use pdrlab::kalman::{KfConfig, KfState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Posterior position variance of one axis after iterating the scalar-written
/// 2×2 Riccati recursion to convergence.
fn steady_state_pxx(dt: f64, q0: f64, r: f64) -> f64 {
    let (q11, q12, q22) = (q0 * dt.powi(3) / 3.0, q0 * dt * dt / 2.0, q0 * dt);
    let (mut a, mut b, mut c) = (1.0, 0.0, 1.0);
    for _ in 0..200_000 {
        let pa = a + 2.0 * dt * b + dt * dt * c + q11;
        let pb = b + dt * c + q12;
        let pc = c + q22;
        let s = pa + r;
        let next = (pa - pa * pa / s, pb - pa * pb / s, pc - pb * pb / s);
        let done = (next.0 - a).abs() < 1e-15 * next.0;
        (a, b, c) = next;
        if done {
            break;
        }
    }
    a
}

struct Run {
    pxx: f64,
    normalized: Vec<f64>,
}

fn simulate(dt: f64, q0: f64, r: f64, steps: usize, seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    // Cholesky factor of the per-axis process noise block
    let l11 = (q0 * dt.powi(3) / 3.0).sqrt();
    let l21 = q0 * dt * dt / 2.0 / l11;
    let l22 = (q0 * dt - l21 * l21).sqrt();
    let mut truth = [[0.0, 0.8], [0.0, 0.3]];
    let cfg = KfConfig { p0: 1.0, q0, r_pos: r, r_vel: 1.0, x0: [0.0, 0.0, 0.8, 0.3] };
    let mut kf = KfState::new(&cfg, 0.0);
    let mut normalized = Vec::new();
    for k in 0..steps {
        for axis in truth.iter_mut() {
            let (w1, w2) = (g(), g());
            axis[0] += dt * axis[1] + l11 * w1;
            axis[1] += l21 * w1 + l22 * w2;
        }
        kf.predict(dt, q0);
        let z = [truth[0][0] + r.sqrt() * g(), truth[1][0] + r.sqrt() * g()];
        let inn = kf.update_position(z, r).unwrap();
        if k >= 200 {
            normalized.push(inn.residual[0] / inn.covariance[(0, 0)].sqrt());
        }
    }
    Run { pxx: kf.p[(0, 0)], normalized }
}

#[test]
fn covariance_reaches_riccati_fixed_point() {
    for &(dt, q0, r) in &[(0.04, 0.5, 0.1), (0.1, 2.0, 0.5), (0.02, 0.1, 0.02)] {
        let run = simulate(dt, q0, r, 3000, 1);
        let expected = steady_state_pxx(dt, q0, r);
        assert!((run.pxx - expected).abs() < 0.01 * expected, "dt {dt}: {} vs {expected}", run.pxx);
    }
}

#[test]
fn innovations_are_white_with_unit_variance() {
    let run = simulate(0.04, 0.5, 0.1, 20_000, 7);
    let v = &run.normalized;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!((0.9..1.1).contains(&var), "variance {var}");
    assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
    // lag autocorrelations inside a ±4/√n band
    for lag in 1..=5 {
        let rho = v.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / (n * var);
        assert!(rho.abs() < 4.0 / n.sqrt(), "lag {lag}: {rho}");
    }
}

#[test]
fn forecast_variance_grows_with_horizon() {
    let cfg = KfConfig::default();
    let kf = KfState::new(&cfg, 0.0);
    let mut last = kf.p[(0, 0)];
    for h in [0.5, 1.0, 2.0, 4.0] {
        let f = kf.forecast(h, cfg.q0);
        assert!(f.p[(0, 0)] > last);
        last = f.p[(0, 0)];
    }
}
