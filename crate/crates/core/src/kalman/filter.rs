use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfConfig {
    /// Initial covariance is `p0·I`.
    pub p0: f64,
    /// White-acceleration spectral density scale.
    pub q0: f64,
    /// Position measurement variance, m².
    pub r_pos: f64,
    /// Velocity measurement variance, (m/s)².
    pub r_vel: f64,
    /// Initial state (px, py, vx, vy).
    pub x0: [f64; 4],
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            p0: 1.0,
            q0: 0.1,
            r_pos: 0.1,
            r_vel: 0.1,
            x0: [0.0; 4],
        }
    }
}

impl KfConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("p0", self.p0),
            ("q0", self.q0),
            ("r_pos", self.r_pos),
            ("r_vel", self.r_vel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub residual: Vector2<f64>,
    pub covariance: Matrix2<f64>,
}

impl Innovation {
    /// Squared Mahalanobis norm of the residual.
    pub fn nis(&self) -> f64 {
        match self.covariance.try_inverse() {
            Some(inv) => (self.residual.transpose() * inv * self.residual)[(0, 0)],
            None => f64::NAN,
        }
    }
}

/// Constant-velocity state `(px, py, vx, vy)` with covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub t: f64,
    /// Measurements rejected as non-finite.
    pub rejected: usize,
}

pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Discretized white-acceleration noise, `q0·[[dt³/3, dt²/2], [dt²/2, dt]]` per axis.
pub fn process_noise(dt: f64, q0: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    let mut q = Matrix4::zeros();
    for axis in 0..2 {
        let (p, v) = (axis, axis + 2);
        q[(p, p)] = q0 * a;
        q[(p, v)] = q0 * b;
        q[(v, p)] = q0 * b;
        q[(v, v)] = q0 * c;
    }
    q
}

// row-major 2×4 selectors
const H_POS: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
const H_VEL: [f64; 8] = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

impl KfState {
    pub fn new(config: &KfConfig, t: f64) -> Self {
        Self {
            x: Vector4::from(config.x0),
            p: Matrix4::identity() * config.p0,
            t,
            rejected: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x[0], self.x[1]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.x[2], self.x[3]]
    }

    /// `x ← F x`, `P ← F P Fᵀ + Q(dt)`.
    pub fn predict(&mut self, dt: f64, q0: f64) {
        if dt <= 0.0 {
            return;
        }
        let f = transition(dt);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + process_noise(dt, q0);
        self.symmetrize();
        self.t += dt;
    }

    /// Predicts forward to time `t` (no-op if `t` is not later).
    pub fn predict_to(&mut self, t: f64, q0: f64) {
        if t > self.t {
            let dt = t - self.t;
            self.predict(dt, q0);
            self.t = t;
        }
    }

    /// Pure forecast `horizon` seconds ahead without touching the state.
    pub fn forecast(&self, horizon: f64, q0: f64) -> KfState {
        let mut s = self.clone();
        s.predict(horizon, q0);
        s
    }

    pub fn update_position(&mut self, z: [f64; 2], r_pos: f64) -> Option<Innovation> {
        self.update(z, Matrix2x4::from_row_slice(&H_POS), r_pos)
    }

    /// Treats `speed·(cos θ, sin θ)` as a direct velocity measurement.
    pub fn update_velocity(&mut self, speed: f64, theta: f64, r_vel: f64) -> Option<Innovation> {
        let z = [speed * theta.cos(), speed * theta.sin()];
        self.update(z, Matrix2x4::from_row_slice(&H_VEL), r_vel)
    }

    /// Linear update with isotropic noise `r`, Joseph-form covariance.
    /// Non-finite inputs leave the state unchanged and bump `rejected`.
    pub fn update(&mut self, z: [f64; 2], h: Matrix2x4<f64>, r: f64) -> Option<Innovation> {
        if !(z[0].is_finite() && z[1].is_finite() && r.is_finite() && r > 0.0) {
            self.rejected += 1;
            return None;
        }
        let z = Vector2::from(z);
        let r = Matrix2::identity() * r;
        let residual = z - h * self.x;
        let s = h * self.p * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            self.rejected += 1;
            return None;
        };
        let k = self.p * h.transpose() * s_inv;
        self.x += k * residual;
        let i_kh = Matrix4::identity() - k * h;
        self.p = i_kh * self.p * i_kh.transpose() + k * r * k.transpose();
        self.symmetrize();
        Some(Innovation { residual, covariance: s })
    }

    fn symmetrize(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.p.symmetric_eigen().eigenvalues.min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.p - self.p.transpose()).amax()
    }
}
