use serde::{Deserialize, Serialize};

/// Orientation as a scalar-first unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationState {
    pub q: [f64; 4],
    /// Gyro bias subtracted before propagation, rad/s.
    pub gyro_bias: [f64; 3],
}

impl Default for OrientationState {
    fn default() -> Self {
        Self {
            q: [1.0, 0.0, 0.0, 0.0],
            gyro_bias: [0.0; 3],
        }
    }
}

impl OrientationState {
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        Self {
            q: normalize(q),
            ..Self::default()
        }
    }

    pub fn yaw(&self) -> f64 {
        let [w, x, y, z] = self.q;
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    /// Angle between the body z axis and the world vertical.
    pub fn tilt(&self) -> f64 {
        let [_, x, y, _] = self.q;
        (1.0 - 2.0 * (x * x + y * y)).clamp(-1.0, 1.0).acos()
    }

    pub fn norm(&self) -> f64 {
        self.q.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn normalize(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

fn mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// One IMU-only (no magnetometer) Madgwick step.
///
/// The gyro rate is integrated with the exact quaternion exponential, then the
/// estimate takes a normalized gradient step of size `beta·dt` toward the
/// orientation that aligns the measured acceleration with gravity. A zero
/// accelerometer vector skips the correction.
pub fn madgwick_update(
    state: &OrientationState,
    gyro: [f64; 3],
    accel: [f64; 3],
    beta: f64,
    dt: f64,
) -> OrientationState {
    let w = [
        gyro[0] - state.gyro_bias[0],
        gyro[1] - state.gyro_bias[1],
        gyro[2] - state.gyro_bias[2],
    ];
    let rate = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let mut q = state.q;
    if rate > 0.0 {
        let half = 0.5 * rate * dt;
        let s = half.sin() / rate;
        q = mul(q, [half.cos(), w[0] * s, w[1] * s, w[2] * s]);
    }

    let a_norm = (accel[0] * accel[0] + accel[1] * accel[1] + accel[2] * accel[2]).sqrt();
    if beta > 0.0 && a_norm > 0.0 {
        let [ax, ay, az] = accel.map(|v| v / a_norm);
        let [q0, q1, q2, q3] = state.q;
        // objective f = R(q)ᵀ·ẑ − â, gradient Jᵀ f
        let f1 = 2.0 * (q1 * q3 - q0 * q2) - ax;
        let f2 = 2.0 * (q0 * q1 + q2 * q3) - ay;
        let f3 = 2.0 * (0.5 - q1 * q1 - q2 * q2) - az;
        let grad = [
            -2.0 * q2 * f1 + 2.0 * q1 * f2,
            2.0 * q3 * f1 + 2.0 * q0 * f2 - 4.0 * q1 * f3,
            -2.0 * q0 * f1 + 2.0 * q3 * f2 - 4.0 * q2 * f3,
            2.0 * q1 * f1 + 2.0 * q2 * f2,
        ];
        let g_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if g_norm > 0.0 {
            for i in 0..4 {
                q[i] -= beta * dt * grad[i] / g_norm;
            }
        }
    }
    OrientationState {
        q: normalize(q),
        gyro_bias: state.gyro_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_equilibrium() {
        let s = madgwick_update(&OrientationState::default(), [0.0; 3], [0.0, 0.0, 9.81], 0.1, 0.01);
        for (a, b) in s.q.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_yaw_integration() {
        let omega = 0.8;
        let mut s = OrientationState::default();
        for _ in 0..100 {
            s = madgwick_update(&s, [0.0, 0.0, omega], [0.0, 0.0, 9.81], 0.0, 0.01);
            assert!((s.norm() - 1.0).abs() < 1e-9);
        }
        assert!((s.yaw() - omega).abs() < 1e-6);
    }

    #[test]
    fn zero_accel_is_gyro_only() {
        let s0 = OrientationState::default();
        let a = madgwick_update(&s0, [0.1, 0.0, 0.2], [0.0; 3], 0.5, 0.01);
        let b = madgwick_update(&s0, [0.1, 0.0, 0.2], [0.0; 3], 0.0, 0.01);
        assert_eq!(a, b);
    }

    #[test]
    fn tilt_converges_monotonically() {
        // roll of 0.4 rad about x
        let half = 0.2f64;
        let mut s = OrientationState::from_quaternion([half.cos(), half.sin(), 0.0, 0.0]);
        let mut tilts = vec![s.tilt()];
        for _ in 0..3000 {
            s = madgwick_update(&s, [0.0; 3], [0.0, 0.0, 9.81], 0.1, 0.01);
            tilts.push(s.tilt());
        }
        // descends without overshoot until it reaches the step-size floor
        let floor = 4.0 * 0.1 * 0.01;
        for w in tilts.windows(2) {
            if w[0] > floor {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
        assert!(*tilts.last().unwrap() < floor);
    }
}
