//! Angle helpers. All headings in the crate live in (−π, π].

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (−π, π].
pub fn wrap(theta: f64) -> f64 {
    let mut a = theta % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Interpolates between two angles along the unit circle.
pub fn lerp(a: f64, b: f64, w: f64) -> f64 {
    let s = (1.0 - w) * a.sin() + w * b.sin();
    let c = (1.0 - w) * a.cos() + w * b.cos();
    if s == 0.0 && c == 0.0 {
        // antipodal midpoint: fall back to the shortest signed arc
        return wrap(a + w * wrap(b - a));
    }
    wrap(s.atan2(c))
}

/// Weighted circular mean; `None` when the resultant vanishes.
pub fn circular_mean<I>(angles: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut s, mut c, mut w_sum) = (0.0, 0.0, 0.0);
    for (theta, w) in angles {
        s += w * theta.sin();
        c += w * theta.cos();
        w_sum += w;
    }
    if w_sum <= 0.0 || (s.hypot(c) / w_sum) < 1e-12 {
        return None;
    }
    Some(wrap(s.atan2(c)))
}
