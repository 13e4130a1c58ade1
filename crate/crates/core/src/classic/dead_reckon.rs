use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadReckonState {
    pub p: [f64; 2],
    pub theta: f64,
    pub t: f64,
}

/// `p' = p + ρ·(cos θ, sin θ)`.
pub fn dead_reckon_step(state: &DeadReckonState, rho: f64, theta: f64) -> DeadReckonState {
    DeadReckonState {
        p: [state.p[0] + rho * theta.cos(), state.p[1] + rho * theta.sin()],
        theta: wrap(theta),
        t: state.t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl TrajectoryPoint {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Absolute position fix that overwrites the dead-reckoned position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecalFix {
    pub t: f64,
    pub p: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub points: Vec<TrajectoryPoint>,
    pub applied_fixes: usize,
    /// Fixes outside the trajectory time span.
    pub ignored_fixes: usize,
}

/// Folds [`dead_reckon_step`] over per-interval distances and headings.
///
/// `times` holds the `n + 1` node times; step `k` moves from node `k` to
/// node `k + 1`. A fix is applied at the first node whose time reaches it.
pub fn reconstruct(
    p0: [f64; 2],
    times: &[f64],
    rho: &[f64],
    theta: &[f64],
    fixes: &[RecalFix],
) -> Result<Reconstruction> {
    if rho.len() != theta.len() || times.len() != rho.len() + 1 {
        return Err(Error::Shape(format!(
            "reconstruct: {} times, {} distances, {} headings",
            times.len(),
            rho.len(),
            theta.len()
        )));
    }
    if rho.iter().any(|r| *r < 0.0) {
        return Err(Error::Numeric("negative step distance".into()));
    }
    let (t_first, t_last) = (times[0], times[times.len() - 1]);
    let mut pending: Vec<RecalFix> = Vec::new();
    let mut ignored = 0;
    for f in fixes {
        if f.t < t_first - 1e-9 || f.t > t_last + 1e-9 {
            ignored += 1;
        } else {
            pending.push(*f);
        }
    }
    if ignored > 0 {
        log::warn!("reconstruct: ignored {ignored} fixes outside [{t_first}, {t_last}]");
    }
    pending.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut next_fix = 0;
    let mut applied = 0;

    let mut state = DeadReckonState {
        p: p0,
        theta: theta.first().copied().map(wrap).unwrap_or(0.0),
        t: t_first,
    };
    let mut points = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if k > 0 {
            state = dead_reckon_step(&state, rho[k - 1], theta[k - 1]);
            state.t = times[k];
        }
        while next_fix < pending.len() && pending[next_fix].t <= times[k] + 1e-9 {
            state.p = pending[next_fix].p;
            next_fix += 1;
            applied += 1;
        }
        points.push(TrajectoryPoint {
            t: state.t,
            x: state.p[0],
            y: state.p[1],
            theta: state.theta,
        });
    }
    Ok(Reconstruction {
        points,
        applied_fixes: applied,
        ignored_fixes: ignored,
    })
}
