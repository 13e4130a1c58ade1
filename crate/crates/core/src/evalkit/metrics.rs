use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::PoseEstimate;
use crate::simkit::ReferencePose;

/// Euclidean error of one estimate against the reference tick nearest in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedError {
    pub t: f64,
    pub error: f64,
}

/// Pairs each estimate with the reference pose nearest in time, accepting
/// matches within half a reference tick. Estimates outside the reference
/// span are skipped; if none match the ranges are disjoint.
pub fn position_errors(est: &[PoseEstimate], reference: &[ReferencePose]) -> Result<Vec<TimedError>> {
    if est.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference"));
    }
    let half = if reference.len() > 1 {
        0.5 * (reference[1].t - reference[0].t)
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(est.len());
    for e in est {
        let i = reference.partition_point(|r| r.t < e.t);
        let nearest = [i.checked_sub(1), (i < reference.len()).then_some(i)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (reference[a].t - e.t).abs().total_cmp(&(reference[b].t - e.t).abs()));
        if let Some(k) = nearest {
            let r = &reference[k];
            if (r.t - e.t).abs() <= half + 1e-9 {
                out.push(TimedError { t: e.t, error: (e.mean[0] - r.x).hypot(e.mean[1] - r.y) });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Alignment(format!(
            "estimates [{}, {}] do not overlap the reference [{}, {}]",
            est[0].t,
            est[est.len() - 1].t,
            reference[0].t,
            reference[reference.len() - 1].t
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub cep95: f64,
}

/// 1-based index `⌈0.95·n⌉` of the CEP95 order statistic.
pub fn cep95_rank(n: usize) -> usize {
    // integer form of ⌈0.95 n⌉ avoids float rounding at exact multiples
    (95 * n).div_ceil(100).max(1)
}

pub fn summarize(errors: &[f64]) -> Result<ErrorReport> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("errors"));
    }
    if let Some(bad) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::Numeric(format!("error value {bad} is not a finite distance")));
    }
    let n = errors.len();
    let mae = errors.iter().sum::<f64>() / n as f64;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorReport { n, mae, mse, rmse: mse.sqrt(), cep95: sorted[cep95_rank(n) - 1] })
}

pub fn summarize_timed(errors: &[TimedError]) -> Result<ErrorReport> {
    summarize(&errors.iter().map(|e| e.error).collect::<Vec<_>>())
}

/// Seconds until the error settles after each event: the first time `t ≥ event`
/// from which the error stays below `eps` for at least `hold` seconds. `None`
/// when that never happens within the series.
pub fn settling_time(errors: &[TimedError], eps: f64, events: &[f64], hold: f64) -> Vec<Option<f64>> {
    events
        .iter()
        .map(|&ev| {
            let start = errors.partition_point(|e| e.t < ev - 1e-9);
            let mut run_start: Option<f64> = None;
            for e in &errors[start..] {
                if e.error < eps {
                    let s = *run_start.get_or_insert(e.t);
                    if e.t - s >= hold - 1e-9 {
                        return Some((s - ev).max(0.0));
                    }
                } else {
                    run_start = None;
                }
            }
            None
        })
        .collect()
}

pub const SETTLING_HOLD: f64 = 0.2;

/// Median with `None` treated as +∞; `None` if more than half are unset or the input is empty.
pub fn median_settling(times: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    let m = median(&mut v)?;
    m.is_finite().then_some(m)
}

/// Median of a slice (mean of the middle pair for even length).
pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
