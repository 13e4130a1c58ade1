use serde::{Deserialize, Serialize};

use super::filter::KfConfig;
use super::run::{kf_run, mean_abs_error, KfInputs, KfRunOptions};
use crate::error::{Error, Result};
use crate::simkit::ReferencePose;

/// Candidate values searched by [`kf_tune`] (full factorial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfGrid {
    pub q0: Vec<f64>,
    pub r_pos: Vec<f64>,
    pub r_vel: Vec<f64>,
}

impl Default for KfGrid {
    fn default() -> Self {
        Self {
            q0: vec![0.01, 0.1, 1.0, 10.0],
            r_pos: vec![0.01, 0.03, 0.1, 0.3],
            r_vel: vec![0.01, 0.1, 1.0, 10.0],
        }
    }
}

/// One training recording: filter inputs plus the reference they are scored against.
#[derive(Debug, Clone)]
pub struct KfTrainingSet {
    pub inputs: KfInputs,
    pub reference: Vec<ReferencePose>,
    pub output_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub config: KfConfig,
    pub loss: f64,
    /// `(config, mean MAE)` for every candidate in search order.
    pub table: Vec<(KfConfig, f64)>,
}

/// Grid search for the configuration with the lowest mean MAE over the
/// training sets. Ties go to the smaller `q0`, then `r_pos`, then `r_vel`.
pub fn kf_tune(sets: &[KfTrainingSet], grid: &KfGrid, base: &KfConfig, opts: &KfRunOptions) -> Result<TuneResult> {
    if sets.is_empty() {
        return Err(Error::config("training", "no training sets"));
    }
    if grid.q0.is_empty() || grid.r_pos.is_empty() || grid.r_vel.is_empty() {
        return Err(Error::config("grid", "every grid axis needs at least one candidate"));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (qs, rps, rvs) = (sorted(&grid.q0), sorted(&grid.r_pos), sorted(&grid.r_vel));

    let mut table = Vec::new();
    let mut best: Option<(KfConfig, f64)> = None;
    for &q0 in &qs {
        for &r_pos in &rps {
            for &r_vel in &rvs {
                let config = KfConfig { q0, r_pos, r_vel, ..*base };
                let mut total = 0.0;
                for set in sets {
                    let run = kf_run(&set.inputs, &config, &set.output_times, opts)?;
                    total += mean_abs_error(&run.estimates, &set.reference)?;
                }
                let loss = total / sets.len() as f64;
                table.push((config, loss));
                // strict improvement keeps the earlier (smaller) candidate on ties
                if best.is_none_or(|(_, l)| loss < l) {
                    best = Some((config, loss));
                }
            }
        }
    }
    let (config, loss) = best.expect("non-empty grid");
    Ok(TuneResult { config, loss, table })
}
