//! Model-based pose reconstruction: dead reckoning from distance and heading,
//! scheduled radio recalibration, and orientation from gyro/accel.

mod dead_reckon;
mod heading;
mod madgwick;

pub use dead_reckon::{
    dead_reckon_step, reconstruct, DeadReckonState, RecalFix, Reconstruction, TrajectoryPoint,
};
pub use heading::{calibrate_heading, HeadingCalibration, MOTION_THRESHOLD};
pub use madgwick::{madgwick_update, OrientationState};

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::streams::{Channel, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaSource {
    /// Calibrated orientation-filter yaw.
    Ori,
    Radio,
    Ref,
}

impl std::str::FromStr for ThetaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ori" | "theta_ori" => Ok(ThetaSource::Ori),
            "radio" | "theta_radio" => Ok(ThetaSource::Radio),
            "ref" | "theta_ref" => Ok(ThetaSource::Ref),
            other => Err(Error::config("theta_source", format!("unknown source `{other}`"))),
        }
    }
}

/// How distances are formed from the speed channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `ρ = v·dt` with `dt = 1/f_s` at every tick.
    PerTick,
    /// One step per window of `ticks`: mean speed times `dt`, where `dt`
    /// defaults to the window duration.
    PerWindow { ticks: usize, dt: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicOptions {
    pub theta_source: ThetaSource,
    /// Seconds between radio recalibrations; `None` is pure dead reckoning.
    pub recal_interval: Option<f64>,
    pub step_mode: StepMode,
    /// Length of the heading-calibration window at the start of the segment, s.
    pub calibration_window: f64,
}

impl Default for ClassicOptions {
    fn default() -> Self {
        Self {
            theta_source: ThetaSource::Ori,
            recal_interval: None,
            step_mode: StepMode::PerTick,
            calibration_window: 10.0,
        }
    }
}

/// Radio fixes on observed ticks as `(t, position)`.
pub fn radio_fixes(seg: &Segment) -> Result<Vec<(f64, [f64; 2])>> {
    let p = seg.channel(Channel::PRadio)?;
    Ok((0..seg.len)
        .filter(|&k| p.validity[k] == crate::streams::Validity::Observed)
        .map(|k| (seg.time(k), p.point(k)))
        .collect())
}

/// Per-tick heading of the chosen source.
pub fn heading_series(seg: &Segment, source: ThetaSource, calibration_window: f64) -> Result<Vec<f64>> {
    match source {
        ThetaSource::Ref => Ok(seg.reference()?.iter().map(|p| p.heading).collect()),
        ThetaSource::Radio => Ok(seg.channel(Channel::ThetaRadio)?.values.clone()),
        ThetaSource::Ori => {
            let ori = &seg.channel(Channel::ThetaOri)?.values;
            let fixes = held_radio_fixes(seg)?;
            let cal = calibrate_heading(ori, &seg.times(), &fixes, seg.t0, calibration_window);
            if !cal.calibrated {
                log::warn!("segment {}: heading calibration skipped (insufficient motion)", seg.id);
            }
            Ok(cal.corrected)
        }
    }
}

/// Distinct radio positions as they appear on the grid (observed or freshly held).
fn held_radio_fixes(seg: &Segment) -> Result<Vec<(f64, [f64; 2])>> {
    let observed = radio_fixes(seg)?;
    if observed.len() >= 2 {
        return Ok(observed);
    }
    let p = seg.channel(Channel::PRadio)?;
    let mut out: Vec<(f64, [f64; 2])> = Vec::new();
    for k in 0..seg.len {
        if !p.is_valid(k) {
            continue;
        }
        let q = p.point(k);
        if out.last().is_none_or(|(_, last)| *last != q) {
            out.push((seg.time(k), q));
        }
    }
    Ok(out)
}

/// Recalibration fixes every `interval` seconds from the first valid radio
/// value at or after each scheduled time.
pub fn recal_schedule(seg: &Segment, interval: f64) -> Result<Vec<RecalFix>> {
    if !(interval > 0.0) {
        return Err(Error::config("recal_interval", "must be > 0"));
    }
    let p = seg.channel(Channel::PRadio)?;
    let mut fixes = Vec::new();
    let t_last = seg.time(seg.len.saturating_sub(1));
    let mut m = 1;
    loop {
        let t = seg.t0 + m as f64 * interval;
        if t > t_last + 1e-9 {
            break;
        }
        let start = ((t - seg.t0) * seg.fs - 1e-6).ceil().max(0.0) as usize;
        if let Some(k) = (start..seg.len).find(|&k| p.is_valid(k)) {
            fixes.push(RecalFix { t: seg.time(k), p: p.point(k) });
        }
        m += 1;
    }
    Ok(fixes)
}

/// Dead reckoning over a segment, starting at its first valid radio position.
pub fn reconstruct_segment(seg: &Segment, opts: &ClassicOptions) -> Result<Reconstruction> {
    let v = seg.channel(Channel::Speed)?;
    let p = seg.channel(Channel::PRadio)?;
    let start = (0..seg.len)
        .find(|&k| p.is_valid(k))
        .ok_or_else(|| Error::InsufficientData("no valid radio position".into()))?;
    let theta = heading_series(seg, opts.theta_source, opts.calibration_window)?;
    let fixes = match opts.recal_interval {
        Some(i) if i.is_finite() => recal_schedule(seg, i)?,
        _ => Vec::new(),
    };
    let dt = seg.dt();
    match opts.step_mode {
        StepMode::PerTick => {
            let times: Vec<f64> = (start..seg.len).map(|k| seg.time(k)).collect();
            let rho: Vec<f64> = (start..seg.len - 1).map(|k| v.row(k)[0].max(0.0) * dt).collect();
            let th: Vec<f64> = (start..seg.len - 1).map(|k| theta[k]).collect();
            reconstruct(p.point(start), &times, &rho, &th, &fixes)
        }
        StepMode::PerWindow { ticks, dt: step_dt } => {
            if ticks == 0 {
                return Err(Error::config("step_mode.ticks", "must be > 0"));
            }
            let step_dt = step_dt.unwrap_or(ticks as f64 * dt);
            let mut times = vec![seg.time(start)];
            let (mut rho, mut th) = (Vec::new(), Vec::new());
            let mut k = start;
            while k + ticks < seg.len {
                let speed = (k..k + ticks).map(|j| v.row(j)[0].max(0.0)).sum::<f64>() / ticks as f64;
                let heading = angle::circular_mean((k..k + ticks).map(|j| (theta[j], 1.0)))
                    .unwrap_or(theta[k]);
                rho.push(speed * step_dt);
                th.push(heading);
                k += ticks;
                times.push(seg.time(k));
            }
            reconstruct(p.point(start), &times, &rho, &th, &fixes)
        }
    }
}
