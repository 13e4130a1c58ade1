use serde::{Deserialize, Serialize};

use super::filter::{KfConfig, KfState};
use crate::error::{Error, Result};
use crate::pose::PoseEstimate;
use crate::simkit::{interpolate_reference, ReferencePose};
use crate::streams::{Modality, SensorSample};

/// Orientation heading sample fed to the filter when radio heading is unusable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingSample {
    pub t_meas: f64,
    pub t_avail: f64,
    pub theta: f64,
}

/// Measurement streams consumed by [`kf_run`].
#[derive(Debug, Clone, Default)]
pub struct KfInputs {
    pub radio: Vec<SensorSample>,
    pub speed: Vec<SensorSample>,
    pub heading: Vec<HeadingSample>,
}

impl KfInputs {
    /// Splits mixed streams by modality; accel and gyro samples are ignored.
    pub fn from_streams(streams: &[&[SensorSample]], heading: Vec<HeadingSample>) -> Self {
        let mut out = KfInputs { heading, ..Default::default() };
        for s in streams.iter().flat_map(|s| s.iter()) {
            match s.modality {
                Modality::RadioPos => out.radio.push(s.clone()),
                Modality::Speed => out.speed.push(s.clone()),
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfRunOptions {
    /// Forecast horizon, s.
    pub horizon: f64,
    /// Radio heading is taken between the newest fix and the newest fix at
    /// least this many seconds older.
    pub heading_baseline: f64,
    /// Fix pairs older than this, or spanning more than this, give no radio
    /// heading, s.
    pub heading_max_age: f64,
    /// Below this speed the radio heading is considered unreliable, m/s.
    pub moving_speed: f64,
}

impl Default for KfRunOptions {
    fn default() -> Self {
        Self {
            horizon: 0.0,
            heading_baseline: 0.5,
            heading_max_age: 2.0,
            moving_speed: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfRun {
    pub estimates: Vec<PoseEstimate>,
    pub rejected: usize,
    pub position_updates: usize,
    pub velocity_updates: usize,
}

#[derive(Clone, Copy)]
enum Event<'a> {
    Radio(&'a SensorSample),
    Speed(&'a SensorSample),
    Heading(&'a HeadingSample),
}

impl Event<'_> {
    fn t_avail(&self) -> f64 {
        match self {
            Event::Radio(s) | Event::Speed(s) => s.t_avail,
            Event::Heading(h) => h.t_avail,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Event::Heading(_) => 0,
            Event::Radio(_) => 1,
            Event::Speed(_) => 2,
        }
    }
}

/// Causal filter run: every measurement is applied when it becomes available,
/// and at each output time the state is forecast `horizon` seconds ahead.
///
/// Estimates are stamped with their target time `t_out + horizon`.
pub fn kf_run(inputs: &KfInputs, config: &KfConfig, output_times: &[f64], opts: &KfRunOptions) -> Result<KfRun> {
    config.validate()?;
    if !(opts.horizon >= 0.0) {
        return Err(Error::config("horizon", "must be >= 0"));
    }
    let mut events: Vec<Event<'_>> = inputs
        .radio
        .iter()
        .map(Event::Radio)
        .chain(inputs.speed.iter().map(Event::Speed))
        .chain(inputs.heading.iter().map(Event::Heading))
        .collect();
    events.sort_by(|a, b| a.t_avail().total_cmp(&b.t_avail()).then(a.rank().cmp(&b.rank())));

    let t_first = events
        .first()
        .map(|e| e.t_avail())
        .or_else(|| output_times.first().copied())
        .unwrap_or(0.0);
    let mut state = KfState::new(config, t_first.min(output_times.first().copied().unwrap_or(t_first)));
    let mut fixes: Vec<(f64, [f64; 2])> = Vec::new();
    let mut ori_heading: Option<f64> = None;
    let (mut n_pos, mut n_vel) = (0, 0);

    let mut next = 0;
    let mut out = Vec::with_capacity(output_times.len());
    for &t_out in output_times {
        while next < events.len() && events[next].t_avail() <= t_out + 1e-12 {
            let ev = events[next];
            next += 1;
            state.predict_to(ev.t_avail(), config.q0);
            match ev {
                Event::Radio(s) => {
                    let z = [s.values[0], s.values[1]];
                    if state.update_position(z, config.r_pos).is_some() {
                        n_pos += 1;
                    }
                    let i = fixes.partition_point(|(t, _)| *t <= s.t_meas);
                    fixes.insert(i, (s.t_meas, z));
                    if fixes.len() > 64 {
                        fixes.drain(..fixes.len() - 64);
                    }
                }
                Event::Heading(h) => ori_heading = Some(h.theta),
                Event::Speed(s) => {
                    let speed = s.values[0];
                    let radio = || radio_heading(&fixes, s.t_meas, opts.heading_baseline, opts.heading_max_age);
                    let heading = if speed >= opts.moving_speed { radio().or(ori_heading) } else { ori_heading.or_else(radio) };
                    if let Some(theta) = heading {
                        if state.update_velocity(speed, theta, config.r_vel).is_some() {
                            n_vel += 1;
                        }
                    }
                }
            }
        }
        let mut now = state.clone();
        now.predict_to(t_out, config.q0);
        let f = now.forecast(opts.horizon, config.q0);
        out.push(PoseEstimate {
            t: t_out + opts.horizon,
            mean: f.position(),
            var: [f.p[(0, 0)], f.p[(1, 1)]],
            horizon: opts.horizon,
        });
    }
    Ok(KfRun {
        estimates: out,
        rejected: state.rejected,
        position_updates: n_pos,
        velocity_updates: n_vel,
    })
}

fn radio_heading(fixes: &[(f64, [f64; 2])], now: f64, baseline: f64, max_age: f64) -> Option<f64> {
    let &(t_new, p_new) = fixes.last()?;
    if now - t_new > max_age {
        return None;
    }
    let &(t_old, p_old) = fixes.iter().rev().find(|(t, _)| t_new - t >= baseline)?;
    if t_new - t_old > max_age {
        return None;
    }
    let (dx, dy) = (p_new[0] - p_old[0], p_new[1] - p_old[1]);
    (dx != 0.0 || dy != 0.0).then(|| dy.atan2(dx))
}

/// Mean Euclidean error of estimates against an interpolated reference.
pub fn mean_abs_error(estimates: &[PoseEstimate], reference: &[ReferencePose]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in estimates {
        if let Some(r) = interpolate_reference(reference, e.t) {
            sum += (e.mean[0] - r.x).hypot(e.mean[1] - r.y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Alignment("estimates do not overlap the reference".into()));
    }
    Ok(sum / n as f64)
}
