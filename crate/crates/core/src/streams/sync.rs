use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::segment::{normalize_angles, Channel, ChannelData, Segment, Validity};
use super::{Modality, SensorSample};
use crate::angle;
use crate::classic::{madgwick_update, OrientationState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncPolicy {
    /// Interpolate between the measurements bracketing each tick (by `t_meas`).
    Offline,
    /// Use only samples available at the tick, holding the latest value.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncOptions {
    pub fs: f64,
    pub policy: SyncPolicy,
    /// Grid start; defaults to the earliest measurement time.
    pub t_start: Option<f64>,
    /// Grid end; defaults to the latest measurement time.
    pub t_end: Option<f64>,
    /// Realtime only: held values older than this are marked missing.
    pub hold_limit: Option<f64>,
    /// Gain of the orientation filter feeding `theta_ori`.
    pub madgwick_beta: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            fs: 100.0,
            policy: SyncPolicy::Offline,
            t_start: None,
            t_end: None,
            hold_limit: None,
            madgwick_beta: 0.1,
        }
    }
}

/// Heading of travel between consecutive points; the last heading repeats and
/// zero-length steps reuse the previous heading.
pub fn radio_heading(positions: &[[f64; 2]]) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "radio heading needs >= 2 points, got {}",
            positions.len()
        )));
    }
    let mut out = Vec::with_capacity(positions.len());
    let mut last: Option<f64> = None;
    for w in positions.windows(2) {
        let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
        let h = if dx == 0.0 && dy == 0.0 {
            last
        } else {
            Some(angle::wrap(dy.atan2(dx)))
        };
        last = h;
        out.push(h);
    }
    // leading zero-length steps take the first defined heading
    let first = out.iter().flatten().next().copied().unwrap_or(0.0);
    let mut out: Vec<f64> = out.into_iter().map(|h| h.unwrap_or(first)).collect();
    out.push(*out.last().unwrap());
    Ok(out)
}

/// Time-ordered samples of one modality merged across input streams.
struct Track<'a> {
    samples: Vec<&'a SensorSample>,
}

fn collect_tracks<'a>(streams: &[&'a [SensorSample]]) -> Result<BTreeMap<Modality, Track<'a>>> {
    let mut tracks: BTreeMap<Modality, Track<'a>> = BTreeMap::new();
    for stream in streams {
        let mut last: BTreeMap<Modality, f64> = BTreeMap::new();
        for s in stream.iter() {
            s.validate()?;
            if let Some(prev) = last.insert(s.modality, s.t_meas) {
                if s.t_meas < prev {
                    return Err(Error::MalformedStream(format!(
                        "{} timestamps not monotone: {} after {}",
                        s.modality.name(),
                        s.t_meas,
                        prev
                    )));
                }
            }
            tracks.entry(s.modality).or_insert(Track { samples: Vec::new() }).samples.push(s);
        }
    }
    for t in tracks.values_mut() {
        t.samples.sort_by(|a, b| a.t_meas.total_cmp(&b.t_meas));
    }
    Ok(tracks)
}

/// A derived sample (value vector with both timestamps) used during resampling.
#[derive(Clone)]
struct Point {
    t_meas: f64,
    t_avail: f64,
    values: Vec<f64>,
}

fn resample_offline(points: &[Point], grid: &[f64], width: usize, is_angle: bool) -> ChannelData {
    let mut out = ChannelData::new(width, grid.len());
    if points.is_empty() {
        return out;
    }
    for (k, &t) in grid.iter().enumerate() {
        let i = points.partition_point(|p| p.t_meas <= t);
        // exact hit on a measurement
        if i > 0 && (t - points[i - 1].t_meas).abs() <= 1e-9 {
            out.row_mut(k).copy_from_slice(&points[i - 1].values);
            out.validity[k] = Validity::Observed;
            continue;
        }
        if i < points.len() && (points[i].t_meas - t).abs() <= 1e-9 {
            out.row_mut(k).copy_from_slice(&points[i].values);
            out.validity[k] = Validity::Observed;
            continue;
        }
        if i == 0 || i == points.len() {
            // outside any bracketing pair: hold the edge value, flag missing
            let edge = if i == 0 { &points[0] } else { &points[points.len() - 1] };
            out.row_mut(k).copy_from_slice(&edge.values);
            continue;
        }
        let (a, b) = (&points[i - 1], &points[i]);
        let w = (t - a.t_meas) / (b.t_meas - a.t_meas);
        let row = out.row_mut(k);
        for j in 0..width {
            row[j] = if is_angle {
                angle::lerp(a.values[j], b.values[j], w)
            } else {
                a.values[j] + w * (b.values[j] - a.values[j])
            };
        }
        out.validity[k] = Validity::Interpolated;
    }
    out
}

fn resample_realtime(points: &[Point], grid: &[f64], width: usize, hold_limit: Option<f64>) -> ChannelData {
    let mut out = ChannelData::new(width, grid.len());
    let mut by_avail: Vec<&Point> = points.iter().collect();
    by_avail.sort_by(|a, b| a.t_avail.total_cmp(&b.t_avail).then(a.t_meas.total_cmp(&b.t_meas)));
    let mut next = 0;
    let mut latest: Option<&Point> = None;
    for (k, &t) in grid.iter().enumerate() {
        while next < by_avail.len() && by_avail[next].t_avail <= t + 1e-12 {
            let p = by_avail[next];
            if latest.is_none_or(|l| p.t_meas >= l.t_meas) {
                latest = Some(p);
            }
            next += 1;
        }
        let Some(p) = latest else { continue };
        out.row_mut(k).copy_from_slice(&p.values);
        let age = t - p.t_meas;
        out.validity[k] = if age.abs() <= 1e-9 {
            Validity::Observed
        } else if hold_limit.is_some_and(|h| age > h) {
            Validity::Missing
        } else {
            Validity::Interpolated
        };
    }
    out
}

fn resample(points: &[Point], grid: &[f64], width: usize, is_angle: bool, opts: &SyncOptions) -> ChannelData {
    match opts.policy {
        SyncPolicy::Offline => resample_offline(points, grid, width, is_angle),
        SyncPolicy::Realtime => resample_realtime(points, grid, width, opts.hold_limit),
    }
}

fn points(track: &Track<'_>) -> Vec<Point> {
    track
        .samples
        .iter()
        .map(|s| Point {
            t_meas: s.t_meas,
            t_avail: s.t_avail,
            values: s.values.clone(),
        })
        .collect()
}

/// Heading samples derived from consecutive radio fixes. The heading of the
/// step k−1 → k is stamped at fix k and becomes available with it.
fn heading_points(radio: &[Point]) -> Result<Vec<Point>> {
    let positions: Vec<[f64; 2]> = radio.iter().map(|p| [p.values[0], p.values[1]]).collect();
    let headings = radio_heading(&positions)?;
    Ok(radio
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (h, avail) = if k == 0 {
                (headings[0], p.t_avail.max(radio[1].t_avail))
            } else {
                (headings[k - 1], p.t_avail.max(radio[k - 1].t_avail))
            };
            Point {
                t_meas: p.t_meas,
                t_avail: avail,
                values: vec![h],
            }
        })
        .collect())
}

/// Integrates resampled gyro/accel through the orientation filter; yaw starts at zero.
fn orientation_channel(gyro: &ChannelData, acc: Option<&ChannelData>, dt: f64, beta: f64) -> ChannelData {
    let len = gyro.len();
    let mut out = ChannelData::new(1, len);
    let mut state = OrientationState::default();
    let mut started = false;
    for k in 0..len {
        if !gyro.is_valid(k) {
            out.values[k] = state.yaw();
            continue;
        }
        if started {
            let g = [0.0, 0.0, gyro.row(k - 1)[0]];
            let a = match acc {
                Some(a) if a.is_valid(k) => [a.row(k)[0], a.row(k)[1], a.row(k)[2]],
                _ => [0.0; 3],
            };
            state = madgwick_update(&state, g, a, beta, dt);
        }
        started = true;
        out.values[k] = state.yaw();
        out.validity[k] = gyro.validity[k];
    }
    out
}

/// Resamples asynchronous streams onto one uniform grid.
///
/// Channels: `p_radio`, `theta_radio` (from consecutive radio fixes), `v`,
/// `acc`, and `theta_ori` (orientation-filter yaw, uncalibrated, when gyro
/// samples are present).
pub fn synchronize(streams: &[&[SensorSample]], opts: &SyncOptions) -> Result<Segment> {
    if !(opts.fs.is_finite() && opts.fs > 0.0) {
        return Err(Error::config("fs", "must be > 0"));
    }
    let tracks = collect_tracks(streams)?;
    let radio = tracks
        .get(&Modality::RadioPos)
        .filter(|t| !t.samples.is_empty())
        .ok_or_else(|| Error::MissingModality("radio_pos".into()))?;
    if ![Modality::Accel, Modality::Gyro, Modality::Speed]
        .iter()
        .any(|m| tracks.get(m).is_some_and(|t| !t.samples.is_empty()))
    {
        return Err(Error::MissingModality("imu".into()));
    }

    let all = tracks.values().flat_map(|t| t.samples.iter());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.t_meas), hi.max(s.t_meas))
    });
    let t0 = opts.t_start.unwrap_or(lo);
    let t_end = opts.t_end.unwrap_or(hi);
    if t_end < t0 {
        return Err(Error::config("t_end", "grid end precedes grid start"));
    }
    let len = ((t_end - t0) * opts.fs + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..len).map(|k| t0 + k as f64 / opts.fs).collect();

    let mut channels = BTreeMap::new();
    let radio_points = points(radio);
    channels.insert(Channel::PRadio, resample(&radio_points, &grid, 2, false, opts));
    if radio_points.len() >= 2 {
        let mut theta = resample(&heading_points(&radio_points)?, &grid, 1, true, opts);
        normalize_angles(&mut theta);
        channels.insert(Channel::ThetaRadio, theta);
    }
    if let Some(t) = tracks.get(&Modality::Speed) {
        channels.insert(Channel::Speed, resample(&points(t), &grid, 1, false, opts));
    }
    if let Some(t) = tracks.get(&Modality::Accel) {
        channels.insert(Channel::Acc, resample(&points(t), &grid, 3, false, opts));
    }
    if let Some(t) = tracks.get(&Modality::Gyro) {
        let gyro = resample(&points(t), &grid, 1, false, opts);
        let mut theta = orientation_channel(&gyro, channels.get(&Channel::Acc), 1.0 / opts.fs, opts.madgwick_beta);
        normalize_angles(&mut theta);
        channels.insert(Channel::ThetaOri, theta);
    }

    let seg = Segment {
        id: String::new(),
        fs: opts.fs,
        t0,
        len,
        channels,
        reference: None,
    };
    seg.check()?;
    Ok(seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sample(t: f64, avail: f64, m: Modality, values: Vec<f64>) -> SensorSample {
        SensorSample {
            t_meas: t,
            t_avail: avail,
            modality: m,
            values,
            source: "test".into(),
        }
    }

    #[test]
    fn heading_examples() {
        assert_eq!(radio_heading(&[[0.0, 0.0], [1.0, 0.0]]).unwrap(), vec![0.0, 0.0]);
        let h = radio_heading(&[[0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((h[0] - FRAC_PI_2).abs() < 1e-15);
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let h = radio_heading(&square).unwrap();
        let expected = [0.0, FRAC_PI_2, PI, -FRAC_PI_2, -FRAC_PI_2];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{h:?}");
        }
        assert!(matches!(radio_heading(&[[0.0, 0.0]]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_length_steps_reuse_heading() {
        let h = radio_heading(&[[0.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(h[1], h[0]);
        assert_eq!(h[2], 0.0);
    }

    #[test]
    fn speed_midpoint() {
        let radio = vec![sample(0.0, 0.0, Modality::RadioPos, vec![0.0, 0.0])];
        let imu = vec![
            sample(0.0, 0.0, Modality::Speed, vec![0.0]),
            sample(1.0, 1.0, Modality::Speed, vec![2.0]),
        ];
        let opts = SyncOptions { fs: 2.0, ..SyncOptions::default() };
        let seg = synchronize(&[&radio, &imu], &opts).unwrap();
        let v = seg.channel(Channel::Speed).unwrap();
        assert_eq!(seg.len, 3);
        assert_eq!(v.row(1)[0], 1.0);
        assert_eq!(v.validity[1], Validity::Interpolated);
        assert_eq!(v.validity[0], Validity::Observed);
    }

    #[test]
    fn single_radio_sample() {
        let radio = vec![sample(0.5, 0.6, Modality::RadioPos, vec![3.0, 4.0])];
        let imu: Vec<_> = (0..=10)
            .map(|k| sample(k as f64 * 0.1, k as f64 * 0.1, Modality::Speed, vec![1.0]))
            .collect();
        let offline = SyncOptions { fs: 10.0, ..SyncOptions::default() };
        let seg = synchronize(&[&radio, &imu], &offline).unwrap();
        let p = seg.channel(Channel::PRadio).unwrap();
        for k in 0..seg.len {
            let expected = if k == 5 { Validity::Observed } else { Validity::Missing };
            assert_eq!(p.validity[k], expected, "tick {k}");
        }
        assert!(!seg.has(Channel::ThetaRadio));

        let realtime = SyncOptions { policy: SyncPolicy::Realtime, ..offline };
        let seg = synchronize(&[&radio, &imu], &realtime).unwrap();
        let p = seg.channel(Channel::PRadio).unwrap();
        for k in 0..seg.len {
            assert_eq!(p.is_valid(k), k >= 6, "tick {k}");
            if k >= 6 {
                assert_eq!(p.point(k), [3.0, 4.0]);
            }
        }
    }

    #[test]
    fn linear_trajectory_resampled_exactly() {
        // two interleaved 10 Hz radio streams on x = 1 + 0.8 t, y = -2 + 0.3 t
        let line = |t: f64| vec![1.0 + 0.8 * t, -2.0 + 0.3 * t];
        let a: Vec<_> = (0..50).map(|k| k as f64 / 10.0).map(|t| sample(t, t, Modality::RadioPos, line(t))).collect();
        let b: Vec<_> = (0..50).map(|k| k as f64 / 10.0 + 0.05).map(|t| sample(t, t, Modality::RadioPos, line(t))).collect();
        let imu: Vec<_> = (0..500).map(|k| k as f64 / 100.0).map(|t| sample(t, t, Modality::Speed, vec![0.854])).collect();
        let opts = SyncOptions { t_end: Some(4.9), ..SyncOptions::default() };
        let seg = synchronize(&[&a, &b, &imu], &opts).unwrap();
        let p = seg.channel(Channel::PRadio).unwrap();
        for k in 0..seg.len {
            assert!(p.is_valid(k));
            let truth = line(seg.time(k));
            assert!((p.row(k)[0] - truth[0]).abs() < 1e-9 && (p.row(k)[1] - truth[1]).abs() < 1e-9);
        }
        let theta = seg.channel(Channel::ThetaRadio).unwrap();
        let heading = 0.3f64.atan2(0.8);
        assert!(theta.values.iter().all(|h| (h - heading).abs() < 1e-9));
    }

    #[test]
    fn missing_radio_and_malformed_streams() {
        let imu = vec![sample(0.0, 0.0, Modality::Speed, vec![1.0])];
        assert!(matches!(
            synchronize(&[&imu], &SyncOptions::default()),
            Err(Error::MissingModality(_))
        ));
        let radio = vec![
            sample(1.0, 1.0, Modality::RadioPos, vec![0.0, 0.0]),
            sample(0.5, 1.1, Modality::RadioPos, vec![0.0, 0.0]),
        ];
        assert!(matches!(
            synchronize(&[&radio, &imu], &SyncOptions::default()),
            Err(Error::MalformedStream(_))
        ));
    }

    #[test]
    fn realtime_is_causal() {
        // value depends on the sample, so any leak from the future shows up
        let radio: Vec<_> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.1;
                sample(t, t + 0.1 + 0.05 * (k % 3) as f64, Modality::RadioPos, vec![t, 0.0])
            })
            .collect();
        let imu: Vec<_> = (0..200).map(|k| k as f64 / 100.0).map(|t| sample(t, t, Modality::Speed, vec![1.0])).collect();
        let opts = SyncOptions { policy: SyncPolicy::Realtime, ..SyncOptions::default() };
        let seg = synchronize(&[&radio, &imu], &opts).unwrap();
        let p = seg.channel(Channel::PRadio).unwrap();
        for k in 0..seg.len {
            if !p.is_valid(k) {
                continue;
            }
            let t = seg.time(k);
            let used = radio.iter().find(|s| s.values[0] == p.row(k)[0]).unwrap();
            assert!(used.t_avail <= t + 1e-12);
        }
    }
}
