use serde::{Deserialize, Serialize};

use super::segment::{Channel, ChannelData, Segment};
use crate::error::{Error, Result};
use crate::simkit::ReferencePose;

/// A fixed-length slice of a segment plus the pose `horizon` seconds after its last tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBundle {
    pub segment_id: String,
    pub start_tick: usize,
    pub len: usize,
    pub horizon: f64,
    /// Tick of the target pose: `start_tick + len − 1 + round(horizon·fs)`.
    pub target_tick: usize,
    pub target: Option<ReferencePose>,
}

impl WindowBundle {
    pub fn end_tick(&self) -> usize {
        self.start_tick + self.len - 1
    }
}

/// Window stride in ticks for a given overlap fraction (at least one tick).
pub fn stride_for(n_w: usize, overlap: f64) -> usize {
    ((n_w as f64 * (1.0 - overlap)).round() as usize).max(1)
}

pub fn horizon_ticks(horizon: f64, fs: f64) -> usize {
    (horizon * fs).round() as usize
}

/// Closed-form number of windows `⌊(L − N_w − h·f_s)/stride⌋ + 1` (zero when negative).
pub fn window_count(len: usize, n_w: usize, stride: usize, h_ticks: usize) -> usize {
    if len < n_w + h_ticks {
        0
    } else {
        (len - n_w - h_ticks) / stride + 1
    }
}

pub fn make_windows(segment: &Segment, n_w: usize, overlap: f64, horizon: f64) -> Result<Vec<WindowBundle>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("overlap", format!("must be in [0, 1), got {overlap}")));
    }
    if n_w < 2 {
        return Err(Error::config("window", "must be >= 2 ticks"));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::config("horizon", "must be >= 0"));
    }
    let stride = stride_for(n_w, overlap);
    let h = horizon_ticks(horizon, segment.fs);
    let count = window_count(segment.len, n_w, stride, h);
    Ok((0..count)
        .map(|i| {
            let start_tick = i * stride;
            let target_tick = start_tick + n_w - 1 + h;
            WindowBundle {
                segment_id: segment.id.clone(),
                start_tick,
                len: n_w,
                horizon,
                target_tick,
                target: segment.reference.as_ref().map(|r| r[target_tick]),
            }
        })
        .collect())
}

/// Replaces `p_radio` by per-tick directed deltas `p(k) − p(k−1)` (zero at the first tick).
pub fn position_deltas(segment: &Segment) -> Result<Segment> {
    let p = segment.channel(Channel::PRadio)?;
    let mut d = ChannelData::new(2, segment.len);
    for k in 0..segment.len {
        if k == 0 {
            d.validity[0] = p.validity[0];
            continue;
        }
        let (a, b) = (p.point(k - 1), p.point(k));
        d.row_mut(k).copy_from_slice(&[b[0] - a[0], b[1] - a[1]]);
        d.validity[k] = p.validity[k].min(p.validity[k - 1]);
    }
    let mut out = segment.clone();
    out.channels.insert(Channel::PRadio, d);
    Ok(out)
}

/// Inverse of [`position_deltas`]: cumulative sum from `start`.
pub fn cumulative_positions(deltas: &ChannelData, start: [f64; 2]) -> Vec<[f64; 2]> {
    let mut p = start;
    (0..deltas.len())
        .map(|k| {
            if k > 0 {
                let d = deltas.row(k);
                p = [p[0] + d[0], p[1] + d[1]];
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::Validity;
    use std::collections::BTreeMap;

    fn segment_with(points: &[[f64; 2]]) -> Segment {
        let mut d = ChannelData::new(2, points.len());
        for (k, p) in points.iter().enumerate() {
            d.row_mut(k).copy_from_slice(p);
            d.validity[k] = Validity::Observed;
        }
        let mut channels = BTreeMap::new();
        channels.insert(Channel::PRadio, d);
        Segment { id: "s".into(), fs: 100.0, t0: 0.0, len: points.len(), channels, reference: None }
    }

    fn empty(len: usize) -> Segment {
        Segment { id: "s".into(), fs: 100.0, t0: 0.0, len, channels: BTreeMap::new(), reference: None }
    }

    #[test]
    fn window_examples() {
        let w = make_windows(&empty(1000), 128, 0.5, 0.0).unwrap();
        assert_eq!(w.len(), 14);
        assert_eq!(w[1].start_tick, 64);
        assert_eq!(make_windows(&empty(128), 128, 0.5, 0.0).unwrap().len(), 1);
        assert!(make_windows(&empty(128), 128, 0.5, 1.0).unwrap().is_empty());
    }

    #[test]
    fn window_preconditions() {
        assert!(make_windows(&empty(10), 128, 1.0, 0.0).is_err());
        assert!(make_windows(&empty(10), 1, 0.5, 0.0).is_err());
        assert!(make_windows(&empty(10), 4, 0.5, -1.0).is_err());
    }

    #[test]
    fn half_overlap_shares_half() {
        let w = make_windows(&empty(1000), 128, 0.5, 0.0).unwrap();
        for pair in w.windows(2) {
            let shared = (pair[0].start_tick + 128).saturating_sub(pair[1].start_tick);
            assert_eq!(shared, 64);
        }
    }

    #[test]
    fn delta_examples() {
        let seg = segment_with(&[[2.0, 2.0]; 4]);
        let d = position_deltas(&seg).unwrap();
        assert!(d.channel(Channel::PRadio).unwrap().values.iter().all(|v| *v == 0.0));

        let seg = segment_with(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let d = position_deltas(&seg).unwrap();
        assert_eq!(d.channel(Channel::PRadio).unwrap().values, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
