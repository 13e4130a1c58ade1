use crate::angle::{circular_mean, wrap};

/// Net displacement below which the subject is treated as stationary, m.
pub const MOTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadingCalibration {
    pub corrected: Vec<f64>,
    /// Yaw offset added to the orientation headings, rad.
    pub offset: f64,
    pub calibrated: bool,
}

/// Estimates a constant yaw offset between orientation headings and the
/// direction of travel seen by consecutive radio fixes inside
/// `[t_start, t_start + window]`, weighting each pair by its length.
///
/// `theta_ori[k]` belongs to `times[k]`; `radio` holds `(t, position)` fixes.
pub fn calibrate_heading(
    theta_ori: &[f64],
    times: &[f64],
    radio: &[(f64, [f64; 2])],
    t_start: f64,
    window: f64,
) -> HeadingCalibration {
    let unchanged = || HeadingCalibration {
        corrected: theta_ori.to_vec(),
        offset: 0.0,
        calibrated: false,
    };
    let fixes: Vec<&(f64, [f64; 2])> = radio
        .iter()
        .filter(|(t, _)| *t >= t_start && *t <= t_start + window)
        .collect();
    if fixes.len() < 2 || times.is_empty() {
        return unchanged();
    }
    let (first, last) = (fixes[0].1, fixes[fixes.len() - 1].1);
    if (last[0] - first[0]).hypot(last[1] - first[1]) < MOTION_THRESHOLD {
        return unchanged();
    }
    let nearest = |t: f64| {
        let i = times.partition_point(|&x| x < t);
        if i == 0 {
            0
        } else if i >= times.len() {
            times.len() - 1
        } else if (times[i] - t) < (t - times[i - 1]) {
            i
        } else {
            i - 1
        }
    };
    let diffs = fixes.windows(2).filter_map(|w| {
        let (ta, a) = *w[0];
        let (tb, b) = *w[1];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        (len > 0.0).then(|| {
            let ori = theta_ori[nearest(0.5 * (ta + tb))];
            (wrap(dy.atan2(dx) - ori), len)
        })
    });
    match circular_mean(diffs) {
        Some(offset) => HeadingCalibration {
            corrected: theta_ori.iter().map(|t| wrap(t + offset)).collect(),
            offset,
            calibrated: true,
        },
        None => unchanged(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Zig-zag path sampled at 10 Hz with its true per-tick heading at 100 Hz.
    fn path() -> (Vec<f64>, Vec<f64>, Vec<(f64, [f64; 2])>) {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let heading = |t: f64| -> f64 { if (t as i64) % 2 == 0 { 0.4 } else { -0.9 } };
        let mut p = [0.0, 0.0];
        let mut fixes = vec![(0.0, p)];
        let mut theta = Vec::new();
        for (k, &t) in times.iter().enumerate() {
            theta.push(heading(t));
            if k + 1 < times.len() {
                let h = heading(t);
                p = [p[0] + 0.015 * h.cos(), p[1] + 0.015 * h.sin()];
                if (k + 1) % 10 == 0 {
                    fixes.push((times[k + 1], p));
                }
            }
        }
        (times, theta, fixes)
    }

    #[test]
    fn consistent_headings_need_no_offset() {
        let (times, theta, fixes) = path();
        let c = calibrate_heading(&theta, &times, &fixes, 0.0, 10.0);
        assert!(c.calibrated);
        assert!(c.offset.abs() < 1e-9);
        for (a, b) in c.corrected.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_offset_recovered() {
        let (times, theta, fixes) = path();
        let biased: Vec<f64> = theta.iter().map(|t| wrap(t - 0.3)).collect();
        let c = calibrate_heading(&biased, &times, &fixes, 0.0, 10.0);
        assert!((c.offset - 0.3).abs() < 1e-6);
    }

    #[test]
    fn stationary_subject_left_uncalibrated() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let theta = vec![0.2; 100];
        let fixes: Vec<_> = (0..10).map(|k| (k as f64 * 0.1, [1.0, 1.0])).collect();
        let c = calibrate_heading(&theta, &times, &fixes, 0.0, 1.0);
        assert!(!c.calibrated);
        assert_eq!(c.corrected, theta);
    }
}
