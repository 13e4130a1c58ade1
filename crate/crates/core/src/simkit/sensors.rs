use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{interpolate_reference, rng_for, ReferencePose, RngStream};
use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::streams::{Modality, SensorSample};

/// Standard gravity used for the vertical accelerometer axis, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseSpec {
    /// Isotropic radio position noise, m. Stand-in magnitude, see README.
    pub radio_pos_std: f64,
    pub radio_rate: f64,
    /// Availability delay range in seconds, drawn uniformly per sample.
    pub radio_delay_range: [f64; 2],
    pub radio_drop_prob: f64,
    pub imu_rate: f64,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    /// Gyro bias random walk, rad/s per √s.
    pub gyro_bias_walk_std: f64,
    pub imu_delay_range: [f64; 2],
    /// Additive white noise on the speed channel, m/s.
    pub speed_noise_std: f64,
    /// Multiplicative speed-scale error: reported speed = (1 + bias)·true speed.
    pub speed_bias: f64,
}

impl Default for SensorNoiseSpec {
    fn default() -> Self {
        Self {
            radio_pos_std: 0.15,
            radio_rate: 10.0,
            radio_delay_range: [0.098, 0.244],
            radio_drop_prob: 0.0,
            imu_rate: 100.0,
            accel_noise_std: 0.05,
            gyro_noise_std: 0.005,
            gyro_bias_walk_std: 0.0005,
            imu_delay_range: [0.005, 0.013],
            speed_noise_std: 0.05,
            speed_bias: 0.0,
        }
    }
}

impl SensorNoiseSpec {
    /// No noise, no delay, no dropout.
    pub fn noiseless() -> Self {
        Self {
            radio_pos_std: 0.0,
            radio_delay_range: [0.0, 0.0],
            accel_noise_std: 0.0,
            gyro_noise_std: 0.0,
            gyro_bias_walk_std: 0.0,
            imu_delay_range: [0.0, 0.0],
            speed_noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("radio_pos_std", self.radio_pos_std),
            ("accel_noise_std", self.accel_noise_std),
            ("gyro_noise_std", self.gyro_noise_std),
            ("gyro_bias_walk_std", self.gyro_bias_walk_std),
            ("speed_noise_std", self.speed_noise_std),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be >= 0, got {v}")));
            }
        }
        for (field, v) in [("radio_rate", self.radio_rate), ("imu_rate", self.imu_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.radio_drop_prob) {
            return Err(Error::config("radio_drop_prob", "must lie in [0, 1]"));
        }
        for (field, [lo, hi]) in [
            ("radio_delay_range", self.radio_delay_range),
            ("imu_delay_range", self.imu_delay_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(Error::config(field, "requires 0 <= lo <= hi"));
            }
        }
        if !(self.speed_bias.is_finite() && self.speed_bias >= -1.0) {
            return Err(Error::config("speed_bias", "must be >= -1"));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn uniform_in(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn sample_times(reference: &[ReferencePose], rate: f64) -> impl Iterator<Item = f64> {
    let t0 = reference[0].t;
    let t_end = reference[reference.len() - 1].t;
    (0usize..)
        .map(move |j| t0 + j as f64 / rate)
        .take_while(move |&t| t <= t_end + 1e-9)
}

/// Radio position fixes with isotropic noise, per-sample delay and dropout.
///
/// Every sample consumes the same draws whether or not it is dropped, so the
/// drop pattern depends only on the seed.
pub fn sample_radio(
    reference: &[ReferencePose],
    spec: &SensorNoiseSpec,
    seed: u64,
) -> Result<Vec<SensorSample>> {
    spec.validate()?;
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference trajectory"));
    }
    let mut noise = rng_for(seed, RngStream::RadioNoise);
    let mut drop = rng_for(seed, RngStream::RadioDrop);
    let mut delay = rng_for(seed, RngStream::RadioDelay);

    let mut out = Vec::new();
    for t in sample_times(reference, spec.radio_rate) {
        let dropped = drop.random::<f64>() < spec.radio_drop_prob;
        let (nx, ny) = (normal(&mut noise), normal(&mut noise));
        let d = uniform_in(&mut delay, spec.radio_delay_range);
        if dropped {
            continue;
        }
        let pose = interpolate_reference(reference, t)
            .ok_or_else(|| Error::Alignment(format!("radio time {t} outside reference")))?;
        out.push(SensorSample {
            t_meas: t,
            t_avail: t + d,
            modality: Modality::RadioPos,
            values: vec![
                pose.x + spec.radio_pos_std * nx,
                pose.y + spec.radio_pos_std * ny,
            ],
            source: "radio".into(),
        });
    }
    Ok(out)
}

/// Gyro bias path for `n` IMU samples; starts at zero.
pub fn gyro_bias_path(spec: &SensorNoiseSpec, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, RngStream::GyroBias);
    let step = spec.gyro_bias_walk_std * (1.0 / spec.imu_rate).sqrt();
    let mut bias = 0.0;
    (0..n)
        .map(|_| {
            let b = bias;
            bias += step * normal(&mut rng);
            b
        })
        .collect()
}

/// Body-frame kinematics (turn rate, forward acceleration) at each reference tick.
fn kinematics(reference: &[ReferencePose]) -> Vec<(f64, f64)> {
    let n = reference.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = if k + 1 < n {
            (&reference[k], &reference[k + 1])
        } else if n >= 2 {
            (&reference[k - 1], &reference[k])
        } else {
            out.push((0.0, 0.0));
            continue;
        };
        let dt = b.t - a.t;
        out.push((wrap(b.heading - a.heading) / dt, (b.speed - a.speed) / dt));
    }
    out
}

/// Accelerometer (forward, left, up), z-gyro and speed samples.
///
/// One availability delay is drawn per IMU tick and shared by the three
/// modalities of that tick.
pub fn sample_imu(
    reference: &[ReferencePose],
    spec: &SensorNoiseSpec,
    seed: u64,
) -> Result<Vec<SensorSample>> {
    spec.validate()?;
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference trajectory"));
    }
    let kin = kinematics(reference);
    let t0 = reference[0].t;
    let ref_dt = if reference.len() > 1 {
        reference[1].t - reference[0].t
    } else {
        1.0
    };
    let times: Vec<f64> = sample_times(reference, spec.imu_rate).collect();
    let bias = gyro_bias_path(spec, seed, times.len());

    let mut accel_rng = rng_for(seed, RngStream::AccelNoise);
    let mut gyro_rng = rng_for(seed, RngStream::GyroNoise);
    let mut speed_rng = rng_for(seed, RngStream::SpeedNoise);
    let mut delay_rng = rng_for(seed, RngStream::ImuDelay);

    let mut out = Vec::with_capacity(3 * times.len());
    for (j, &t) in times.iter().enumerate() {
        let k = (((t - t0) / ref_dt).round() as usize).min(reference.len() - 1);
        let pose = &reference[k];
        let (omega, a_fwd) = kin[k];
        let t_avail = t + uniform_in(&mut delay_rng, spec.imu_delay_range);

        let accel = [
            a_fwd + spec.accel_noise_std * normal(&mut accel_rng),
            pose.speed * omega + spec.accel_noise_std * normal(&mut accel_rng),
            GRAVITY + spec.accel_noise_std * normal(&mut accel_rng),
        ];
        let gyro = omega + bias[j] + spec.gyro_noise_std * normal(&mut gyro_rng);
        let speed = ((1.0 + spec.speed_bias) * pose.speed
            + spec.speed_noise_std * normal(&mut speed_rng))
        .max(0.0);

        for (modality, values) in [
            (Modality::Accel, accel.to_vec()),
            (Modality::Gyro, vec![gyro]),
            (Modality::Speed, vec![speed]),
        ] {
            out.push(SensorSample {
                t_meas: t,
                t_avail,
                modality,
                values,
                source: "imu".into(),
            });
        }
    }
    Ok(out)
}

/// Drops every sample whose measurement time falls in `[start, start + length)`.
pub fn inject_gap(stream: &[SensorSample], start: f64, length: f64) -> Vec<SensorSample> {
    let end = start + length;
    stream
        .iter()
        .filter(|s| !(s.t_meas >= start && s.t_meas < end))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{generate_reference, ActivityKind, ActivityProfile};

    fn walk(duration: f64, seed: u64) -> Vec<ReferencePose> {
        generate_reference(&ActivityProfile::preset(ActivityKind::Walking, duration), seed, 0.01)
            .unwrap()
    }

    fn by_modality(s: &[SensorSample], m: Modality) -> Vec<&SensorSample> {
        s.iter().filter(|x| x.modality == m).collect()
    }

    #[test]
    fn noiseless_radio_lies_on_reference() {
        let r = walk(10.0, 1);
        let radio = sample_radio(&r, &SensorNoiseSpec::noiseless(), 9).unwrap();
        for s in &radio {
            let k = (s.t_meas / 0.01).round() as usize;
            assert_eq!(s.values, vec![r[k].x, r[k].y]);
            assert_eq!(s.t_avail, s.t_meas);
        }
    }

    #[test]
    fn total_dropout() {
        let r = walk(5.0, 1);
        let spec = SensorNoiseSpec {
            radio_drop_prob: 1.0,
            ..SensorNoiseSpec::default()
        };
        assert!(sample_radio(&r, &spec, 3).unwrap().is_empty());
    }

    #[test]
    fn radio_counts_and_bernoulli_replay() {
        let r = walk(60.0, 2);
        let spec = SensorNoiseSpec::default();
        let n = sample_radio(&r, &spec, 4).unwrap().len();
        assert!((599..=601).contains(&n));

        let spec = SensorNoiseSpec {
            radio_drop_prob: 0.5,
            ..SensorNoiseSpec::default()
        };
        let kept = sample_radio(&r, &spec, 4).unwrap().len();
        let mut replay = rng_for(4, RngStream::RadioDrop);
        let expected = (0..=600).filter(|_| replay.random::<f64>() >= 0.5).count();
        assert_eq!(kept, expected);
    }

    #[test]
    fn delays_within_range() {
        let r = walk(20.0, 3);
        let spec = SensorNoiseSpec::default();
        for s in sample_radio(&r, &spec, 1).unwrap() {
            let d = s.t_avail - s.t_meas;
            assert!((0.098..=0.244).contains(&d));
        }
        for s in sample_imu(&r, &spec, 1).unwrap() {
            let d = s.t_avail - s.t_meas;
            assert!((0.005..=0.013).contains(&d));
        }
    }

    #[test]
    fn empty_reference_rejected() {
        let spec = SensorNoiseSpec::default();
        assert!(matches!(sample_radio(&[], &spec, 1), Err(Error::EmptyInput(_))));
        assert!(matches!(sample_imu(&[], &spec, 1), Err(Error::EmptyInput(_))));
    }

    fn circle(v: f64, omega: f64, seconds: f64) -> Vec<ReferencePose> {
        let dt = 0.01;
        let n = (seconds / dt).round() as usize;
        let (mut x, mut y, mut cum) = (0.0, 0.0, 0.0);
        let mut out = Vec::new();
        for k in 0..=n {
            let t = k as f64 * dt;
            let heading = wrap(omega * t);
            out.push(ReferencePose { t, x, y, speed: v, heading, cum_distance: cum });
            x += v * heading.cos() * dt;
            y += v * heading.sin() * dt;
            cum += v * dt;
        }
        out
    }

    #[test]
    fn straight_unaccelerated_motion() {
        let r = circle(1.5, 0.0, 5.0);
        let imu = sample_imu(&r, &SensorNoiseSpec::noiseless(), 1).unwrap();
        for s in by_modality(&imu, Modality::Gyro) {
            assert_eq!(s.values[0], 0.0);
        }
        for s in by_modality(&imu, Modality::Accel) {
            assert_eq!(s.values[0], 0.0);
            assert_eq!(s.values[1], 0.0);
            assert_eq!(s.values[2], GRAVITY);
        }
    }

    #[test]
    fn circular_motion_closed_form() {
        let (v, omega) = (2.0, 0.7);
        let r = circle(v, omega, 20.0);
        let imu = sample_imu(&r, &SensorNoiseSpec::noiseless(), 1).unwrap();
        for s in by_modality(&imu, Modality::Gyro) {
            assert!((s.values[0] - omega).abs() < 1e-6);
        }
        for s in by_modality(&imu, Modality::Accel) {
            assert!((s.values[0].hypot(s.values[1]) - v * omega).abs() < 1e-6);
        }
    }

    #[test]
    fn gyro_bias_drift_reintegrates() {
        let r = circle(1.0, 0.3, 30.0);
        let spec = SensorNoiseSpec {
            gyro_bias_walk_std: 0.01,
            ..SensorNoiseSpec::noiseless()
        };
        let imu = sample_imu(&r, &spec, 77).unwrap();
        let gyro = by_modality(&imu, Modality::Gyro);
        let bias = gyro_bias_path(&spec, 77, gyro.len());
        let dt = 0.01;
        let (mut drift, mut oracle) = (0.0, 0.0);
        for (j, s) in gyro.iter().enumerate() {
            drift += (s.values[0] - 0.3) * dt;
            oracle += bias[j] * dt;
            assert!((drift - oracle).abs() < 1e-9);
        }
        assert!(drift.abs() > 0.0);
    }

    #[test]
    fn speed_bias_scales_channel() {
        let r = circle(2.0, 0.0, 2.0);
        let spec = SensorNoiseSpec {
            speed_bias: 0.05,
            ..SensorNoiseSpec::noiseless()
        };
        let imu = sample_imu(&r, &spec, 1).unwrap();
        for s in by_modality(&imu, Modality::Speed) {
            assert!((s.values[0] - 2.1).abs() < 1e-12);
        }
    }

    fn ten_hz() -> Vec<SensorSample> {
        (0..50)
            .map(|k| SensorSample {
                t_meas: k as f64 / 10.0,
                t_avail: k as f64 / 10.0,
                modality: Modality::Speed,
                values: vec![1.0],
                source: "test".into(),
            })
            .collect()
    }

    #[test]
    fn gap_injection() {
        let s = ten_hz();
        assert_eq!(inject_gap(&s, 100.0, 1.0), s);
        assert!(inject_gap(&s, 0.0, 10.0).is_empty());
        assert_eq!(inject_gap(&s, 1.0, 1.0).len(), s.len() - 10);
    }

    #[test]
    fn bit_identical_streams() {
        let r = walk(10.0, 8);
        let spec = SensorNoiseSpec::default();
        assert_eq!(sample_radio(&r, &spec, 5).unwrap(), sample_radio(&r, &spec, 5).unwrap());
        assert_eq!(sample_imu(&r, &spec, 5).unwrap(), sample_imu(&r, &spec, 5).unwrap());
    }
}
