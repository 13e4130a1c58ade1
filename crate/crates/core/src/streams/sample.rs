use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    RadioPos,
    Accel,
    Gyro,
    Speed,
}

impl Modality {
    pub fn width(self) -> usize {
        match self {
            Modality::RadioPos => 2,
            Modality::Accel => 3,
            Modality::Gyro | Modality::Speed => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::RadioPos => "radio_pos",
            Modality::Accel => "accel",
            Modality::Gyro => "gyro",
            Modality::Speed => "speed",
        }
    }
}

/// One timestamped measurement. `t_meas` is when the quantity was measured,
/// `t_avail` when it reached the consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t_meas: f64,
    pub t_avail: f64,
    pub modality: Modality,
    pub values: Vec<f64>,
    pub source: String,
}

impl SensorSample {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.modality.width() {
            return Err(Error::MalformedStream(format!(
                "{} sample at t={} has {} values, expected {}",
                self.modality.name(),
                self.t_meas,
                self.values.len(),
                self.modality.width()
            )));
        }
        if !(self.t_meas.is_finite() && self.t_avail.is_finite()) || self.t_avail < self.t_meas {
            return Err(Error::MalformedStream(format!(
                "sample available at {} before its measurement time {}",
                self.t_avail, self.t_meas
            )));
        }
        Ok(())
    }
}

pub fn write_jsonl<W: Write>(mut w: W, samples: &[SensorSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<SensorSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SensorSample = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedStream(format!("line {}: {e}", i + 1)))?;
        sample.validate()?;
        out.push(sample);
    }
    Ok(out)
}
