use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::simkit::{interpolate_reference, ReferencePose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    PRadio,
    ThetaRadio,
    Speed,
    ThetaOri,
    Acc,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::PRadio,
        Channel::ThetaRadio,
        Channel::Speed,
        Channel::ThetaOri,
        Channel::Acc,
    ];

    pub fn width(self) -> usize {
        match self {
            Channel::PRadio => 2,
            Channel::Acc => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::PRadio => "p_radio",
            Channel::ThetaRadio => "theta_radio",
            Channel::Speed => "v",
            Channel::ThetaOri => "theta_ori",
            Channel::Acc => "acc",
        }
    }

    pub fn is_angle(self) -> bool {
        matches!(self, Channel::ThetaRadio | Channel::ThetaOri)
    }

    fn columns(self) -> Vec<String> {
        match self.width() {
            1 => vec![self.name().to_string()],
            w => ["x", "y", "z"][..w]
                .iter()
                .map(|s| format!("{}_{s}", self.name()))
                .collect(),
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_radio" | "radio_pos" => Ok(Channel::PRadio),
            "theta_radio" => Ok(Channel::ThetaRadio),
            "v" | "speed" => Ok(Channel::Speed),
            "theta_ori" => Ok(Channel::ThetaOri),
            "acc" | "accel" => Ok(Channel::Acc),
            other => Err(Error::config("inputs", format!("unknown channel `{other}`"))),
        }
    }
}

/// Per-tick origin of a resampled value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Validity {
    Missing = 0,
    Interpolated = 1,
    Observed = 2,
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self != Validity::Missing
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Validity::Missing),
            1 => Ok(Validity::Interpolated),
            2 => Ok(Validity::Observed),
            _ => Err(Error::MalformedStream(format!("bad validity code {c}"))),
        }
    }
}

/// Row-major per-tick values of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub width: usize,
    pub values: Vec<f64>,
    pub validity: Vec<Validity>,
}

impl ChannelData {
    pub fn new(width: usize, len: usize) -> Self {
        Self {
            width,
            values: vec![0.0; width * len],
            validity: vec![Validity::Missing; len],
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.validity[k].is_valid()
    }

    pub fn len(&self) -> usize {
        self.validity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validity.is_empty()
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let r = self.row(k);
        [r[0], r[1]]
    }
}

/// Uniformly resampled multi-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub fs: f64,
    pub t0: f64,
    pub len: usize,
    pub channels: BTreeMap<Channel, ChannelData>,
    pub reference: Option<Vec<ReferencePose>>,
}

impl Segment {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.time(k)).collect()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn channel(&self, c: Channel) -> Result<&ChannelData> {
        self.channels
            .get(&c)
            .ok_or_else(|| Error::MissingModality(c.name().to_string()))
    }

    pub fn has(&self, c: Channel) -> bool {
        self.channels.contains_key(&c)
    }

    /// Nearest tick to time `t`, if it lies within half a tick of the grid.
    pub fn tick_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) * self.fs).round();
        if k < 0.0 || k as usize >= self.len {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= 0.5 / self.fs + 1e-9).then_some(k)
    }

    pub fn reference(&self) -> Result<&[ReferencePose]> {
        self.reference
            .as_deref()
            .ok_or_else(|| Error::MissingModality("reference".into()))
    }

    /// Resamples `reference` onto this segment's grid and attaches it.
    pub fn attach_reference(&mut self, reference: &[ReferencePose]) -> Result<()> {
        let poses = (0..self.len)
            .map(|k| {
                let t = self.time(k);
                interpolate_reference(reference, t)
                    .ok_or_else(|| Error::Alignment(format!("no reference pose at t={t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.reference = Some(poses);
        Ok(())
    }

    /// Sub-segment covering ticks `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Segment {
        let end = end.min(self.len);
        let channels = self
            .channels
            .iter()
            .map(|(c, d)| {
                (
                    *c,
                    ChannelData {
                        width: d.width,
                        values: d.values[start * d.width..end * d.width].to_vec(),
                        validity: d.validity[start..end].to_vec(),
                    },
                )
            })
            .collect();
        Segment {
            id: self.id.clone(),
            fs: self.fs,
            t0: self.time(start),
            len: end - start,
            channels,
            reference: self.reference.as_ref().map(|r| r[start..end].to_vec()),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.fs > 0.0) {
            return Err(Error::config("fs", "must be > 0"));
        }
        for (c, d) in &self.channels {
            if d.len() != self.len || d.values.len() != d.width * self.len {
                return Err(Error::Shape(format!("channel {} length mismatch", c.name())));
            }
            if c.is_angle() && d.values.iter().any(|&a| !(a > -std::f64::consts::PI && a <= std::f64::consts::PI)) {
                return Err(Error::Shape(format!("channel {} outside (-pi, pi]", c.name())));
            }
        }
        if let Some(r) = &self.reference {
            if r.len() != self.len {
                return Err(Error::Shape("reference length mismatch".into()));
            }
        }
        Ok(())
    }

    /// Columnar CSV: one row per tick, value columns then validity codes,
    /// then reference columns when a reference is attached.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for c in self.channels.keys() {
            header.extend(c.columns());
        }
        for c in self.channels.keys() {
            header.push(format!("valid_{}", c.name()));
        }
        if self.reference.is_some() {
            header.extend(REF_COLUMNS.iter().map(|s| s.to_string()));
        }
        wtr.write_record(&header)?;
        for k in 0..self.len {
            let mut row = vec![self.time(k).to_string()];
            for d in self.channels.values() {
                row.extend(d.row(k).iter().map(|v| v.to_string()));
            }
            for d in self.channels.values() {
                row.push((d.validity[k] as u8).to_string());
            }
            if let Some(r) = &self.reference {
                let p = &r[k];
                row.extend(
                    [p.x, p.y, p.speed, p.heading, p.cum_distance]
                        .iter()
                        .map(|v| v.to_string()),
                );
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(id: &str, r: R) -> Result<Segment> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let t_col = col("t").ok_or_else(|| Error::MalformedStream("missing `t` column".into()))?;

        let present: Vec<Channel> = Channel::ALL
            .into_iter()
            .filter(|c| col(&format!("valid_{}", c.name())).is_some())
            .collect();
        let mut layout = Vec::new();
        for c in &present {
            let value_cols = c
                .columns()
                .iter()
                .map(|n| col(n).ok_or_else(|| Error::MalformedStream(format!("missing column {n}"))))
                .collect::<Result<Vec<_>>>()?;
            layout.push((*c, value_cols, col(&format!("valid_{}", c.name())).unwrap()));
        }
        let ref_cols: Option<Vec<usize>> = REF_COLUMNS.iter().map(|n| col(n)).collect();

        let mut times = Vec::new();
        let mut channels: BTreeMap<Channel, ChannelData> = present
            .iter()
            .map(|c| (*c, ChannelData { width: c.width(), values: Vec::new(), validity: Vec::new() }))
            .collect();
        let mut reference = Vec::new();
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::MalformedStream(format!("bad number `{s}`: {e}")))
        };
        for rec in rdr.records() {
            let rec = rec?;
            times.push(parse(&rec[t_col])?);
            for (c, value_cols, valid_col) in &layout {
                let d = channels.get_mut(c).unwrap();
                for &i in value_cols {
                    d.values.push(parse(&rec[i])?);
                }
                let code: u8 = rec[*valid_col]
                    .parse()
                    .map_err(|_| Error::MalformedStream("bad validity".into()))?;
                d.validity.push(Validity::from_code(code)?);
            }
            if let Some(rc) = &ref_cols {
                let v = rc.iter().map(|&i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
                reference.push(ReferencePose {
                    t: *times.last().unwrap(),
                    x: v[0],
                    y: v[1],
                    speed: v[2],
                    heading: v[3],
                    cum_distance: v[4],
                });
            }
        }
        if times.is_empty() {
            return Err(Error::EmptyInput("segment csv"));
        }
        let fs = if times.len() > 1 {
            let raw = (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]);
            (raw * 1e6).round() / 1e6
        } else {
            100.0
        };
        let seg = Segment {
            id: id.to_string(),
            fs,
            t0: times[0],
            len: times.len(),
            channels,
            reference: ref_cols.map(|_| reference),
        };
        seg.check()?;
        Ok(seg)
    }
}

const REF_COLUMNS: [&str; 5] = ["ref_x", "ref_y", "ref_speed", "ref_heading", "ref_cum_distance"];

/// Wraps every value of an angle channel into (−π, π].
pub(crate) fn normalize_angles(d: &mut ChannelData) {
    for v in &mut d.values {
        *v = angle::wrap(*v);
    }
}
