use serde::{Deserialize, Serialize};

/// Estimated 2D position with per-axis variance.
///
/// `t` is the time the estimate refers to; `horizon` how far past the newest
/// input data that time lies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub t: f64,
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub horizon: f64,
}

impl PoseEstimate {
    pub fn is_valid(&self) -> bool {
        self.mean.iter().chain(&self.var).all(|v| v.is_finite()) && self.var.iter().all(|v| *v >= 0.0)
    }
}

pub fn write_estimates_csv<W: std::io::Write>(w: W, estimates: &[PoseEstimate]) -> crate::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "x", "y", "var_x", "var_y"])?;
    for e in estimates {
        wtr.write_record(
            [e.t, e.mean[0], e.mean[1], e.var[0], e.var[1]].map(|v| v.to_string()),
        )?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_estimates_csv<R: std::io::Read>(r: R, horizon: f64) -> crate::Result<Vec<PoseEstimate>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = rec
            .iter()
            .take(5)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| crate::Error::MalformedStream(format!("estimate csv: {e}")))?;
        if v.len() < 3 {
            return Err(crate::Error::MalformedStream(format!("estimate csv: row {} needs t, x, y", out.len() + 1)));
        }
        let get = |i: usize| v.get(i).copied().unwrap_or(0.0);
        out.push(PoseEstimate {
            t: get(0),
            mean: [get(1), get(2)],
            var: [get(3), get(4)],
            horizon,
        });
    }
    Ok(out)
}
