use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FF → stacked LSTM → dropout → FF head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Widths of the tanh layers applied per tick before the LSTM stack.
    pub ff_in: Vec<usize>,
    pub lstm_layers: usize,
    pub lstm_cells: usize,
    /// Dropout probability on the last hidden state of the LSTM stack.
    pub dropout: f64,
    /// Hidden tanh widths between dropout and the linear output layer.
    pub ff_out: Vec<usize>,
    pub output_dim: usize,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// The full-size model: one FF layer, 120 LSTM cells, dropout 0.5, linear head.
    pub fn full(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            ff_in: vec![120],
            lstm_layers: 1,
            lstm_cells: 120,
            dropout: 0.5,
            ff_out: Vec::new(),
            output_dim,
            init_seed: 0,
        }
    }

    /// Reduced width for quick runs.
    pub fn desk(input_dim: usize, output_dim: usize) -> Self {
        Self {
            ff_in: vec![32],
            lstm_cells: 32,
            ..Self::full(input_dim, output_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("network", "input and output dims must be > 0"));
        }
        if self.lstm_layers == 0 || self.lstm_cells == 0 {
            return Err(Error::config("lstm_layers", "need at least one LSTM layer with cells"));
        }
        if self.ff_in.iter().chain(&self.ff_out).any(|w| *w == 0) {
            return Err(Error::config("ff_in", "layer widths must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Affine layer stored as a row-major `out × in` matrix followed by the bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub w: usize,
    pub b: usize,
}

/// One LSTM layer. `w` is a row-major `4H × (in + H)` matrix acting on
/// `[x_t; h_{t−1}]`, gate rows ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmLayer {
    pub inp: usize,
    pub hidden: usize,
    pub w: usize,
    pub b: usize,
}

impl LstmLayer {
    pub fn cols(&self) -> usize {
        self.inp + self.hidden
    }
}

/// Offsets of every tensor in the flat parameter vector, in storage order:
/// input FF layers, LSTM layers, output FF layers, head.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub ff_in: Vec<Dense>,
    pub lstm: Vec<LstmLayer>,
    pub ff_out: Vec<Dense>,
    pub head: Dense,
    pub total: usize,
}

impl Layout {
    fn new(spec: &NetworkSpec) -> Self {
        let mut offset = 0;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense { inp, out, w: offset, b: offset + inp * out };
            offset += inp * out + out;
            d
        };
        let mut width = spec.input_dim;
        let ff_in: Vec<Dense> = spec
            .ff_in
            .iter()
            .map(|&w| {
                let d = dense(width, w);
                width = w;
                d
            })
            .collect();
        let mut lstm = Vec::new();
        for _ in 0..spec.lstm_layers {
            let h = spec.lstm_cells;
            // the closure holds `offset` mutably; allocate via a 4H × (in+H) "dense" block
            let d = dense(width + h, 4 * h);
            lstm.push(LstmLayer { inp: width, hidden: h, w: d.w, b: d.b });
            width = h;
        }
        let ff_out: Vec<Dense> = spec
            .ff_out
            .iter()
            .map(|&w| {
                let d = dense(width, w);
                width = w;
                d
            })
            .collect();
        let head = dense(width, spec.output_dim);
        Layout { ff_in, lstm, ff_out, head, total: offset }
    }

    /// Ranges holding weight matrices (everything except biases).
    pub fn weight_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for d in self.ff_in.iter().chain(&self.ff_out).chain(std::iter::once(&self.head)) {
            out.push(d.w..d.b);
        }
        for l in &self.lstm {
            out.push(l.w..l.b);
        }
        out.sort_by_key(|r| r.start);
        out
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> f64 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    limit * (2.0 * rng.random::<f64>() - 1.0)
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // sign fix makes the draw uniform over the orthogonal group
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Glorot-uniform input matrices, orthogonal recurrent blocks, zero biases
/// except a forget-gate bias of 1.
pub fn init_params(spec: &NetworkSpec) -> Vec<f64> {
    let layout = spec.layout();
    let mut p = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    for d in layout.ff_in.iter().chain(&layout.ff_out).chain(std::iter::once(&layout.head)) {
        for v in &mut p[d.w..d.b] {
            *v = glorot(&mut rng, d.inp, d.out);
        }
    }
    for l in &layout.lstm {
        let (h, cols) = (l.hidden, l.cols());
        for gate in 0..4 {
            let rec = orthogonal(&mut rng, h);
            for r in 0..h {
                let row = l.w + (gate * h + r) * cols;
                for c in 0..l.inp {
                    p[row + c] = glorot(&mut rng, l.inp, h);
                }
                for c in 0..h {
                    p[row + l.inp + c] = rec[(r, c)];
                }
            }
        }
        for v in &mut p[l.b + h..l.b + 2 * h] {
            *v = 1.0;
        }
    }
    p
}
