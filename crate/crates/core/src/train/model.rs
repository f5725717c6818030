use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::ortho::{cayley, default_rho, sample_skew_init, SkewParam};
use crate::rac::{param_count, LayerWeights, Nonlinearity, RacNetwork};
use crate::tensor::Matrix;

/// Recurrent cell family; `Scornn` is modReLU with a Cayley-parameterized
/// orthogonal hidden-to-hidden matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Rac,
    Tanh,
    Scornn,
}

impl CellKind {
    pub fn nonlinearity(self) -> Nonlinearity {
        match self {
            CellKind::Rac => Nonlinearity::Rac,
            CellKind::Tanh => Nonlinearity::Tanh,
            CellKind::Scornn => Nonlinearity::ModRelu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub depth: usize,
    pub channels: usize,
    pub cell: CellKind,
}

impl Architecture {
    pub fn params(&self, input_dim: usize, classes: usize) -> usize {
        param_count(self.depth, self.channels, input_dim, classes, self.cell.nonlinearity())
    }

    /// Channel count at `depth` whose parameter count is closest to `budget`.
    pub fn matched(depth: usize, cell: CellKind, budget: usize, input_dim: usize, classes: usize) -> Self {
        let mut best = Architecture { depth, channels: 1, cell };
        let mut gap = usize::MAX;
        for r in 1.. {
            let arch = Architecture { depth, channels: r, cell };
            let p = arch.params(input_dim, classes);
            let d = p.abs_diff(budget);
            if d < gap {
                gap = d;
                best = arch;
            }
            if p > budget {
                break;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w_in: Array2<f64>,
    pub w_hid: Array2<f64>,
    pub h0: Array1<f64>,
    pub bias: Option<Array1<f64>>,
    pub skew: Option<SkewParam>,
}

/// Dense float model used by the trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub w_out: Array2<f64>,
    pub nonlinearity: Nonlinearity,
}

fn glorot<G: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut G) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..a))
}

pub(crate) fn to_array(m: &Matrix<f64>) -> Array2<f64> {
    Array2::from_shape_vec(m.shape(), m.as_slice().to_vec()).expect("matching shape")
}

pub(crate) fn to_matrix(a: &Array2<f64>) -> Matrix<f64> {
    Matrix::new(a.nrows(), a.ncols(), a.iter().copied().collect()).expect("non-empty")
}

impl Model {
    /// Glorot-uniform input and output weights; orthogonal `W^H` (Cayley of a
    /// random skew matrix); `h0 = 1` for RAC and `0` otherwise.
    pub fn init<G: Rng + ?Sized>(arch: &Architecture, input_dim: usize, classes: usize, rng: &mut G) -> Result<Self> {
        if arch.depth == 0 || arch.channels == 0 || input_dim == 0 || classes == 0 {
            return arg_err(format!("degenerate architecture {arch:?} with M = {input_dim}, C = {classes}"));
        }
        let r = arch.channels;
        let mut layers = Vec::with_capacity(arch.depth);
        for l in 0..arch.depth {
            let w_in = glorot(r, if l == 0 { input_dim } else { r }, rng);
            let skew = sample_skew_init(r, default_rho(r), rng)?;
            let w_hid = to_array(&cayley(&skew));
            let scornn = arch.cell == CellKind::Scornn;
            let h0 = if arch.cell == CellKind::Rac { Array1::ones(r) } else { Array1::zeros(r) };
            layers.push(Layer {
                w_in,
                w_hid,
                h0,
                bias: scornn.then(|| Array1::zeros(r)),
                skew: scornn.then_some(skew),
            });
        }
        Ok(Self { layers, w_out: glorot(classes, r, rng), nonlinearity: arch.cell.nonlinearity() })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    pub fn channels(&self) -> usize {
        self.w_out.ncols()
    }
    pub fn input_dim(&self) -> usize {
        self.layers[0].w_in.ncols()
    }
    pub fn classes(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn from_network(net: &RacNetwork<f64>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| Layer {
                w_in: to_array(&l.w_in),
                w_hid: to_array(&l.w_hid),
                h0: Array1::from(l.h0.clone()),
                bias: l.bias.clone().map(Array1::from),
                skew: l.skew.clone(),
            })
            .collect();
        Self { layers, w_out: to_array(net.w_out()), nonlinearity: net.nonlinearity() }
    }

    pub fn to_network(&self) -> Result<RacNetwork<f64>> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerWeights {
                w_in: to_matrix(&l.w_in),
                w_hid: to_matrix(&l.w_hid),
                h0: l.h0.to_vec(),
                bias: l.bias.as_ref().map(|b| b.to_vec()),
                skew: l.skew.clone(),
            })
            .collect();
        RacNetwork::new(layers, to_matrix(&self.w_out), self.nonlinearity)
    }

    /// Trainable parameter slices: per layer `W^I`, skew upper triangle or
    /// `W^H`, `h0`, bias; then `W^O`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(l.w_in.as_slice_mut().expect("standard layout"));
            match l.skew.as_mut() {
                Some(s) => out.push(s.upper_mut()),
                None => out.push(l.w_hid.as_slice_mut().expect("standard layout")),
            }
            out.push(l.h0.as_slice_mut().expect("standard layout"));
            if let Some(b) = l.bias.as_mut() {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.w_out.as_slice_mut().expect("standard layout"));
        out
    }

    /// Recomputes every Cayley-parameterized `W^H` from its skew parameter.
    pub fn refresh_orthogonal(&mut self) {
        for l in self.layers.iter_mut() {
            if let Some(s) = &l.skew {
                l.w_hid = to_array(&cayley(s));
            }
        }
    }

    /// Largest `‖W W^T − I‖_F` over Cayley-parameterized layers.
    pub fn max_orthogonality_deviation(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter(|l| l.skew.is_some())
            .map(|l| {
                let g = l.w_hid.dot(&l.w_hid.t()) - Array2::<f64>::eye(l.w_hid.nrows());
                g.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .reduce(f64::max)
    }
}
