//! Shallow and deep recurrent networks with RAC, tanh or modReLU merges,
//! the TT construction of the shallow RAC weights tensor, grid tensors and
//! the explicit deep weight assignment.

mod assignment;
mod forward;
mod grid;
mod random;
mod tt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{arg_err, shape_err, Result};
use crate::ortho::SkewParam;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub use assignment::{deep_assignment, deep_assignment_with, deep_grid_closed_form, default_omega, z_matrix, DEEP_MAX_M, DEEP_MAX_T};
pub use forward::{deep_forward, deep_forward_features, forward_with, shallow_forward};
pub use grid::{grid_tensor, network_grid, Embedding, GridSpec};
pub use random::{random_deep_float_net, random_float_mps_net, random_shallow_rac, sample_weight_matrix};
pub use tt::{build_weights_tensor_tt, closed_form_score, closed_form_score_tokens, mps_chain, pseudo_inverse_init};

/// Merge function `g(W^H h, W^I x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// Elementwise product.
    Rac,
    /// `tanh(a + b)`.
    Tanh,
    /// `modReLU(a + b)` with a per-channel bias.
    ModRelu,
}

/// Weights of one recurrent layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<S> {
    pub w_in: Matrix<S>,
    pub w_hid: Matrix<S>,
    pub h0: Vec<S>,
    /// modReLU bias, one per channel.
    pub bias: Option<Vec<S>>,
    /// Cayley parameter when `w_hid` is kept orthogonal.
    pub skew: Option<SkewParam>,
}

impl<S: Scalar> LayerWeights<S> {
    pub fn new(w_in: Matrix<S>, w_hid: Matrix<S>, h0: Vec<S>) -> Self {
        Self { w_in, w_hid, h0, bias: None, skew: None }
    }

    pub fn channels(&self) -> usize {
        self.w_hid.rows()
    }
}

/// Stack of recurrent layers with a linear read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct RacNetwork<S> {
    layers: Vec<LayerWeights<S>>,
    w_out: Matrix<S>,
    nonlinearity: Nonlinearity,
}

impl<S: Scalar> RacNetwork<S> {
    pub fn new(layers: Vec<LayerWeights<S>>, w_out: Matrix<S>, nonlinearity: Nonlinearity) -> Result<Self> {
        let Some(first) = layers.first() else { return arg_err("a network needs at least one layer") };
        let r = first.channels();
        for (l, layer) in layers.iter().enumerate() {
            let expect_in = if l == 0 { layer.w_in.cols() } else { r };
            if layer.w_hid.shape() != (r, r) || layer.w_in.shape() != (r, expect_in) || layer.h0.len() != r {
                return shape_err(format!(
                    "layer {l}: w_in {:?}, w_hid {:?}, h0 length {} inconsistent with R = {r}",
                    layer.w_in.shape(),
                    layer.w_hid.shape(),
                    layer.h0.len()
                ));
            }
            match (&layer.bias, nonlinearity) {
                (Some(b), Nonlinearity::ModRelu) if b.len() == r => {}
                (None, Nonlinearity::ModRelu) => return arg_err(format!("layer {l}: modReLU needs a bias vector")),
                (Some(_), Nonlinearity::ModRelu) => return shape_err(format!("layer {l}: bias length must be {r}")),
                (Some(_), _) => return arg_err(format!("layer {l}: only modReLU layers carry a bias")),
                (None, _) => {}
            }
            if let Some(p) = &layer.skew {
                if p.r() != r {
                    return shape_err(format!("layer {l}: skew parameter of size {} for R = {r}", p.r()));
                }
            }
        }
        if w_out.cols() != r {
            return shape_err(format!("w_out {:?} does not read R = {r} channels", w_out.shape()));
        }
        Ok(Self { layers, w_out, nonlinearity })
    }

    pub fn layers(&self) -> &[LayerWeights<S>] {
        &self.layers
    }
    pub fn w_out(&self) -> &Matrix<S> {
        &self.w_out
    }
    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    pub fn channels(&self) -> usize {
        self.layers[0].channels()
    }
    pub fn embed_dim(&self) -> usize {
        self.layers[0].w_in.cols()
    }
    pub fn num_classes(&self) -> usize {
        self.w_out.rows()
    }

    pub fn into_parts(self) -> (Vec<LayerWeights<S>>, Matrix<S>, Nonlinearity) {
        (self.layers, self.w_out, self.nonlinearity)
    }

    /// Same network with every layer's initial state replaced.
    pub fn with_h0s(mut self, h0s: Vec<Vec<S>>) -> Result<Self> {
        if h0s.len() != self.layers.len() {
            return shape_err(format!("{} initial states for {} layers", h0s.len(), self.layers.len()));
        }
        for (layer, h0) in self.layers.iter_mut().zip(h0s) {
            layer.h0 = h0;
        }
        let (layers, w_out, g) = self.into_parts();
        Self::new(layers, w_out, g)
    }
}

/// Trainable parameter count: `R·M + R² + (L−1)·2R² + C·R`, plus `L·R` modReLU biases.
pub fn param_count(depth: usize, channels: usize, input_dim: usize, classes: usize, g: Nonlinearity) -> usize {
    let r = channels;
    let base = r * input_dim + r * r + depth.saturating_sub(1) * 2 * r * r + classes * r;
    base + if g == Nonlinearity::ModRelu { depth * r } else { 0 }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
struct LayerDoc<S: Scalar> {
    w_in: Matrix<S>,
    w_hid: Matrix<S>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec")]
    bias: Option<Vec<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skew: Option<SkewParam>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
struct NetworkDoc<S: Scalar> {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "R")]
    r: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "C")]
    c: usize,
    nonlinearity: Nonlinearity,
    layers: Vec<LayerDoc<S>>,
    w_out: Matrix<S>,
    #[serde(with = "vec_vec")]
    h0s: Vec<Vec<S>>,
}

mod opt_vec {
    use super::*;
    use serde::de::Error as _;
    use serde_json::Value;

    pub fn serialize<S: Scalar, Z: Serializer>(v: &Option<Vec<S>>, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        v.as_ref().map(|v| v.iter().map(S::to_json).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<S>>, D::Error> {
        Option::<Vec<Value>>::deserialize(d)?
            .map(|v| v.iter().map(S::from_json).collect::<Result<Vec<_>>>())
            .transpose()
            .map_err(D::Error::custom)
    }
}

mod vec_vec {
    use super::*;
    use serde::de::Error as _;
    use serde_json::Value;

    pub fn serialize<S: Scalar, Z: Serializer>(v: &[Vec<S>], s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        v.iter().map(|r| r.iter().map(S::to_json).collect::<Vec<_>>()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<S>>, D::Error> {
        Vec::<Vec<Value>>::deserialize(d)?
            .iter()
            .map(|r| r.iter().map(S::from_json).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)
    }
}

impl<S: Scalar> Serialize for RacNetwork<S> {
    fn serialize<Z: Serializer>(&self, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        NetworkDoc {
            l: self.depth(),
            r: self.channels(),
            m: self.embed_dim(),
            c: self.num_classes(),
            nonlinearity: self.nonlinearity,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc { w_in: l.w_in.clone(), w_hid: l.w_hid.clone(), bias: l.bias.clone(), skew: l.skew.clone() })
                .collect(),
            w_out: self.w_out.clone(),
            h0s: self.layers.iter().map(|l| l.h0.clone()).collect(),
        }
        .serialize(s)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for RacNetwork<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = NetworkDoc::<S>::deserialize(d)?;
        if doc.layers.len() != doc.l || doc.h0s.len() != doc.l {
            return Err(D::Error::custom(format!("L = {} disagrees with the layer list", doc.l)));
        }
        let layers = doc
            .layers
            .into_iter()
            .zip(doc.h0s)
            .map(|(l, h0)| LayerWeights { w_in: l.w_in, w_hid: l.w_hid, h0, bias: l.bias, skew: l.skew })
            .collect();
        let net = RacNetwork::new(layers, doc.w_out, doc.nonlinearity).map_err(D::Error::custom)?;
        if (net.channels(), net.embed_dim(), net.num_classes()) != (doc.r, doc.m, doc.c) {
            return Err(D::Error::custom("declared R, M or C disagrees with the weight shapes"));
        }
        Ok(net)
    }
}
