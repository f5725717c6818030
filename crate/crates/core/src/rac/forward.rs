use super::{Embedding, Nonlinearity, RacNetwork};
use crate::error::{arg_err, shape_err, Result};
use crate::ortho::modrelu_scalar;
use crate::scalar::Scalar;

fn merge<S: Scalar>(g: Nonlinearity, a: Vec<S>, b: Vec<S>, bias: Option<&[S]>) -> Result<Vec<S>> {
    match g {
        Nonlinearity::Rac => Ok(a.into_iter().zip(b).map(|(x, y)| x * y).collect()),
        Nonlinearity::Tanh => a.into_iter().zip(b).map(|(x, y)| (x + y).tanh()).collect(),
        Nonlinearity::ModRelu => {
            let bias = bias.expect("validated at construction");
            Ok(a.into_iter().zip(b).zip(bias).map(|((x, y), c)| modrelu_scalar(&(x + y), c)).collect())
        }
    }
}

/// Deep forward pass on already-embedded inputs `f(x^t)`; returns `W^O h^{T,L}`.
pub fn deep_forward_features<S: Scalar>(net: &RacNetwork<S>, inputs: &[Vec<S>]) -> Result<Vec<S>> {
    let m = net.embed_dim();
    let mut hs: Vec<Vec<S>> = net.layers.iter().map(|l| l.h0.clone()).collect();
    for x in inputs {
        if x.len() != m {
            return shape_err(format!("input of length {} for embedding dimension {m}", x.len()));
        }
        let mut below = x.clone();
        for (layer, h) in net.layers.iter().zip(hs.iter_mut()) {
            let a = layer.w_hid.matvec(h)?;
            let b = layer.w_in.matvec(&below)?;
            *h = merge(net.nonlinearity, a, b, layer.bias.as_deref())?;
            below = h.clone();
        }
    }
    net.w_out.matvec(hs.last().expect("at least one layer"))
}

/// Forward pass with an explicit embedding; tokens are 0-based template indices.
pub fn forward_with<S: Scalar>(net: &RacNetwork<S>, embedding: &Embedding<S>, tokens: &[usize]) -> Result<Vec<S>> {
    if embedding.dim() != net.embed_dim() {
        return shape_err(format!("embedding dimension {} for a network reading {}", embedding.dim(), net.embed_dim()));
    }
    let inputs = tokens.iter().map(|&t| embedding.features(t)).collect::<Result<Vec<_>>>()?;
    deep_forward_features(net, &inputs)
}

/// Deep forward pass under the one-hot embedding; tokens are 0-based.
pub fn deep_forward<S: Scalar>(net: &RacNetwork<S>, tokens: &[usize]) -> Result<Vec<S>> {
    forward_with(net, &Embedding::OneHot(net.embed_dim()), tokens)
}

/// Single-layer forward pass; errors for deeper networks.
pub fn shallow_forward<S: Scalar>(net: &RacNetwork<S>, tokens: &[usize]) -> Result<Vec<S>> {
    if net.depth() != 1 {
        return arg_err(format!("shallow_forward needs L = 1, got L = {}", net.depth()));
    }
    deep_forward(net, tokens)
}
