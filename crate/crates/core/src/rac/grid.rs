use super::{forward_with, RacNetwork};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_size, checked_count, DenseTensor, Matrix};

/// Map from template index to feature vector `f(x^{(i)})`.
#[derive(Clone, Debug, PartialEq)]
pub enum Embedding<S> {
    /// Template `i` maps to the i-th unit vector of dimension `M`.
    OneHot(usize),
    /// Row `i` of `F` is `f(x^{(i)})`; `F` must be square.
    Custom(Matrix<S>),
}

impl<S: Scalar> Embedding<S> {
    pub fn custom(f: Matrix<S>) -> Result<Self> {
        if !f.is_square() {
            return shape_err(format!("embedding matrix must be square, got {:?}", f.shape()));
        }
        Ok(Self::Custom(f))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::OneHot(m) => *m,
            Self::Custom(f) => f.cols(),
        }
    }

    /// The matrix `F` (identity for one-hot).
    pub fn matrix(&self) -> Matrix<S> {
        match self {
            Self::OneHot(m) => Matrix::identity(*m),
            Self::Custom(f) => f.clone(),
        }
    }

    pub fn features(&self, token: usize) -> Result<Vec<S>> {
        let m = self.dim();
        if token >= m {
            return Err(Error::TokenOutOfRange { token, vocab: m });
        }
        Ok(match self {
            Self::OneHot(_) => (0..m).map(|i| if i == token { S::one() } else { S::zero() }).collect(),
            Self::Custom(f) => f.row(token).to_vec(),
        })
    }
}

/// Grid of `M^T` template combinations.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<S> {
    pub embedding: Embedding<S>,
    pub t: usize,
}

impl<S: Scalar> GridSpec<S> {
    pub fn one_hot(m: usize, t: usize) -> Self {
        Self { embedding: Embedding::OneHot(m), t }
    }
}

/// `A(y)[d_1..d_T] = y(x^{(d_1)}, ..., x^{(d_T)})` over all grid points.
pub fn grid_tensor<S: Scalar>(
    mut evaluator: impl FnMut(&[usize]) -> Result<S>,
    spec: &GridSpec<S>,
) -> Result<DenseTensor<S>> {
    let m = spec.embedding.dim();
    if m == 0 {
        return arg_err("grid needs at least one template");
    }
    check_size(checked_count(m, spec.t))?;
    let mut err = None;
    let grid = DenseTensor::from_fn(vec![m; spec.t], |idx| match evaluator(idx) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            S::zero()
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(grid),
    }
}

/// Grid tensor of class score `class` of a network under the spec's embedding.
pub fn network_grid<S: Scalar>(net: &RacNetwork<S>, spec: &GridSpec<S>, class: usize) -> Result<DenseTensor<S>> {
    if class >= net.num_classes() {
        return arg_err(format!("class {class} out of {}", net.num_classes()));
    }
    grid_tensor(|tokens| Ok(forward_with(net, &spec.embedding, tokens)?.swap_remove(class)), spec)
}
