//! Orthogonal hidden-to-hidden parameterizations: Cayley transform, scoRNN
//! additive updates in skew-symmetric space, the multiplicative Stiefel step,
//! modReLU and orthogonality diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::linalg::solve_refined;
use crate::tensor::Matrix;

/// Skew-symmetric `A` (strict upper triangle only) plus the ±1 scaling `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkewDoc", into = "SkewDoc")]
pub struct SkewParam {
    r: usize,
    upper: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkewDoc {
    r: usize,
    upper: Vec<f64>,
    d: Vec<f64>,
}

impl TryFrom<SkewDoc> for SkewParam {
    type Error = Error;
    fn try_from(doc: SkewDoc) -> Result<Self> {
        SkewParam::new(doc.r, doc.upper, doc.d)
    }
}

impl From<SkewParam> for SkewDoc {
    fn from(p: SkewParam) -> Self {
        SkewDoc { r: p.r, upper: p.upper, d: p.d }
    }
}

impl SkewParam {
    pub fn new(r: usize, upper: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if upper.len() != r * r.saturating_sub(1) / 2 {
            return shape_err(format!("R = {r} needs {} upper entries, got {}", r * r.saturating_sub(1) / 2, upper.len()));
        }
        if d.len() != r || d.iter().any(|&x| x != 1.0 && x != -1.0) {
            return arg_err("D must have R entries, each +1 or -1");
        }
        if upper.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(" in skew parameter".into()));
        }
        Ok(Self { r, upper, d })
    }

    /// `A = 0` with `rho` leading −1 entries in `D`.
    pub fn zero(r: usize, rho: usize) -> Result<Self> {
        Self::new(r, vec![0.0; r * r.saturating_sub(1) / 2], diag_signs(r, rho)?)
    }

    /// Reads the strict upper triangle of `a`; `a` must be skew-symmetric to 1e-12.
    pub fn from_matrix(a: &Matrix<f64>, d: Vec<f64>) -> Result<Self> {
        check_skew(a)?;
        let r = a.rows();
        let upper = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect();
        Self::new(r, upper, d)
    }

    pub fn r(&self) -> usize {
        self.r
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    pub fn rho(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn upper_mut(&mut self) -> &mut [f64] {
        &mut self.upper
    }

    /// Full skew-symmetric matrix `A`.
    pub fn a(&self) -> Matrix<f64> {
        let mut a = Matrix::zeros(self.r, self.r);
        let mut k = 0;
        for i in 0..self.r {
            for j in i + 1..self.r {
                a[(i, j)] = self.upper[k];
                a[(j, i)] = -self.upper[k];
                k += 1;
            }
        }
        a
    }
}

fn diag_signs(r: usize, rho: usize) -> Result<Vec<f64>> {
    if rho > r {
        return arg_err(format!("rho = {rho} exceeds R = {r}"));
    }
    Ok((0..r).map(|i| if i < rho { -1.0 } else { 1.0 }).collect())
}

fn check_skew(a: &Matrix<f64>) -> Result<()> {
    if !a.is_square() {
        return shape_err(format!("skew matrix must be square, got {:?}", a.shape()));
    }
    let asym = a.add(&a.transpose())?.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if asym > 1e-12 {
        return arg_err(format!("matrix is not skew-symmetric (asymmetry {asym:e})"));
    }
    Ok(())
}

/// Diagnostic record for a training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoDiag {
    pub deviation: f64,
    pub step: usize,
}

/// `W = (I + A)^{-1} (I - A) diag(D)`.
pub fn cayley(p: &SkewParam) -> Matrix<f64> {
    let a = p.a();
    let eye = Matrix::identity(p.r);
    let plus = eye.add(&a).expect("square");
    let minus = eye.sub(&a).expect("square");
    let mut w = solve_refined(&plus, &minus).expect("I + A is nonsingular for real skew-symmetric A");
    scale_cols(&mut w, &p.d);
    w
}

fn scale_cols(w: &mut Matrix<f64>, d: &[f64]) {
    for i in 0..w.rows() {
        for (j, s) in d.iter().enumerate() {
            w[(i, j)] *= s;
        }
    }
}

/// Recovers `A` from `W` and `D`: `A = (I + W D)^{-1} (I - W D)`, then
/// symmetrized to `(A - A^T) / 2`.
pub fn inverse_cayley(w: &Matrix<f64>, d: &[f64]) -> Result<Matrix<f64>> {
    if !w.is_square() || d.len() != w.rows() {
        return shape_err(format!("W {:?} with D of length {}", w.shape(), d.len()));
    }
    let mut wd = w.clone();
    scale_cols(&mut wd, d);
    let eye = Matrix::identity(w.rows());
    let a = solve_refined(&eye.add(&wd)?, &eye.sub(&wd)?)
        .map_err(|_| Error::Singular("W D has an eigenvalue of -1".into()))?;
    Ok(a.sub(&a.transpose())?.scale(&0.5))
}

/// Gradient with respect to `A`:
/// `V = (I + A)^{-T} (dl/dW) (D + W^T)`, `dl/dA = V^T - V`.
pub fn scornn_grad(dl_dw: &Matrix<f64>, w: &Matrix<f64>, p: &SkewParam) -> Result<Matrix<f64>> {
    let r = p.r;
    if dl_dw.shape() != (r, r) || w.shape() != (r, r) {
        return shape_err(format!("expected {r}x{r} matrices, got {:?} and {:?}", dl_dw.shape(), w.shape()));
    }
    // (I + A)^T = I - A for skew A.
    let left = solve_refined(&Matrix::identity(r).sub(&p.a())?, dl_dw)?;
    let v = left.matmul(&Matrix::diag(&p.d).add(&w.transpose())?)?;
    v.transpose().sub(&v)
}

/// Additive step `A ← A - η dl/dA` on the free parameters; returns the new
/// parameter and its Cayley image.
pub fn scornn_step(p: &SkewParam, dl_da: &Matrix<f64>, eta: f64) -> Result<(SkewParam, Matrix<f64>)> {
    if dl_da.shape() != (p.r, p.r) {
        return shape_err(format!("gradient {:?} for R = {}", dl_da.shape(), p.r));
    }
    check_skew(dl_da)?;
    let mut next = p.clone();
    let mut k = 0;
    for i in 0..p.r {
        for j in i + 1..p.r {
            next.upper[k] -= eta * dl_da[(i, j)];
            k += 1;
        }
    }
    let w = cayley(&next);
    Ok((next, w))
}

/// Multiplicative step `W̃ = (I + η/2 A)^{-1} (I - η/2 A) W` with `A = G^T W - W^T G`.
pub fn stiefel_step(w: &Matrix<f64>, g: &Matrix<f64>, eta: f64) -> Result<Matrix<f64>> {
    if !w.is_square() || g.shape() != w.shape() {
        return shape_err(format!("W {:?} and G {:?}", w.shape(), g.shape()));
    }
    let dev = orthogonality_deviation(w);
    if dev > 1e-6 {
        return arg_err(format!("W deviates from orthogonality by {dev:e}"));
    }
    let a = g.transpose().matmul(w)?.sub(&w.transpose().matmul(g)?)?.scale(&(eta / 2.0));
    let eye = Matrix::identity(w.rows());
    let rhs = eye.sub(&a)?.matmul(w)?;
    solve_refined(&eye.add(&a)?, &rhs).map_err(|_| Error::Singular("I + η/2 A; reduce the step size".into()))
}

/// `(|z| + b) sign(z)` where `|z| + b > 0`, else 0.
pub fn modrelu<S: Scalar>(z: &[S], b: &[S]) -> Result<Vec<S>> {
    if z.len() != b.len() {
        return shape_err(format!("modReLU input of length {} with {} biases", z.len(), b.len()));
    }
    Ok(z.iter().zip(b).map(|(z, b)| modrelu_scalar(z, b)).collect())
}

pub(crate) fn modrelu_scalar<S: Scalar>(z: &S, b: &S) -> S {
    let mag = z.abs() + b.clone();
    if z.is_zero() || !mag.is_positive() {
        S::zero()
    } else {
        mag * z.signum()
    }
}

/// Frobenius norm of `W W^T - I`.
pub fn orthogonality_deviation(w: &Matrix<f64>) -> f64 {
    let n = w.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
            let e = dot - if i == j { 1.0 } else { 0.0 };
            acc += e * e;
        }
    }
    acc.sqrt()
}

/// Upper triangle `~ U(-1/√R, 1/√R)`, `D` with `rho` leading −1 entries.
pub fn sample_skew_init<G: Rng + ?Sized>(r: usize, rho: usize, rng: &mut G) -> Result<SkewParam> {
    let d = diag_signs(r, rho)?;
    let bound = 1.0 / (r.max(1) as f64).sqrt();
    let upper = (0..r * r.saturating_sub(1) / 2).map(|_| rng.gen_range(-bound..bound)).collect();
    SkewParam::new(r, upper, d)
}

/// Default `rho = ⌊R/2⌋`.
pub fn default_rho(r: usize) -> usize {
    r / 2
}
