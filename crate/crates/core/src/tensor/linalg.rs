//! Floating-point dense linear algebra: one-sided Jacobi SVD, LU with
//! partial pivoting, pseudo-inverse.

use crate::error::{arg_err, shape_err, Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_REL_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Output of [`jacobi`]: `vecs[j] = A v_j` (or `A^T v_j` when transposed),
/// so `|vecs[j]|` is the j-th singular value.
struct Jacobi {
    transposed: bool,
    vecs: Vec<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

/// One-sided Jacobi on the smaller Gram dimension.
fn jacobi(m: &Matrix<f64>, with_basis: bool) -> Jacobi {
    let (rows, cols) = m.shape();
    let transposed = rows < cols;
    let (n, len) = if transposed { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = if transposed {
        (0..rows).map(|i| m.row(i).to_vec()).collect()
    } else {
        (0..cols).map(|j| m.col(j)).collect()
    };
    let mut basis: Vec<Vec<f64>> = if with_basis {
        (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    } else {
        Vec::new()
    };
    let mut norms: Vec<f64> = vecs.iter().map(|v| dot(v, v)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&vecs[p], &vecs[q]);
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut vecs, p, q, c, s, len);
                if with_basis {
                    rotate(&mut basis, p, q, c, s, n);
                }
                norms[p] = dot(&vecs[p], &vecs[p]);
                norms[q] = dot(&vecs[q], &vecs[q]);
            }
        }
        if !rotated {
            break;
        }
    }
    Jacobi { transposed, vecs, basis }
}

fn rotate(v: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64, len: usize) {
    let (lo, hi) = v.split_at_mut(q);
    let (vp, vq) = (&mut lo[p], &mut hi[0]);
    for k in 0..len {
        let a = vp[k];
        let b = vq[k];
        vp[k] = c * a - s * b;
        vq[k] = s * a + c * b;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix<f64>) -> Result<Vec<f64>> {
    m.check_finite()?;
    let mut s: Vec<f64> = jacobi(m, false).vecs.iter().map(|v| dot(v, v).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values above `rel_tol * σ_max * max(rows, cols)`.
pub fn numeric_rank(m: &Matrix<f64>, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return arg_err(format!("rel_tol must be positive, got {rel_tol}"));
    }
    let s = singular_values(m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    let cutoff = rel_tol * smax * m.rows().max(m.cols()) as f64;
    Ok(s.iter().filter(|&&x| x > cutoff).count())
}

/// Moore-Penrose pseudo-inverse via the Jacobi SVD.
pub fn pinv(m: &Matrix<f64>) -> Result<Matrix<f64>> {
    m.check_finite()?;
    let (rows, cols) = m.shape();
    let j = jacobi(m, true);
    let sq: Vec<f64> = j.vecs.iter().map(|v| dot(v, v)).collect();
    let smax = sq.iter().copied().fold(0.0, f64::max).sqrt();
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * smax;
    let mut out = Matrix::zeros(cols, rows);
    for (k, (w, b)) in j.vecs.iter().zip(&j.basis).enumerate() {
        if sq[k].sqrt() <= cutoff {
            continue;
        }
        // Non-transposed: A^+ += b w^T / σ²; transposed: A^+ += w b^T / σ².
        let (left, right) = if j.transposed { (w, b) } else { (b, w) };
        for (i, l) in left.iter().enumerate() {
            for (c, r) in right.iter().enumerate() {
                out[(i, c)] += l * r / sq[k];
            }
        }
    }
    Ok(out)
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &Matrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return shape_err(format!("LU needs a square matrix, got {:?}", m.shape()));
        }
        m.check_finite()?;
        let n = m.rows();
        let mut lu = m.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let tiny = scale * n as f64 * f64::EPSILON;
        for k in 0..n {
            let p = (k..n).max_by(|&a, &b| lu[a * n + k].abs().total_cmp(&lu[b * n + k].abs())).unwrap();
            if lu[p * n + k].abs() <= tiny {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                for c in 0..n {
                    lu.swap(p * n + c, k * n + c);
                }
                perm.swap(p, k);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[i * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return shape_err(format!("rhs length {} vs {n}", b.len()));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix<f64>) -> Result<Matrix<f64>> {
        if b.rows() != self.n {
            return shape_err(format!("rhs has {} rows, expected {}", b.rows(), self.n));
        }
        let mut out = Matrix::zeros(self.n, b.cols());
        for c in 0..b.cols() {
            let x = self.solve_vec(&b.col(c))?;
            for (r, v) in x.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix<f64>> {
        self.solve(&Matrix::identity(self.n))
    }
}

/// Solves `A X = B` with one step of iterative refinement.
pub fn solve_refined(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
    let lu = Lu::new(a)?;
    let x = lu.solve(b)?;
    let resid = b.sub(&a.matmul(&x)?)?;
    x.add(&lu.solve(&resid)?)
}
