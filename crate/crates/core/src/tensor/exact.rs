//! Tolerance-free linear algebra over arbitrary-precision rationals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Rational;
use crate::tensor::Matrix;

/// Rank by fraction-free (Bareiss) elimination.
///
/// Rows are first cleared of denominators, then eliminated over the
/// integers, pivoting on the entry of largest magnitude in each column.
pub fn exact_rank(m: &Matrix<Rational>) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<BigInt>> = (0..rows)
        .map(|i| {
            let row = m.row(i);
            let lcm = row.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
            row.iter().map(|q| q.numer() * (&lcm / q.denom())).collect()
        })
        .collect();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for k in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).filter(|&i| !a[i][k].is_zero()).max_by(|&x, &y| a[x][k].abs().cmp(&a[y][k].abs()))
        else {
            continue;
        };
        a.swap(rank, p);
        let (head, tail) = a.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        let pivot = &pivot_row[k];
        for row in tail.iter_mut() {
            let lead = std::mem::take(&mut row[k]);
            for j in k + 1..cols {
                let v = pivot * &row[j] - &lead * &pivot_row[j];
                row[j] = v / &prev;
            }
        }
        prev = pivot.clone();
        rank += 1;
    }
    rank
}

/// Reduced row echelon form; returns the matrix and its pivot columns.
pub fn rref(m: &Matrix<Rational>) -> (Matrix<Rational>, Vec<usize>) {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[(i, c)].is_zero()) else { continue };
        for j in 0..cols {
            let (x, y) = (a[(p, j)].clone(), a[(r, j)].clone());
            a[(p, j)] = y;
            a[(r, j)] = x;
        }
        let inv = a[(r, c)].recip();
        for j in 0..cols {
            a[(r, j)] = &a[(r, j)] * &inv;
        }
        for i in 0..rows {
            if i == r || a[(i, c)].is_zero() {
                continue;
            }
            let f = a[(i, c)].clone();
            for j in 0..cols {
                let v = &a[(i, j)] - &f * &a[(r, j)];
                a[(i, j)] = v;
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

/// Exact inverse via Gauss-Jordan elimination.
pub fn inverse(m: &Matrix<Rational>) -> Result<Matrix<Rational>> {
    if !m.is_square() {
        return shape_err(format!("inverse needs a square matrix, got {:?}", m.shape()));
    }
    let n = m.rows();
    let aug = Matrix::from_fn(n, 2 * n, |i, j| {
        if j < n {
            m[(i, j)].clone()
        } else if j - n == i {
            Rational::one()
        } else {
            Rational::zero()
        }
    });
    let (red, pivots) = rref(&aug);
    if pivots.len() < n || pivots[n - 1] >= n {
        return Err(Error::Singular("exact inverse of a rank-deficient matrix".into()));
    }
    Ok(Matrix::from_fn(n, n, |i, j| red[(i, n + j)].clone()))
}

/// Exact Moore-Penrose pseudo-inverse through a full-rank factorization
/// `A = C F`: `A^+ = F^T (F F^T)^{-1} (C^T C)^{-1} C^T`.
pub fn pinv(m: &Matrix<Rational>) -> Result<Matrix<Rational>> {
    if m.is_square() {
        if let Ok(inv) = inverse(m) {
            return Ok(inv);
        }
    }
    let (red, pivots) = rref(m);
    if pivots.is_empty() {
        return Ok(Matrix::zeros(m.cols(), m.rows()));
    }
    let r = pivots.len();
    let c = Matrix::from_fn(m.rows(), r, |i, k| m[(i, pivots[k])].clone());
    let f = Matrix::from_fn(r, m.cols(), |k, j| red[(k, j)].clone());
    let ft = f.transpose();
    let ct = c.transpose();
    let ffi = inverse(&f.matmul(&ft)?)?;
    let cci = inverse(&ct.matmul(&c)?)?;
    ft.matmul(&ffi)?.matmul(&cci)?.matmul(&ct)
}
