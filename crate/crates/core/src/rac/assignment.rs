use num_traits::Zero;

use super::{LayerWeights, Nonlinearity, RacNetwork};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::scalar::{pow, Rational, Scalar};
use crate::tensor::{check_size, checked_count, DenseTensor, Matrix};

/// Largest sequence length accepted by [`deep_grid_closed_form`].
pub const DEEP_MAX_T: usize = 8;
/// Largest template count accepted by [`deep_grid_closed_form`].
pub const DEEP_MAX_M: usize = 3;
/// Bound on the exponent `Ω^M` to keep entry sizes bounded.
const MAX_EXPONENT: u64 = 1 << 20;

/// Smallest `Ω` with `Ω > (T/2)^2`.
pub fn default_omega(t: usize) -> u64 {
    let k = (t / 2) as u64;
    k * k + 1
}

fn check_params(m: usize, z: &Rational, omega: u64) -> Result<()> {
    if omega == 0 {
        return arg_err("Ω must be positive");
    }
    if z.is_zero() {
        return arg_err("z must be nonzero");
    }
    let big = (0..m).try_fold(1u64, |acc, _| acc.checked_mul(omega).filter(|&v| v <= MAX_EXPONENT));
    if big.is_none() {
        return Err(Error::LimitExceeded(format!("exponent Ω^M = {omega}^{m} is too large")));
    }
    Ok(())
}

/// `R × M` matrix with `Z[i,j] = z^(Ω^i · δ_ij)` (1-based) for `i ≤ M`, zero rows below.
///
/// Off-diagonal entries of the first `M` rows equal `z^0 = 1`.
pub fn z_matrix(m: usize, r: usize, z: &Rational, omega: u64) -> Result<Matrix<Rational>> {
    check_params(m, z, omega)?;
    Ok(Matrix::from_fn(r, m, |i, j| {
        if i >= m {
            Rational::zero()
        } else if i == j {
            pow(z, omega.pow(i as u32 + 1) as usize)
        } else {
            Rational::from_i64(1)
        }
    }))
}

/// Two-layer RAC with `W^{I,1} = Z (F^T)^{-1}`, `W^{I,2}[i,j] = δ_{i1}`,
/// `W^{H,1} = W^{H,2} = I`, `W^O[i,j] = δ_{1j}` (one class), `h^{0,l} = 1`.
pub fn deep_assignment_with(
    m: usize,
    r: usize,
    z: &Rational,
    omega: u64,
    f: &Matrix<Rational>,
) -> Result<RacNetwork<Rational>> {
    if m == 0 || r == 0 {
        return arg_err("M and R must be positive");
    }
    if f.shape() != (m, m) {
        return shape_err(format!("embedding matrix {:?} for M = {m}", f.shape()));
    }
    let w_in1 = z_matrix(m, r, z, omega)?.matmul(&f.transpose().inverse()?)?;
    let w_in2 = Matrix::from_fn(r, r, |i, _| if i == 0 { Rational::from_i64(1) } else { Rational::zero() });
    let ones = vec![Rational::from_i64(1); r];
    let layers = vec![
        LayerWeights::new(w_in1, Matrix::identity(r), ones.clone()),
        LayerWeights::new(w_in2, Matrix::identity(r), ones),
    ];
    let w_out = Matrix::from_fn(1, r, |_, j| if j == 0 { Rational::from_i64(1) } else { Rational::zero() });
    RacNetwork::new(layers, w_out, Nonlinearity::Rac)
}

/// [`deep_assignment_with`] under the one-hot embedding (`F = I`).
pub fn deep_assignment(m: usize, r: usize, z: &Rational, omega: u64) -> Result<RacNetwork<Rational>> {
    deep_assignment_with(m, r, z, omega, &Matrix::identity(m))
}

/// `A[d_1..d_T] = Π_{t=1}^{T} Σ_{r=1}^{R̄} Π_{j=1}^{t} Z[r, d_j]` with `R̄ = min(M, R)`.
pub fn deep_grid_closed_form(m: usize, r: usize, t: usize, z: &Rational, omega: u64) -> Result<DenseTensor<Rational>> {
    if t > DEEP_MAX_T || m > DEEP_MAX_M {
        return Err(Error::LimitExceeded(format!(
            "closed-form grid supports T <= {DEEP_MAX_T} and M <= {DEEP_MAX_M}, got T = {t}, M = {m}"
        )));
    }
    check_size(checked_count(m, t))?;
    let rbar = m.min(r);
    let zm = z_matrix(m, rbar, z, omega)?;
    DenseTensor::from_fn(vec![m; t], |d| {
        let mut prods = vec![Rational::from_i64(1); rbar];
        let mut out = Rational::from_i64(1);
        for &dj in d {
            let mut sum = Rational::zero();
            for (k, p) in prods.iter_mut().enumerate() {
                *p = &*p * &zm[(k, dj)];
                sum += &*p;
            }
            out *= sum;
        }
        out
    })
}
