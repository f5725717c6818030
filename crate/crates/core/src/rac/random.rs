use rand::Rng;

use super::{pseudo_inverse_init, LayerWeights, Nonlinearity, RacNetwork};
use crate::error::Result;
use crate::scalar::{rat, Rational};
use crate::tensor::Matrix;

/// Magnitude bound of sampled integer weights.
pub const WEIGHT_BOUND: i64 = 20;

/// Nonzero integer entries uniform in `[-20, 20] \ {0}`.
pub fn sample_weight_matrix<G: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut G) -> Matrix<Rational> {
    Matrix::from_fn(rows, cols, |_, _| {
        let v = rng.gen_range(1..=WEIGHT_BOUND);
        rat(if rng.gen_bool(0.5) { v } else { -v })
    })
}

/// Random single-layer rational RAC with nonsingular `W^H` and
/// `h^0 = (W^H)^{-1} 1`.
pub fn random_shallow_rac<G: Rng + ?Sized>(m: usize, r: usize, c: usize, rng: &mut G) -> Result<RacNetwork<Rational>> {
    let w_in = sample_weight_matrix(r, m, rng);
    let w_hid = loop {
        let w = sample_weight_matrix(r, r, rng);
        if w.rank()? == r {
            break w;
        }
    };
    let h0 = pseudo_inverse_init(&w_hid)?;
    RacNetwork::new(vec![LayerWeights::new(w_in, w_hid, h0)], sample_weight_matrix(c, r, rng), Nonlinearity::Rac)
}

fn uniform<G: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut G) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random single-class, single-layer float RAC with entries `U(-1, 1)`.
pub fn random_float_mps_net<G: Rng + ?Sized>(m: usize, r: usize, rng: &mut G) -> Result<RacNetwork<f64>> {
    random_deep_float_net(m, r, 1, rng)
}

/// Random depth-`l` float RAC with one class; all weights and initial states `U(-1, 1)`.
pub fn random_deep_float_net<G: Rng + ?Sized>(m: usize, r: usize, l: usize, rng: &mut G) -> Result<RacNetwork<f64>> {
    let layers = (0..l)
        .map(|k| {
            let w_in = uniform(r, if k == 0 { m } else { r }, rng);
            let w_hid = uniform(r, r, rng);
            let h0 = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            LayerWeights::new(w_in, w_hid, h0)
        })
        .collect();
    RacNetwork::new(layers, uniform(1, r, rng), Nonlinearity::Rac)
}
