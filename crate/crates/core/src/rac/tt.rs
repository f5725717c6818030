use super::{Embedding, Nonlinearity, RacNetwork};
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_size, checked_count, mps_unit_cell, tensor_product, DenseTensor, Matrix, MpsChain};

fn check_shallow_rac<S: Scalar>(net: &RacNetwork<S>, class: usize) -> Result<()> {
    if net.depth() != 1 || net.nonlinearity() != Nonlinearity::Rac {
        return arg_err("the TT construction needs a single-layer RAC network");
    }
    if class >= net.num_classes() {
        return arg_err(format!("class {class} out of {}", net.num_classes()));
    }
    Ok(())
}

/// Order-`T` weights tensor of class `class`, built by the TT recursion
/// `φ^{t,β} = Σ_α W^H[β,α] φ^{t−1,α} ⊗ a^{I,α}` from `φ^{0,α} = 1`, closed
/// by the read-out row.
///
/// The tensor matches the forward pass when `W^H h^0 = 1`, for example with
/// `h^0` from [`pseudo_inverse_init`] on a nonsingular `W^H`.
pub fn build_weights_tensor_tt<S: Scalar>(net: &RacNetwork<S>, class: usize, t: usize) -> Result<DenseTensor<S>> {
    check_shallow_rac(net, class)?;
    if t == 0 {
        return arg_err("the weights tensor needs T >= 1");
    }
    let m = net.embed_dim();
    check_size(checked_count(m, t))?;
    let layer = &net.layers()[0];
    let r = layer.channels();
    let a_in: Vec<DenseTensor<S>> =
        (0..r).map(|a| DenseTensor::new(vec![m], layer.w_in.row(a).to_vec())).collect::<Result<_>>()?;
    let mut phi: Vec<DenseTensor<S>> = vec![DenseTensor::scalar(S::one()); r];
    for step in 1..=t {
        let mixed: Vec<DenseTensor<S>> =
            phi.iter().zip(&a_in).map(|(p, a)| tensor_product(p, a)).collect::<Result<_>>()?;
        let (coeffs, outputs) = if step == t { (net.w_out(), 1) } else { (&layer.w_hid, r) };
        let rows: Vec<usize> = if step == t { vec![class] } else { (0..outputs).collect() };
        phi = rows
            .into_iter()
            .map(|beta| {
                let mut acc = DenseTensor::zeros(mixed[0].shape().to_vec())?;
                for (alpha, term) in mixed.iter().enumerate() {
                    let c = &coeffs[(beta, alpha)];
                    if !c.is_zero() {
                        acc.add_scaled(c, term)?;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
    }
    Ok(phi.pop().expect("one class row"))
}

/// `Σ_{d} A[d_1..d_T] Π_t f_{d_t}(x^t)` for features `f(x^t)`.
pub fn closed_form_score<S: Scalar>(weights: &DenseTensor<S>, features: &[Vec<S>]) -> Result<S> {
    if weights.order() != features.len() {
        return shape_err(format!("order-{} tensor with {} inputs", weights.order(), features.len()));
    }
    let m = weights.uniform_dim()?;
    if let Some(f) = features.iter().find(|f| f.len() != m) {
        return shape_err(format!("feature of length {} for mode dimension {m}", f.len()));
    }
    let mut v = weights.entries().to_vec();
    for f in features.iter().rev() {
        v = v
            .chunks(m)
            .map(|chunk| chunk.iter().zip(f).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
            .collect();
    }
    Ok(v.pop().expect("contracted to a scalar"))
}

/// [`closed_form_score`] on tokens under an embedding.
pub fn closed_form_score_tokens<S: Scalar>(
    weights: &DenseTensor<S>,
    embedding: &Embedding<S>,
    tokens: &[usize],
) -> Result<S> {
    let features = tokens.iter().map(|&t| embedding.features(t)).collect::<Result<Vec<_>>>()?;
    closed_form_score(weights, &features)
}

/// `(W^H)^† 1`.
pub fn pseudo_inverse_init<S: Scalar>(w_hid: &Matrix<S>) -> Result<Vec<S>> {
    w_hid.pinv()?.matvec(&vec![S::one(); w_hid.rows()])
}

/// Unit-cell chain of length `T` with left boundary `h^0` and right boundary
/// the read-out row of `class`.
pub fn mps_chain<S: Scalar>(net: &RacNetwork<S>, class: usize, t: usize) -> Result<MpsChain<S>> {
    check_shallow_rac(net, class)?;
    let layer = &net.layers()[0];
    let core = mps_unit_cell(&layer.w_in, &layer.w_hid)?;
    MpsChain::uniform(core, t, layer.h0.clone(), net.w_out().row(class).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rac::{network_grid, shallow_forward, GridSpec, LayerWeights};
    use crate::scalar::{pow, rat, Rational};
    use crate::tensor::mps_contract;

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| rat(v)).collect()).collect::<Vec<_>>()).unwrap()
    }

    fn net(w_in: Matrix<Rational>, w_hid: Matrix<Rational>, w_out: Matrix<Rational>) -> RacNetwork<Rational> {
        let h0 = pseudo_inverse_init(&w_hid).unwrap();
        RacNetwork::new(vec![LayerWeights::new(w_in, w_hid, h0)], w_out, Nonlinearity::Rac).unwrap()
    }

    #[test]
    fn single_channel_is_scaled_outer_power() {
        let n = net(q(&[&[2, -1, 3]]), q(&[&[5]]), q(&[&[7], &[-2]]));
        for t in 1..=4 {
            let a = build_weights_tensor_tt(&n, 1, t).unwrap();
            let scale = pow(&rat(5), t - 1) * rat(-2);
            let expected = DenseTensor::from_fn(vec![3; t], |d| {
                d.iter().fold(scale.clone(), |acc, &k| acc * rat([2, -1, 3][k]))
            })
            .unwrap();
            assert_eq!(a, expected);
        }
    }

    #[test]
    fn t1_matches_forward_on_every_token() {
        let n = net(q(&[&[1, 2], &[3, -1]]), q(&[&[2, 1], &[1, 1]]), q(&[&[1, 4]]));
        let a = build_weights_tensor_tt(&n, 0, 1).unwrap();
        for tok in 0..2 {
            assert_eq!(a.entries()[tok], shallow_forward(&n, &[tok]).unwrap()[0]);
        }
    }

    #[test]
    fn tt_equals_mps_and_forward_grid() {
        let n = net(q(&[&[1, 2, 0], &[3, -1, 2]]), q(&[&[2, 1], &[1, -1]]), q(&[&[1, 4], &[0, 1]]));
        for t in 1..=4 {
            for c in 0..2 {
                let a = build_weights_tensor_tt(&n, c, t).unwrap();
                assert_eq!(a, mps_contract(&mps_chain(&n, c, t).unwrap()).unwrap());
                assert_eq!(a, network_grid(&n, &GridSpec::one_hot(3, t), c).unwrap());
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let a = DenseTensor::from_fn(vec![2, 2], |d| rat((d[0] * 2 + d[1]) as i64 + 1)).unwrap();
        let e = Embedding::OneHot(2);
        assert_eq!(closed_form_score_tokens(&a, &e, &[1, 0]).unwrap(), rat(3));
        let z = DenseTensor::<Rational>::zeros(vec![2, 2]).unwrap();
        assert_eq!(closed_form_score(&z, &[vec![rat(1), rat(5)], vec![rat(2), rat(3)]]).unwrap(), rat(0));
        // Σ A_ij f_i g_j with f = (1,2), g = (3,4): 1·3 + 2·4 + 2·3·3 + 2·4·4 = 61.
        assert_eq!(closed_form_score(&a, &[vec![rat(1), rat(2)], vec![rat(3), rat(4)]]).unwrap(), rat(61));
        assert!(closed_form_score(&a, &[vec![rat(1), rat(2)]]).is_err());
    }

    #[test]
    fn pseudo_inverse_init_examples() {
        assert_eq!(pseudo_inverse_init(&Matrix::<Rational>::identity(3)).unwrap(), vec![rat(1); 3]);
        let h = pseudo_inverse_init(&Matrix::<f64>::identity(2).scale(&2.0)).unwrap();
        assert!(h.iter().all(|x| (x - 0.5).abs() < 1e-15));
        let (c, s) = (0.6f64, 0.8f64);
        let w = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let h = pseudo_inverse_init(&w).unwrap();
        let expected = w.transpose().matvec(&[1.0, 1.0]).unwrap();
        assert!(h.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}
