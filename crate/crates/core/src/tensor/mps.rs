use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_size, DenseTensor, Matrix};

/// Chain of order-3 cores `(bond_left, phys, bond_right)` closed by boundary vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsChain<S> {
    cores: Vec<DenseTensor<S>>,
    left: Vec<S>,
    right: Vec<S>,
}

impl<S: Scalar> MpsChain<S> {
    pub fn new(cores: Vec<DenseTensor<S>>, left: Vec<S>, right: Vec<S>) -> Result<Self> {
        let mut bond = left.len();
        let mut phys = None;
        for (k, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return shape_err(format!("core {k} has order {}, expected 3", c.order()));
            }
            let s = c.shape();
            if s[0] != bond {
                return shape_err(format!("core {k} left bond {} does not match {bond}", s[0]));
            }
            if *phys.get_or_insert(s[1]) != s[1] {
                return shape_err(format!("core {k} physical dimension {} differs from {}", s[1], phys.unwrap()));
            }
            bond = s[2];
        }
        if bond != right.len() {
            return shape_err(format!("right boundary has length {}, bond is {bond}", right.len()));
        }
        Ok(Self { cores, left, right })
    }

    /// `T` copies of the same core.
    pub fn uniform(core: DenseTensor<S>, t: usize, left: Vec<S>, right: Vec<S>) -> Result<Self> {
        Self::new(vec![core; t], left, right)
    }

    pub fn cores(&self) -> &[DenseTensor<S>] {
        &self.cores
    }
    pub fn left(&self) -> &[S] {
        &self.left
    }
    pub fn right(&self) -> &[S] {
        &self.right
    }
    pub fn len(&self) -> usize {
        self.cores.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }
    pub fn phys_dim(&self) -> Option<usize> {
        self.cores.first().map(|c| c.shape()[1])
    }
}

/// Core `M[k', d, k] = W^I[k, d] · W^H[k, k']` of a shallow RAC.
pub fn mps_unit_cell<S: Scalar>(w_in: &Matrix<S>, w_hid: &Matrix<S>) -> Result<DenseTensor<S>> {
    let r = w_in.rows();
    if w_hid.shape() != (r, r) {
        return shape_err(format!("hidden matrix {:?} does not match R = {r}", w_hid.shape()));
    }
    DenseTensor::from_fn(vec![r, w_in.cols(), r], |i| w_in[(i[2], i[1])].clone() * w_hid[(i[2], i[0])].clone())
}

/// Contracts every bond index, leaving the physical legs in chain order.
pub fn mps_contract<S: Scalar>(chain: &MpsChain<S>) -> Result<DenseTensor<S>> {
    let Some(m) = chain.phys_dim() else {
        let v = chain.left.iter().zip(&chain.right).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
        return Ok(DenseTensor::scalar(v));
    };
    let t = chain.len();
    let mut prefixes = 1usize;
    let mut state: Vec<S> = chain.left.clone();
    let mut bond = chain.left.len();
    for core in &chain.cores {
        let br = core.shape()[2];
        let n = prefixes as u128 * m as u128;
        check_size(n.saturating_mul(br as u128)).map_err(|e| match e {
            Error::SizeCap { cap, .. } => Error::SizeCap { requested: n * br as u128, cap },
            e => e,
        })?;
        let n = n as usize;
        let c = core.entries();
        let mut next = vec![S::zero(); n * br];
        for p in 0..prefixes {
            for kp in 0..bond {
                let s = &state[p * bond + kp];
                if s.is_zero() {
                    continue;
                }
                for d in 0..m {
                    let row = &c[(kp * m + d) * br..(kp * m + d + 1) * br];
                    let out = &mut next[(p * m + d) * br..(p * m + d + 1) * br];
                    for (o, x) in out.iter_mut().zip(row) {
                        *o = std::mem::replace(o, S::zero()) + s.clone() * x.clone();
                    }
                }
            }
        }
        state = next;
        prefixes = n;
        bond = br;
    }
    let entries = (0..prefixes)
        .map(|p| {
            state[p * bond..(p + 1) * bond]
                .iter()
                .zip(&chain.right)
                .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
        })
        .collect();
    DenseTensor::new(vec![m; t], entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};

    #[test]
    fn single_core_with_trivial_boundaries() {
        let core = DenseTensor::new(vec![1, 3, 1], vec![rat(4), rat(5), rat(6)]).unwrap();
        let chain = MpsChain::new(vec![core], vec![rat(1)], vec![rat(1)]).unwrap();
        let out = mps_contract(&chain).unwrap();
        assert_eq!(out.shape(), &[3]);
        assert_eq!(out.entries(), &[rat(4), rat(5), rat(6)]);
    }

    #[test]
    fn identity_cores_give_diagonal_indicator() {
        let core = mps_unit_cell(&Matrix::<Rational>::identity(2), &Matrix::identity(2)).unwrap();
        let chain = MpsChain::uniform(core, 3, vec![rat(1); 2], vec![rat(1); 2]).unwrap();
        let out = mps_contract(&chain).unwrap();
        for (k, v) in out.entries().iter().enumerate() {
            let expected = if k == 0 || k == 7 { 1 } else { 0 };
            assert_eq!(*v, rat(expected));
        }
    }

    #[test]
    fn unit_cell_examples() {
        let core = mps_unit_cell(&Matrix::<Rational>::identity(3), &Matrix::identity(3)).unwrap();
        for kp in 0..3 {
            for d in 0..3 {
                for k in 0..3 {
                    let expected = if kp == d && d == k { 1 } else { 0 };
                    assert_eq!(*core.get(&[kp, d, k]).unwrap(), rat(expected));
                }
            }
        }
        let w_in = Matrix::from_rows(&[vec![rat(2), rat(-3), rat(5)]]).unwrap();
        let core = mps_unit_cell(&w_in, &Matrix::from_rows(&[vec![rat(7)]]).unwrap()).unwrap();
        assert_eq!(core.entries(), &[rat(14), rat(-21), rat(35)]);

        let w_in = Matrix::from_rows(&[vec![rat(1), rat(2)], vec![rat(3), rat(4)]]).unwrap();
        let w_hid = Matrix::from_rows(&[vec![rat(5), rat(6)], vec![rat(7), rat(8)]]).unwrap();
        let core = mps_unit_cell(&w_in, &w_hid).unwrap();
        for kp in 0..2 {
            for d in 0..2 {
                for k in 0..2 {
                    assert_eq!(core.get(&[kp, d, k]).unwrap(), &(w_in[(k, d)].clone() * w_hid[(k, kp)].clone()));
                }
            }
        }
        assert!(mps_unit_cell(&w_in, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn bond_mismatch_is_rejected() {
        let a = DenseTensor::<f64>::zeros(vec![1, 2, 3]).unwrap();
        let b = DenseTensor::<f64>::zeros(vec![2, 2, 1]).unwrap();
        assert!(MpsChain::new(vec![a.clone(), b], vec![1.0], vec![1.0]).is_err());
        assert!(MpsChain::new(vec![a], vec![1.0, 2.0], vec![1.0; 3]).is_err());
    }

    #[test]
    fn contraction_respects_size_cap() {
        let core = mps_unit_cell(&Matrix::<f64>::identity(2), &Matrix::identity(2)).unwrap();
        let chain = MpsChain::uniform(core, 10, vec![1.0; 2], vec![1.0; 2]).unwrap();
        crate::tensor::with_size_cap(100, || assert!(matches!(mps_contract(&chain), Err(Error::SizeCap { .. }))));
    }
}
