//! Dense tensors over `f64` or exact rationals, matricization, ranks,
//! δ tensors, MPS chains and multiset coefficients.

pub mod exact;
pub mod linalg;
mod matrix;
mod mps;

use std::cell::Cell;

use num_bigint::BigUint;
use num_traits::One;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{shape_err, Error, Result};
use crate::scalar::{Rational, Scalar};

pub use exact::exact_rank;
pub use linalg::{numeric_rank, DEFAULT_REL_TOL};
pub use matrix::{hadamard_power, Matrix};
pub use mps::{mps_contract, mps_unit_cell, MpsChain};

/// Default bound on the number of entries any materialized tensor may hold.
pub const DEFAULT_SIZE_CAP: usize = 1 << 24;

thread_local! {
    static SIZE_CAP: Cell<usize> = const { Cell::new(DEFAULT_SIZE_CAP) };
}

/// Size cap in effect on the current thread.
pub fn size_cap() -> usize {
    SIZE_CAP.with(Cell::get)
}

/// Sets the current thread's size cap and returns the previous one.
pub fn set_size_cap(cap: usize) -> usize {
    SIZE_CAP.with(|c| c.replace(cap))
}

/// Runs `f` with a temporary size cap on the current thread.
pub fn with_size_cap<R>(cap: usize, f: impl FnOnce() -> R) -> R {
    struct Restore(usize);
    impl Drop for Restore {
        fn drop(&mut self) {
            set_size_cap(self.0);
        }
    }
    let _restore = Restore(set_size_cap(cap));
    f()
}

/// `base^exp` as an entry count, saturating far above any cap.
pub fn checked_count(base: usize, exp: usize) -> u128 {
    let mut n: u128 = 1;
    for _ in 0..exp {
        n = n.saturating_mul(base as u128);
        if n > u64::MAX as u128 {
            return n;
        }
    }
    n
}

/// Errors when `requested` entries would exceed the thread's size cap.
pub fn check_size(requested: u128) -> Result<()> {
    let cap = size_cap();
    if requested > cap as u128 {
        Err(Error::SizeCap { requested, cap })
    } else {
        Ok(())
    }
}

fn product(shape: &[usize]) -> u128 {
    shape.iter().fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
}

/// Order-T array stored row-major, last index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<S> {
    shape: Vec<usize>,
    entries: Vec<S>,
}

impl<S: Scalar> DenseTensor<S> {
    pub fn new(shape: Vec<usize>, entries: Vec<S>) -> Result<Self> {
        if shape.contains(&0) {
            return shape_err(format!("mode dimensions must be positive, got {shape:?}"));
        }
        if product(&shape) != entries.len() as u128 {
            return shape_err(format!("shape {shape:?} needs {} entries, got {}", product(&shape), entries.len()));
        }
        Ok(Self { shape, entries })
    }

    pub fn scalar(v: S) -> Self {
        Self { shape: Vec::new(), entries: vec![v] }
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::from_fn(shape, |_| S::zero())
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index, in storage order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> S) -> Result<Self> {
        if shape.contains(&0) {
            return shape_err(format!("mode dimensions must be positive, got {shape:?}"));
        }
        check_size(product(&shape))?;
        let len = product(&shape) as usize;
        let mut entries = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            entries.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, entries })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn order(&self) -> usize {
        self.shape.len()
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn entries(&self) -> &[S] {
        &self.entries
    }
    pub fn into_entries(self) -> Vec<S> {
        self.entries
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() || idx.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return shape_err(format!("index {idx:?} outside shape {:?}", self.shape));
        }
        Ok(idx.iter().zip(&self.shape).fold(0, |acc, (i, d)| acc * d + i))
    }

    pub fn get(&self, idx: &[usize]) -> Result<&S> {
        Ok(&self.entries[self.offset(idx)?])
    }

    pub fn map<T: Scalar>(&self, f: impl FnMut(&S) -> T) -> DenseTensor<T> {
        DenseTensor { shape: self.shape.clone(), entries: self.entries.iter().map(f).collect() }
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|x| x.clone() * c.clone())
    }

    /// `self += c * other`, shapes must agree.
    pub fn add_scaled(&mut self, c: &S, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a = std::mem::replace(a, S::zero()) + c.clone() * b.clone();
        }
        Ok(())
    }

    /// Common dimension of all modes, if they agree.
    pub fn uniform_dim(&self) -> Result<usize> {
        match self.shape.first() {
            None => Ok(1),
            Some(&m) if self.shape.iter().all(|&d| d == m) => Ok(m),
            Some(_) => Err(Error::UnequalModes(self.shape.clone())),
        }
    }
}

impl DenseTensor<Rational> {
    pub fn to_f64(&self) -> DenseTensor<f64> {
        self.map(Scalar::to_f64)
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Tensor (outer) product; the result's shape is `a.shape ++ b.shape`.
pub fn tensor_product<S: Scalar>(a: &DenseTensor<S>, b: &DenseTensor<S>) -> Result<DenseTensor<S>> {
    check_size(a.len() as u128 * b.len() as u128)?;
    let mut entries = Vec::with_capacity(a.len() * b.len());
    for x in &a.entries {
        entries.extend(b.entries.iter().map(|y| x.clone() * y.clone()));
    }
    Ok(DenseTensor { shape: [a.shape.as_slice(), b.shape.as_slice()].concat(), entries })
}

/// Bipartition `(I, J)` of the 1-based modes `{1..T}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    i: Vec<usize>,
    j: Vec<usize>,
}

impl Partition {
    pub fn new(i: Vec<usize>, j: Vec<usize>) -> Result<Self> {
        let t = i.len() + j.len();
        for set in [&i, &j] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Partition(format!("{set:?} is not strictly ascending")));
            }
        }
        let mut all: Vec<usize> = i.iter().chain(&j).copied().collect();
        all.sort_unstable();
        if all != (1..=t).collect::<Vec<_>>() {
            return Err(Error::Partition(format!("{i:?} and {j:?} do not partition 1..={t}")));
        }
        Ok(Self { i, j })
    }

    /// `I = {1..T/2}`, `J = {T/2+1..T}`.
    pub fn start_end(t: usize) -> Result<Self> {
        if t % 2 != 0 {
            return Err(Error::Partition(format!("Start-End needs an even order, got {t}")));
        }
        Self::new((1..=t / 2).collect(), (t / 2 + 1..=t).collect())
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.i
    }
    pub fn col_modes(&self) -> &[usize] {
        &self.j
    }
    pub fn order(&self) -> usize {
        self.i.len() + self.j.len()
    }

    /// Per-mode (is_row, weight) so that row/col = Σ d_mode · weight.
    fn weights(&self, m: usize) -> Vec<(bool, usize)> {
        let mut w = vec![(false, 0); self.order()];
        for (set, is_row) in [(&self.i, true), (&self.j, false)] {
            let n = set.len();
            for (t, &mode) in set.iter().enumerate() {
                w[mode - 1] = (is_row, m.pow((n - 1 - t) as u32));
            }
        }
        w
    }
}

/// Matricization `[[A]]_{I,J}`: rows indexed by the modes in `I`, columns by `J`.
pub fn matricize<S: Scalar>(a: &DenseTensor<S>, p: &Partition) -> Result<Matrix<S>> {
    let m = a.uniform_dim()?;
    if p.order() != a.order() {
        return Err(Error::Partition(format!("partition of order {} for a tensor of order {}", p.order(), a.order())));
    }
    let rows = m.pow(p.i.len() as u32);
    let cols = m.pow(p.j.len() as u32);
    let w = p.weights(m);
    let mut out = vec![S::zero(); rows * cols];
    let mut idx = vec![0usize; a.order()];
    for v in &a.entries {
        let (mut r, mut c) = (0, 0);
        for (d, &(is_row, wt)) in idx.iter().zip(&w) {
            if is_row {
                r += d * wt;
            } else {
                c += d * wt;
            }
        }
        out[r * cols + c] = v.clone();
        increment(&mut idx, &a.shape);
    }
    Matrix::new(rows, cols, out)
}

/// Inverse of [`matricize`] for an order-`p.order()` tensor with all modes of dimension `m`.
pub fn unmatricize<S: Scalar>(mat: &Matrix<S>, m: usize, p: &Partition) -> Result<DenseTensor<S>> {
    let rows = m.pow(p.i.len() as u32);
    let cols = m.pow(p.j.len() as u32);
    if mat.shape() != (rows, cols) {
        return shape_err(format!("expected a {rows}x{cols} matrix, got {:?}", mat.shape()));
    }
    let w = p.weights(m);
    DenseTensor::from_fn(vec![m; p.order()], |idx| {
        let (mut r, mut c) = (0, 0);
        for (d, &(is_row, wt)) in idx.iter().zip(&w) {
            if is_row {
                r += d * wt;
            } else {
                c += d * wt;
            }
        }
        mat[(r, c)].clone()
    })
}

/// Order-3 tensor of dimension `r` with ones on the super-diagonal.
pub fn delta_tensor<S: Scalar>(r: usize) -> Result<DenseTensor<S>> {
    if r == 0 {
        return Err(Error::InvalidArgument("delta tensor needs R >= 1".into()));
    }
    DenseTensor::from_fn(vec![r; 3], |i| if i[0] == i[1] && i[1] == i[2] { S::one() } else { S::zero() })
}

/// Multiset coefficient `((n multichoose k)) = binomial(n + k - 1, k)`.
pub fn multiset_coeff(n: u64, k: u64) -> Result<BigUint> {
    if n == 0 {
        return if k == 0 { Ok(BigUint::one()) } else { Err(Error::InvalidArgument("multiset(0, k) with k > 0".into())) };
    }
    let mut c = BigUint::one();
    for i in 1..=k {
        c = c * BigUint::from(n - 1 + i) / BigUint::from(i);
    }
    Ok(c)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    shape: Vec<usize>,
    entries: Vec<Value>,
}

impl<S: Scalar> Serialize for DenseTensor<S> {
    fn serialize<Z: Serializer>(&self, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        TensorDoc { shape: self.shape.clone(), entries: self.entries.iter().map(S::to_json).collect() }.serialize(s)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for DenseTensor<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TensorDoc::deserialize(d)?;
        let entries = doc.entries.iter().map(S::from_json).collect::<Result<Vec<_>>>().map_err(D::Error::custom)?;
        DenseTensor::new(doc.shape, entries).map_err(D::Error::custom)
    }
}
