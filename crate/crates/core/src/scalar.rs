//! Scalar kinds: `f64` for numerics and training, arbitrary-precision
//! rationals for tolerance-free rank computations.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::{exact, linalg, Matrix};

/// Exact rational with arbitrary-precision numerator and denominator.
pub type Rational = num_rational::BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarKind {
    Float64,
    ExactRational,
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarKind::Float64 => f.write_str("float"),
            ScalarKind::ExactRational => f.write_str("exact"),
        }
    }
}

/// Element type of tensors and matrices.
///
/// The kind is fixed at compile time, so mixing float and rational operands
/// is a type error rather than a runtime one.
pub trait Scalar: Clone + fmt::Debug + PartialEq + Num + Signed + Send + Sync + 'static {
    const KIND: ScalarKind;

    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn tanh(&self) -> Result<Self>;
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self>;

    /// Rank: exact for rationals, SVD-based with the default tolerance for floats.
    fn matrix_rank(m: &Matrix<Self>) -> Result<usize>;
    fn matrix_inverse(m: &Matrix<Self>) -> Result<Matrix<Self>>;
    fn matrix_pinv(m: &Matrix<Self>) -> Result<Matrix<Self>>;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
}

impl Scalar for f64 {
    const KIND: ScalarKind = ScalarKind::Float64;

    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn tanh(&self) -> Result<Self> {
        Ok(f64::tanh(*self))
    }
    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map(Value::Number).unwrap_or(Value::Null)
    }
    fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| Error::Format(format!("bad float {n}"))),
            Value::String(s) => s.parse().map_err(|_| Error::Format(format!("bad float {s:?}"))),
            other => Err(Error::Format(format!("expected a number, found {other}"))),
        }
    }
    fn matrix_rank(m: &Matrix<Self>) -> Result<usize> {
        linalg::numeric_rank(m, linalg::DEFAULT_REL_TOL)
    }
    fn matrix_inverse(m: &Matrix<Self>) -> Result<Matrix<Self>> {
        linalg::Lu::new(m)?.inverse()
    }
    fn matrix_pinv(m: &Matrix<Self>) -> Result<Matrix<Self>> {
        linalg::pinv(m)
    }
}

impl Scalar for Rational {
    const KIND: ScalarKind = ScalarKind::ExactRational;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_finite(&self) -> bool {
        true
    }
    fn tanh(&self) -> Result<Self> {
        Err(Error::UnsupportedScalar("exact-rational"))
    }
    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }
    fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::String(s) => parse_rational(s).ok_or_else(|| Error::Format(format!("bad rational {s:?}"))),
            Value::Number(n) => n
                .as_i64()
                .map(<Rational as Scalar>::from_i64)
                .ok_or_else(|| Error::Format(format!("rational {n} must be an integer or a string"))),
            other => Err(Error::Format(format!("expected a rational, found {other}"))),
        }
    }
    fn matrix_rank(m: &Matrix<Self>) -> Result<usize> {
        Ok(exact::exact_rank(m))
    }
    fn matrix_inverse(m: &Matrix<Self>) -> Result<Matrix<Self>> {
        exact::inverse(m)
    }
    fn matrix_pinv(m: &Matrix<Self>) -> Result<Matrix<Self>> {
        exact::pinv(m)
    }
}

pub(crate) fn parse_rational(s: &str) -> Option<Rational> {
    let (n, d) = s.trim().split_once('/').unwrap_or((s.trim(), "1"));
    let n: BigInt = n.trim().parse().ok()?;
    let d: BigInt = d.trim().parse().ok()?;
    (!d.is_zero()).then(|| Rational::new(n, d))
}

/// Rational built from a machine integer.
pub fn rat(v: i64) -> Rational {
    <Rational as Scalar>::from_i64(v)
}

/// `z^e` for a non-negative machine exponent.
pub fn pow<S: Scalar>(z: &S, e: usize) -> S {
    num_traits::pow(z.clone(), e)
}
