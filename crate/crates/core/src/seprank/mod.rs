//! Start-End separation-rank estimators and randomized/deterministic
//! harnesses for the shallow value, the deep lower bound and the
//! supporting combinatorial lemmas.

mod combinatorics;
pub mod suite;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::rac::{
    build_weights_tensor_tt, deep_grid_closed_form, network_grid, random_deep_float_net, random_float_mps_net,
    random_shallow_rac, GridSpec, RacNetwork,
};
use crate::scalar::{Rational, Scalar, ScalarKind};
use crate::tensor::{
    check_size, checked_count, matricize, mps_contract, multiset_coeff, numeric_rank, DenseTensor, Matrix,
    MpsChain, Partition, DEFAULT_REL_TOL,
};

pub use combinatorics::{
    bucket_reward_dp, bucket_reward_optimal, enumerate_states, enumerate_trajectories, rearrangement_check,
    repetition_count, repetition_nested_count, rho_star, sorted_color_sequences, verify_decomp_identity,
    verify_decomp_identity_mutated, verify_unique_argmax, StateVector, Trajectory, MAX_TRAJECTORY_K,
};

/// Largest grid accepted by [`brute_force_sep_rank`].
pub const BRUTE_FORCE_MAX_ENTRIES: usize = 4096;
/// Fraction of randomized trials that must hit the predicted value.
pub const PASS_RATE: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Equal,
    AtLeast,
    Violation,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Equal => "equal",
            Verdict::AtLeast => "at-least",
            Verdict::Violation => "violation",
        })
    }
}

/// Outcome of one rank verification cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SepRankReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub measured_rank: usize,
    #[serde(with = "biguint_string")]
    pub expected: BigUint,
    pub verdict: Verdict,
    pub arithmetic: ScalarKind,
    pub trials: usize,
    pub failures: usize,
    /// Pass rate of the auxiliary float trials, when run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub float_pass_rate: Option<f64>,
}

impl SepRankReport {
    pub const CSV_HEADER: &'static str = "M,R,T,L,measured,expected,verdict,trials,failures";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.m, self.r, self.t, self.l, self.measured_rank, self.expected, self.verdict, self.trials, self.failures
        )
    }

    pub fn is_violation(&self) -> bool {
        self.verdict == Verdict::Violation
    }
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

fn check_even(t: usize) -> Result<()> {
    if t == 0 || t % 2 != 0 {
        return arg_err(format!("T must be positive and even, got {t}"));
    }
    Ok(())
}

/// `min(R, M^{T/2})` as a big integer.
fn shallow_value(m: usize, r: usize, t: usize) -> BigUint {
    BigUint::from(r).min(num_traits::pow(BigUint::from(m), t / 2))
}

/// Start-End rank of the TT weights tensor (class 0) of a single-layer RAC.
pub fn sep_rank_shallow<S: Scalar>(net: &RacNetwork<S>, t: usize) -> Result<usize> {
    check_even(t)?;
    check_size(checked_count(net.embed_dim(), t))?;
    let a = build_weights_tensor_tt(net, 0, t)?;
    matricize(&a, &Partition::start_end(t)?)?.rank()
}

/// Start-End matricization rank of a grid tensor; a lower bound on the separation rank.
pub fn sep_rank_lower_bound<S: Scalar>(grid: &DenseTensor<S>, t: usize) -> Result<usize> {
    check_even(t)?;
    if grid.order() != t {
        return arg_err(format!("grid of order {} for T = {t}", grid.order()));
    }
    matricize(grid, &Partition::start_end(t)?)?.rank()
}

/// Evaluates `y` on the full `M^T` grid and returns the exact Start-End rank.
pub fn brute_force_sep_rank(evaluator: impl FnMut(&[usize]) -> Result<Rational>, m: usize, t: usize) -> Result<usize> {
    check_even(t)?;
    let n = checked_count(m, t);
    if n > BRUTE_FORCE_MAX_ENTRIES as u128 {
        return Err(Error::LimitExceeded(format!("brute-force grid of {n} entries exceeds {BRUTE_FORCE_MAX_ENTRIES}")));
    }
    let grid = crate::rac::grid_tensor(evaluator, &GridSpec::one_hot(m, t))?;
    sep_rank_lower_bound(&grid, t)
}

fn mode(ranks: &[usize]) -> usize {
    let mut counts = BTreeMap::new();
    for &r in ranks {
        *counts.entry(r).or_insert(0usize) += 1;
    }
    counts.into_iter().max_by_key(|&(r, c)| (c, r)).map_or(0, |(r, _)| r)
}

fn equality_report(m: usize, r: usize, t: usize, l: usize, ranks: &[usize], expected: BigUint, kind: ScalarKind) -> SepRankReport {
    let exp = usize::try_from(&expected).unwrap_or(usize::MAX);
    let failures = ranks.iter().filter(|&&k| k != exp).count();
    let exceeded = ranks.iter().any(|&k| k > exp);
    let hits = ranks.len() - failures;
    let verdict = if !exceeded && hits as f64 >= PASS_RATE * ranks.len() as f64 { Verdict::Equal } else { Verdict::Violation };
    SepRankReport {
        m,
        r,
        t,
        l,
        measured_rank: mode(ranks),
        expected,
        verdict,
        arithmetic: kind,
        trials: ranks.len(),
        failures,
        float_pass_rate: None,
    }
}

/// Samples `trials` random rational single-layer RACs and compares their
/// exact Start-End rank with `min(R, M^{T/2})`.
pub fn verify_theorem_shallow<G: Rng + ?Sized>(m: usize, r: usize, t: usize, trials: usize, rng: &mut G) -> Result<SepRankReport> {
    check_even(t)?;
    check_size(checked_count(m, t))?;
    let ranks = (0..trials)
        .map(|_| sep_rank_shallow(&random_shallow_rac(m, r, 1, rng)?, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(equality_report(m, r, t, 1, &ranks, shallow_value(m, r, t), ScalarKind::ExactRational))
}

/// Exact Start-End rank of the explicit two-layer assignment against
/// `((min(M,R) multichoose T/2))`, plus `float_trials` random float nets.
pub fn verify_theorem_deep<G: Rng + ?Sized>(
    m: usize,
    r: usize,
    t: usize,
    z: &Rational,
    omega: u64,
    float_trials: usize,
    rng: &mut G,
) -> Result<SepRankReport> {
    check_even(t)?;
    let k = (t / 2) as u64;
    if omega <= k * k {
        return arg_err(format!("Ω = {omega} must exceed (T/2)^2 = {}", k * k));
    }
    let grid = deep_grid_closed_form(m, r, t, z, omega)?;
    let measured = sep_rank_lower_bound(&grid, t)?;
    let bound = multiset_coeff(m.min(r) as u64, k)?;
    let bound_usize = usize::try_from(&bound).unwrap_or(usize::MAX);
    let mut passes = 0;
    for _ in 0..float_trials {
        let net = random_deep_float_net(m, r, 2, rng)?;
        let g = network_grid(&net, &GridSpec::one_hot(m, t), 0)?;
        if sep_rank_lower_bound(&g, t)? >= bound_usize {
            passes += 1;
        }
    }
    Ok(SepRankReport {
        m,
        r,
        t,
        l: 2,
        measured_rank: measured,
        verdict: if measured >= bound_usize { Verdict::AtLeast } else { Verdict::Violation },
        expected: bound,
        arithmetic: ScalarKind::ExactRational,
        trials: 1,
        failures: usize::from(measured < bound_usize),
        float_pass_rate: (float_trials > 0).then(|| passes as f64 / float_trials as f64),
    })
}

/// Predicted Start-End rank of a bond-`R` MPS: `min(R, M^{T/2})`.
pub fn min_cut_mps_rank(r: usize, m: usize, t: usize) -> Result<BigUint> {
    check_even(t)?;
    Ok(shallow_value(m, r, t))
}

/// Measured Start-End rank (tolerance 1e-10) of a random float unit-cell MPS.
pub fn measure_mps_rank<G: Rng + ?Sized>(r: usize, m: usize, t: usize, rng: &mut G) -> Result<usize> {
    check_even(t)?;
    let net = random_float_mps_net(m, r, rng)?;
    let layer = &net.layers()[0];
    let core = crate::tensor::mps_unit_cell(&layer.w_in, &layer.w_hid)?;
    let chain = MpsChain::uniform(core, t, layer.h0.clone(), net.w_out().row(0).to_vec())?;
    let a = mps_contract(&chain)?;
    numeric_rank(&matricize(&a, &Partition::start_end(t)?)?, DEFAULT_REL_TOL)
}

/// Min-cut prediction against `trials` random float MPS chains.
pub fn verify_min_cut<G: Rng + ?Sized>(r: usize, m: usize, t: usize, trials: usize, rng: &mut G) -> Result<SepRankReport> {
    let expected = min_cut_mps_rank(r, m, t)?;
    check_size(checked_count(m, t).saturating_mul(r as u128))?;
    let ranks = (0..trials).map(|_| measure_mps_rank(r, m, t, rng)).collect::<Result<Vec<_>>>()?;
    Ok(equality_report(m, r, t, 1, &ranks, expected, ScalarKind::Float64))
}

/// One Hadamard-power trial: returns `(numeric_rank(A^∘p), multiset(R, p))`
/// for a random rank-`R` `rows × cols` matrix `A = U V^T`.
pub fn hadamard_bound_trial<G: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    r: usize,
    p: u32,
    rng: &mut G,
) -> Result<(usize, BigUint)> {
    let u = Matrix::from_fn(rows, r, |_, _| rng.gen_range(-1.0..1.0));
    let v = Matrix::from_fn(r, cols, |_, _| rng.gen_range(-1.0..1.0));
    let a = u.matmul(&v)?;
    let measured = numeric_rank(&a.hadamard_power(p), DEFAULT_REL_TOL)?;
    Ok((measured, multiset_coeff(r as u64, p as u64)?))
}

/// Per-sample ranks of a matrix-valued family `m(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySpotCheck {
    pub samples: Vec<Rational>,
    pub ranks: Vec<usize>,
    pub full_rank: usize,
}

impl PolySpotCheck {
    /// Samples where the rank falls below `target` (full rank by default).
    pub fn deficient(&self, target: Option<usize>) -> Vec<Rational> {
        let target = target.unwrap_or(self.full_rank);
        self.samples.iter().zip(&self.ranks).filter(|(_, &r)| r < target).map(|(x, _)| x.clone()).collect()
    }

    /// True iff every sample outside `exceptions` reaches full rank.
    pub fn holds(&self, exceptions: &[Rational]) -> bool {
        self.deficient(None).iter().all(|x| exceptions.contains(x))
    }
}

/// Exact ranks of `family(x)` at each sample point (at least three).
pub fn poly_full_rank_spotcheck(
    mut family: impl FnMut(&Rational) -> Result<Matrix<Rational>>,
    samples: &[Rational],
) -> Result<PolySpotCheck> {
    if samples.len() < 3 {
        return arg_err("need at least three sample points");
    }
    let mut ranks = Vec::with_capacity(samples.len());
    let mut full_rank = 0;
    for x in samples {
        let m = family(x)?;
        full_rank = m.rows().min(m.cols());
        ranks.push(m.rank()?);
    }
    Ok(PolySpotCheck { samples: samples.to_vec(), ranks, full_rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rac::{deep_assignment, default_omega, shallow_forward};
    use crate::scalar::rat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shallow_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = random_shallow_rac(3, 1, 1, &mut rng).unwrap();
        assert_eq!(sep_rank_shallow(&one, 4).unwrap(), 1);
        let net = random_shallow_rac(2, 2, 1, &mut rng).unwrap();
        assert_eq!(sep_rank_shallow(&net, 4).unwrap(), 2);
        let wide = random_shallow_rac(2, 8, 1, &mut rng).unwrap();
        assert_eq!(sep_rank_shallow(&wide, 4).unwrap(), 4);
        assert!(sep_rank_shallow(&net, 3).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let sep = crate::rac::grid_tensor(|d| Ok(rat(d[0] as i64 + 1) * rat(d[1] as i64 - 3)), &GridSpec::one_hot(3, 2)).unwrap();
        assert_eq!(sep_rank_lower_bound(&sep, 2).unwrap(), 1);
        let zero = DenseTensor::<Rational>::zeros(vec![2; 4]).unwrap();
        assert_eq!(sep_rank_lower_bound(&zero, 4).unwrap(), 0);
        let deep = deep_grid_closed_form(2, 2, 4, &rat(2), default_omega(4)).unwrap();
        assert!(sep_rank_lower_bound(&deep, 4).unwrap() >= 3);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_sep_rank(|d| Ok(rat((d[0] == d[1]) as i64)), 2, 2).unwrap(), 2);
        assert_eq!(brute_force_sep_rank(|_| Ok(rat(4)), 3, 4).unwrap(), 1);
        let f = |d: &[usize]| {
            let a = rat(d[0] as i64 + 1) * rat(2 * d[1] as i64 - 1);
            let b = rat(d[0] as i64 * d[0] as i64) * rat(d[1] as i64 + 5);
            Ok(a + b)
        };
        assert_eq!(brute_force_sep_rank(f, 3, 2).unwrap(), 2);
        assert!(matches!(brute_force_sep_rank(|_| Ok(rat(1)), 5, 6), Err(Error::LimitExceeded(_))));
    }

    #[test]
    fn brute_force_matches_tt_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let net = random_shallow_rac(2, 3, 1, &mut rng).unwrap();
            let bf = brute_force_sep_rank(|d| Ok(shallow_forward(&net, d)?.swap_remove(0)), 2, 4).unwrap();
            assert_eq!(bf, sep_rank_shallow(&net, 4).unwrap());
        }
    }

    #[test]
    fn theorem_shallow_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rep = verify_theorem_shallow(2, 2, 4, 20, &mut rng).unwrap();
        assert_eq!((rep.measured_rank, rep.verdict), (2, Verdict::Equal));
        let rep = verify_theorem_shallow(2, 1, 6, 10, &mut rng).unwrap();
        assert_eq!((rep.measured_rank, rep.failures), (1, 0));
        let rep = verify_theorem_shallow(3, 9, 2, 10, &mut rng).unwrap();
        assert_eq!(rep.measured_rank, 3);
        assert_eq!(rep.csv_row(), format!("3,9,2,1,3,3,equal,10,{}", rep.failures));
    }

    #[test]
    fn theorem_deep_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rep = verify_theorem_deep(2, 2, 4, &rat(2), 5, 3, &mut rng).unwrap();
        assert_eq!(rep.expected, BigUint::from(3u32));
        assert_eq!(rep.verdict, Verdict::AtLeast);
        let rep = verify_theorem_deep(2, 1, 4, &rat(2), 5, 0, &mut rng).unwrap();
        assert_eq!(rep.expected, BigUint::from(1u32));
        assert_eq!(rep.verdict, Verdict::AtLeast);
        assert!(verify_theorem_deep(2, 2, 4, &rat(2), 4, 0, &mut rng).is_err());
    }

    #[test]
    fn min_cut_examples() {
        assert_eq!(min_cut_mps_rank(2, 2, 4).unwrap(), BigUint::from(2u32));
        assert_eq!(min_cut_mps_rank(100, 2, 4).unwrap(), BigUint::from(4u32));
        assert_eq!(min_cut_mps_rank(1, 3, 6).unwrap(), BigUint::from(1u32));
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        assert_eq!(measure_mps_rank(2, 2, 4, &mut rng).unwrap(), 2);
    }

    #[test]
    fn poly_spotcheck_examples() {
        let samples: Vec<Rational> = [0, 1, 2].iter().map(|&v| rat(v)).collect();
        let unimodular = poly_full_rank_spotcheck(
            |x| Matrix::from_rows(&[vec![rat(1), x.clone()], vec![x.clone(), x * x + rat(1)]]),
            &samples,
        )
        .unwrap();
        assert!(unimodular.holds(&[]));
        let samples: Vec<Rational> = [-1, 0, 1].iter().map(|&v| rat(v)).collect();
        let diag = poly_full_rank_spotcheck(|x| Ok(Matrix::diag(&[x.clone(), x.clone()])), &samples).unwrap();
        assert_eq!(diag.deficient(None), vec![rat(0)]);
        assert!(diag.holds(&[rat(0)]) && !diag.holds(&[]));
        let zs: Vec<Rational> = [2, 3, 5].iter().map(|&v| rat(v)).collect();
        let deep = poly_full_rank_spotcheck(
            |z| matricize(&deep_grid_closed_form(2, 2, 4, z, 5)?, &Partition::start_end(4)?),
            &zs,
        )
        .unwrap();
        assert!(deep.deficient(Some(3)).is_empty());
        assert!(poly_full_rank_spotcheck(|_| Ok(Matrix::<Rational>::identity(1)), &zs[..2]).is_err());
    }

    #[test]
    fn rank_of_deep_assignment_net_grid() {
        let net = deep_assignment(2, 2, &rat(2), 5).unwrap();
        let g = network_grid(&net, &GridSpec::one_hot(2, 4), 0).unwrap();
        assert!(sep_rank_lower_bound(&g, 4).unwrap() >= 3);
    }
}
