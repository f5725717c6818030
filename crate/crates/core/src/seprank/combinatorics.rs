//! Bucket states, removal trajectories and the reward bookkeeping used to
//! certify the deep lower bound.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::scalar::{pow, Rational};
use crate::tensor::{multiset_coeff, Matrix};

/// Largest bucket size accepted by trajectory enumeration.
pub const MAX_TRAJECTORY_K: u32 = 8;

/// Composition of `K` into `R̄` non-negative parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateVector {
    counts: Vec<u32>,
}

impl StateVector {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Color counts of a sequence of 1-based colors over `rbar` colors.
    pub fn from_colors(colors: &[usize], rbar: usize) -> Result<Self> {
        let mut counts = vec![0; rbar];
        for &c in colors {
            if c == 0 || c > rbar {
                return arg_err(format!("color {c} outside 1..={rbar}"));
            }
            counts[c - 1] += 1;
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
    pub fn k(&self) -> u32 {
        self.counts.iter().sum()
    }
    pub fn colors(&self) -> usize {
        self.counts.len()
    }
}

/// Chain `p^(K−1), ..., p^(1)` obtained by removing one unit per step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
}

impl Trajectory {
    /// Checks sums `K−1, ..., 1` and componentwise monotonicity from `start`.
    pub fn is_valid_from(&self, start: &StateVector) -> bool {
        let mut prev = start;
        let mut expect = start.k();
        for s in &self.states {
            expect = match expect.checked_sub(1) {
                Some(e) => e,
                None => return false,
            };
            if s.k() != expect
                || s.colors() != prev.colors()
                || s.counts.iter().zip(&prev.counts).any(|(a, b)| a > b)
            {
                return false;
            }
            prev = s;
        }
        expect <= 1 && (start.k() == 0 || expect == 1)
    }
}

/// All compositions of `k` into `rbar` parts, lexicographic order.
pub fn enumerate_states(rbar: usize, k: u32) -> Result<Vec<StateVector>> {
    if rbar == 0 {
        return arg_err("R̄ must be positive");
    }
    let total = multiset_coeff(rbar as u64, k as u64)?;
    if total > BigUint::from(1u32 << 24) {
        return Err(Error::LimitExceeded(format!("{total} states")));
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(rbar);
    fn rec(rem: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<StateVector>) {
        if slots == 1 {
            cur.push(rem);
            out.push(StateVector::new(cur.clone()));
            cur.pop();
            return;
        }
        for v in 0..=rem {
            cur.push(v);
            rec(rem - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    rec(k, rbar, &mut cur, &mut out);
    Ok(out)
}

/// All removal trajectories from `p`.
pub fn enumerate_trajectories(p: &StateVector) -> Result<Vec<Trajectory>> {
    if p.k() > MAX_TRAJECTORY_K {
        return Err(Error::LimitExceeded(format!("trajectories from K = {} > {MAX_TRAJECTORY_K}", p.k())));
    }
    let mut out = Vec::new();
    let mut path = Vec::new();
    fn rec(cur: &StateVector, path: &mut Vec<StateVector>, out: &mut Vec<Trajectory>) {
        if cur.k() <= 1 {
            out.push(Trajectory { states: path.clone() });
            return;
        }
        for r in 0..cur.colors() {
            if cur.counts[r] > 0 {
                let mut next = cur.clone();
                next.counts[r] -= 1;
                path.push(next.clone());
                rec(&next, path, out);
                path.pop();
            }
        }
    }
    rec(p, &mut path, &mut out);
    Ok(out)
}

/// Full chain `p^(K), p^(K−1), ..., p^(1)` of a trajectory from `p`.
fn full_chain<'a>(p: &'a StateVector, tr: &'a Trajectory) -> impl Iterator<Item = &'a StateVector> {
    std::iter::once(p).chain(tr.states.iter())
}

/// Both sides of the state/trajectory decomposition for one multi-index `d`
/// (0-based template indices); `drop_first` omits one trajectory term.
fn decomp_sides(
    z: &Matrix<Rational>,
    d: &[usize],
    table: &[(StateVector, Vec<Trajectory>)],
    drop_first: bool,
) -> (Rational, Rational) {
    let t = d.len();
    let k = t / 2;
    let rbar = z.rows();
    let mut lhs = Rational::one();
    for tt in k + 1..=t {
        let mut sum = Rational::zero();
        for r in 0..rbar {
            let mut prod = Rational::one();
            for &dj in &d[..tt] {
                prod *= &z[(r, dj)];
            }
            sum += prod;
        }
        lhs *= sum;
    }
    let mut rhs = Rational::zero();
    let mut skipped = !drop_first;
    for (p, trajectories) in table {
        for tr in trajectories {
            if !skipped {
                skipped = true;
                continue;
            }
            let chain: Vec<&StateVector> = full_chain(p, tr).collect();
            let mut term = Rational::one();
            for r in 0..rbar {
                for &dj in &d[..k] {
                    term *= pow(&z[(r, dj)], p.counts[r] as usize);
                }
                for (j, &dj) in d.iter().enumerate().skip(k) {
                    // 1-based position j+1 uses p^(T − j), i.e. chain[K − (T − j)].
                    let state = chain[k - (t - j)];
                    term *= pow(&z[(r, dj)], state.counts[r] as usize);
                }
            }
            rhs += term;
        }
    }
    (lhs, rhs)
}

fn decomp_table(rbar: usize, k: u32) -> Result<Vec<(StateVector, Vec<Trajectory>)>> {
    enumerate_states(rbar, k)?
        .into_iter()
        .map(|p| {
            let tr = enumerate_trajectories(&p)?;
            Ok((p, tr))
        })
        .collect()
}

fn check_decomp_args(z: &Matrix<Rational>, t: usize) -> Result<()> {
    if t == 0 || t % 2 != 0 {
        return arg_err(format!("T must be positive and even, got {t}"));
    }
    crate::tensor::check_size(crate::tensor::checked_count(z.cols(), t))
}

/// Exhaustively checks `Π_{t>T/2} Σ_r Π_{j≤t} Z[r,d_j]` against the sum over
/// states and trajectories at every multi-index.
pub fn verify_decomp_identity(z: &Matrix<Rational>, t: usize) -> Result<bool> {
    decomp_identity_impl(z, t, false)
}

/// [`verify_decomp_identity`] with one trajectory term removed from the
/// right side; must report `false` for any `Z` with nonzero entries.
pub fn verify_decomp_identity_mutated(z: &Matrix<Rational>, t: usize) -> Result<bool> {
    decomp_identity_impl(z, t, true)
}

fn decomp_identity_impl(z: &Matrix<Rational>, t: usize, drop_first: bool) -> Result<bool> {
    check_decomp_args(z, t)?;
    let table = decomp_table(z.rows(), (t / 2) as u32)?;
    let m = z.cols();
    let mut d = vec![0usize; t];
    loop {
        let (lhs, rhs) = decomp_sides(z, &d, &table, drop_first);
        if lhs != rhs {
            return Ok(false);
        }
        let mut k = t;
        loop {
            if k == 0 {
                return Ok(true);
            }
            k -= 1;
            d[k] += 1;
            if d[k] < m {
                break;
            }
            d[k] = 0;
        }
    }
}

/// Strict rearrangement inequality `Σ ⟨v_i, v_σ(i)⟩ < Σ ‖v_i‖²` for a
/// non-identity permutation of pairwise distinct non-negative vectors.
pub fn rearrangement_check(vectors: &[Vec<u64>], sigma: &[usize]) -> Result<bool> {
    let n = vectors.len();
    let mut seen = vec![false; n];
    if sigma.len() != n || sigma.iter().any(|&s| s >= n || std::mem::replace(&mut seen[s], true)) {
        return arg_err("σ is not a permutation of the vector indices");
    }
    if sigma.iter().enumerate().all(|(i, &s)| i == s) {
        return arg_err("the inequality makes no claim for the identity permutation");
    }
    for i in 0..n {
        for j in i + 1..n {
            if vectors[i] == vectors[j] {
                return arg_err(format!("vectors {i} and {j} are equal"));
            }
        }
    }
    let dot = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(&x, &y)| x as u128 * y as u128).sum::<u128>();
    let lhs: u128 = (0..n).map(|i| dot(&vectors[i], &vectors[sigma[i]])).sum();
    let rhs: u128 = vectors.iter().map(|v| dot(v, v)).sum();
    Ok(lhs < rhs)
}

fn omega_pow(omega: u64, color: usize) -> BigUint {
    num_traits::pow(BigUint::from(omega), color)
}

fn check_bucket_args(d: &[usize], p: &StateVector) -> Result<()> {
    if p.k() as usize != d.len() {
        return arg_err(format!("state sums to {} for a sequence of length {}", p.k(), d.len()));
    }
    if let Some(&c) = d.iter().find(|&&c| c == 0 || c > p.colors()) {
        return arg_err(format!("color {c} outside 1..={}", p.colors()));
    }
    Ok(())
}

/// Maximum over trajectories from `p` of `Σ_j Ω^{d_j} · p^(K−j+1)[d_j]`,
/// colors 1-based; exhaustive search.
pub fn bucket_reward_optimal(d: &[usize], p: &StateVector, omega: u64) -> Result<BigUint> {
    check_bucket_args(d, p)?;
    let k = d.len();
    let mut best = BigUint::zero();
    for tr in enumerate_trajectories(p)? {
        let chain: Vec<&StateVector> = full_chain(p, &tr).collect();
        let reward = (0..k).fold(BigUint::zero(), |acc, j| {
            let c = d[j];
            acc + omega_pow(omega, c) * BigUint::from(chain[j].counts[c - 1])
        });
        best = best.max(reward);
    }
    Ok(best)
}

/// Same maximum as [`bucket_reward_optimal`], by memoized dynamic programming over states.
pub fn bucket_reward_dp(d: &[usize], p: &StateVector, omega: u64) -> Result<BigUint> {
    check_bucket_args(d, p)?;
    fn go(j: usize, q: &StateVector, d: &[usize], omega: u64, memo: &mut HashMap<StateVector, BigUint>) -> BigUint {
        if j == d.len() {
            return BigUint::zero();
        }
        if let Some(v) = memo.get(q) {
            return v.clone();
        }
        let here = omega_pow(omega, d[j]) * BigUint::from(q.counts[d[j] - 1]);
        let rest = if j + 1 == d.len() {
            BigUint::zero()
        } else {
            (0..q.colors())
                .filter(|&r| q.counts[r] > 0)
                .map(|r| {
                    let mut next = q.clone();
                    next.counts[r] -= 1;
                    go(j + 1, &next, d, omega, memo)
                })
                .max()
                .unwrap_or_default()
        };
        let v = here + rest;
        memo.insert(q.clone(), v.clone());
        v
    }
    Ok(go(0, p, d, omega, &mut HashMap::new()))
}

/// `ρ* = Σ_r Ω^r · p̂_r (p̂_r + 1) / 2`, colors 1-based.
pub fn rho_star(p_hat: &StateVector, omega: u64) -> BigUint {
    p_hat.counts.iter().enumerate().fold(BigUint::zero(), |acc, (r, &c)| {
        acc + omega_pow(omega, r + 1) * BigUint::from(c as u64 * (c as u64 + 1) / 2)
    })
}

/// True iff over all states of `R̄` colors, the optimal reward for the sorted
/// sequence `d` is attained only at its color counts.
pub fn verify_unique_argmax(d: &[usize], omega: u64, rbar: usize) -> Result<bool> {
    let k = d.len() as u64;
    if omega <= k * k {
        return arg_err(format!("Ω = {omega} must exceed (T/2)^2 = {}", k * k));
    }
    if d.windows(2).any(|w| w[0] > w[1]) {
        return arg_err("color sequence must be sorted");
    }
    let p_hat = StateVector::from_colors(d, rbar)?;
    let target = bucket_reward_optimal(d, &p_hat, omega)?;
    for p in enumerate_states(rbar, d.len() as u32)? {
        if p != p_hat && bucket_reward_optimal(d, &p, omega)? >= target {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All non-decreasing sequences of length `k` over colors `1..=rbar`.
pub fn sorted_color_sequences(rbar: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(lo: usize, rbar: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in lo..=rbar {
            cur.push(c);
            rec(c, rbar, k, cur, out);
            cur.pop();
        }
    }
    rec(1, rbar, k, &mut cur, &mut out);
    out
}

/// Number of terms of the nested sum `Σ_{t_L=T/2+1}^{T} Σ_{t_{L−1}=T/2+1}^{t_L} ... Σ_{t_2=T/2+1}^{t_3}`,
/// counted by direct iteration; 1 for `L = 1`.
pub fn repetition_nested_count(t: usize, l: usize) -> Result<BigUint> {
    if t == 0 || t % 2 != 0 || l == 0 {
        return arg_err(format!("need even T >= 2 and L >= 1, got T = {t}, L = {l}"));
    }
    let lo = t / 2 + 1;
    // ways[v] = number of chains t_2 <= ... <= t_i with t_i = v.
    let mut ways: Vec<BigUint> = (0..=t).map(|v| if v >= lo { BigUint::one() } else { BigUint::zero() }).collect();
    if l == 1 {
        return Ok(BigUint::one());
    }
    for _ in 3..=l {
        let mut next = vec![BigUint::zero(); t + 1];
        let mut run = BigUint::zero();
        for v in lo..=t {
            run += &ways[v];
            next[v] = run.clone();
        }
        ways = next;
    }
    Ok(ways[lo..=t].iter().sum())
}

/// Repetition count `((T/2 multichoose L−1))`, cross-checked against the nested sum.
pub fn repetition_count(t: usize, l: usize) -> Result<BigUint> {
    let nested = repetition_nested_count(t, l)?;
    let closed = multiset_coeff((t / 2) as u64, (l - 1) as u64)?;
    if nested != closed {
        return Err(Error::InvalidArgument(format!("nested count {nested} != closed form {closed} at T = {t}, L = {l}")));
    }
    Ok(closed)
}
