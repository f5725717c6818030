//! Configurable drivers for every verification check, each producing
//! report rows in the common rank-report layout.

use std::fmt;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    hadamard_bound_trial, rearrangement_check, repetition_count, repetition_nested_count, sorted_color_sequences,
    verify_decomp_identity, verify_min_cut, verify_theorem_deep, verify_theorem_shallow, verify_unique_argmax,
    SepRankReport, Verdict,
};
use crate::error::{Error, Result};
use crate::rac::default_omega;
use crate::scalar::{parse_rational, Rational, ScalarKind};
use crate::tensor::{check_size, checked_count, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    TheoremShallow,
    TheoremDeep,
    Decomp,
    Rearrange,
    Bucket,
    Repetition,
    MinCut,
    HadamardBound,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::TheoremShallow,
        Check::TheoremDeep,
        Check::Decomp,
        Check::Rearrange,
        Check::Bucket,
        Check::Repetition,
        Check::MinCut,
        Check::HadamardBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::TheoremShallow => "theorem-shallow",
            Check::TheoremDeep => "theorem-deep",
            Check::Decomp => "decomp",
            Check::Rearrange => "rearrange",
            Check::Bucket => "bucket",
            Check::Repetition => "repetition",
            Check::MinCut => "min-cut",
            Check::HadamardBound => "hadamard-bound",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Check::TheoremShallow => "exact Start-End rank of random rational single-layer RACs equals min(R, M^(T/2))",
            Check::TheoremDeep => "explicit two-layer assignment reaches ((min(M,R) multichoose T/2))",
            Check::Decomp => "state/trajectory decomposition identity for random integer Z",
            Check::Rearrange => "strict rearrangement inequality over all non-identity permutations",
            Check::Bucket => "unique reward argmax at the color counts of every sorted sequence",
            Check::Repetition => "nested-sum repetition count equals ((T/2 multichoose L-1))",
            Check::MinCut => "random float MPS rank equals min(R, M^(T/2))",
            Check::HadamardBound => "rank of a Hadamard power of a rank-R matrix is at most ((R multichoose p))",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShallowGrid {
    pub m: Vec<usize>,
    pub r: Vec<usize>,
    pub t: Vec<usize>,
    pub trials: usize,
}

impl Default for ShallowGrid {
    fn default() -> Self {
        Self { m: vec![2, 3], r: vec![1, 2, 3, 4, 5], t: vec![2, 4, 6], trials: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepCells {
    /// `(M, R, T)` triples.
    pub cells: Vec<(usize, usize, usize)>,
    /// Rational `z` as `"p/q"` or an integer string.
    pub z: String,
    /// Defaults to `(T/2)^2 + 1` per cell.
    pub omega: Option<u64>,
    pub float_trials: usize,
}

impl Default for DeepCells {
    fn default() -> Self {
        Self { cells: vec![(2, 2, 4), (3, 3, 4), (2, 2, 6)], z: "2".into(), omega: None, float_trials: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompCfg {
    pub samples: usize,
    pub max_colors: usize,
    pub max_m: usize,
    pub t: Vec<usize>,
    /// Entries drawn from `[-entry_bound, entry_bound]`.
    pub entry_bound: i64,
}

impl Default for DecompCfg {
    fn default() -> Self {
        Self { samples: 20, max_colors: 3, max_m: 3, t: vec![4, 6], entry_bound: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RearrangeCfg {
    pub sets: usize,
    pub vectors: usize,
    pub dim: usize,
    pub entry_max: u64,
}

impl Default for RearrangeCfg {
    fn default() -> Self {
        Self { sets: 50, vectors: 4, dim: 3, entry_max: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BucketCfg {
    pub colors: Vec<usize>,
    pub half_t: Vec<usize>,
}

impl Default for BucketCfg {
    fn default() -> Self {
        Self { colors: vec![2, 3], half_t: vec![2, 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepetitionCfg {
    pub t: Vec<usize>,
    pub l: Vec<usize>,
}

impl Default for RepetitionCfg {
    fn default() -> Self {
        Self { t: vec![2, 4, 6, 8], l: vec![1, 2, 3, 4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HadamardCfg {
    pub samples: usize,
    pub max_r: usize,
    pub max_dim: usize,
    pub max_p: u32,
}

impl Default for HadamardCfg {
    fn default() -> Self {
        Self { samples: 200, max_r: 3, max_dim: 8, max_p: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub theorem_shallow: ShallowGrid,
    pub theorem_deep: DeepCells,
    pub decomp: DecompCfg,
    pub rearrange: RearrangeCfg,
    pub bucket: BucketCfg,
    pub repetition: RepetitionCfg,
    pub min_cut: ShallowGrid,
    pub hadamard_bound: HadamardCfg,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            theorem_shallow: ShallowGrid::default(),
            theorem_deep: DeepCells::default(),
            decomp: DecompCfg::default(),
            rearrange: RearrangeCfg::default(),
            bucket: BucketCfg::default(),
            repetition: RepetitionCfg::default(),
            min_cut: ShallowGrid { r: vec![1, 2, 4, 100], ..ShallowGrid::default() },
            hadamard_bound: HadamardCfg::default(),
        }
    }
}

/// One CSV row: the check name followed by the rank-report columns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: Check,
    #[serde(flatten)]
    pub report: SepRankReport,
}

impl CheckRow {
    pub const CSV_HEADER: &'static str = "check,M,R,T,L,measured,expected,verdict,trials,failures";

    pub fn csv_row(&self) -> String {
        format!("{},{}", self.check, self.report.csv_row())
    }
}

/// Failure of a single cell, naming the check and the cell.
#[derive(Debug)]
pub struct CellError {
    pub check: Check,
    pub cell: String,
    pub source: Error,
}

impl fmt::Display for CellError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cell {}: {}", self.check, self.cell, self.source)
    }
}

impl std::error::Error for CellError {}

fn count_row(m: usize, r: usize, t: usize, l: usize, trials: usize, failures: usize, kind: ScalarKind) -> SepRankReport {
    SepRankReport {
        m,
        r,
        t,
        l,
        measured_rank: trials - failures,
        expected: BigUint::from(trials),
        verdict: if failures == 0 { Verdict::Equal } else { Verdict::Violation },
        arithmetic: kind,
        trials,
        failures,
        float_pass_rate: None,
    }
}

fn in_cell<T>(check: Check, cell: String, r: Result<T>) -> std::result::Result<T, CellError> {
    r.map_err(|source| CellError { check, cell, source })
}

/// Runs one check with an RNG derived from `seed` and the check.
pub fn run_check(check: Check, cfg: &SuiteConfig, seed: u64) -> std::result::Result<Vec<CheckRow>, CellError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((check as u64 + 1) << 32));
    let rows = match check {
        Check::TheoremShallow => shallow_rows(check, &cfg.theorem_shallow, &mut rng, |m, r, t, n, g| verify_theorem_shallow(m, r, t, n, g))?,
        Check::MinCut => shallow_rows(check, &cfg.min_cut, &mut rng, |m, r, t, n, g| verify_min_cut(r, m, t, n, g))?,
        Check::TheoremDeep => {
            let c = &cfg.theorem_deep;
            let z = in_cell(check, format!("z = {}", c.z), parse_rational(&c.z).ok_or_else(|| Error::InvalidArgument(format!("z = {:?} is not a rational", c.z))))?;
            let mut rows = Vec::new();
            for &(m, r, t) in &c.cells {
                let omega = c.omega.unwrap_or_else(|| default_omega(t));
                let cell = format!("M={m} R={r} T={t}");
                rows.push(in_cell(check, cell, verify_theorem_deep(m, r, t, &z, omega, c.float_trials, &mut rng))?);
            }
            rows
        }
        Check::Decomp => {
            let c = &cfg.decomp;
            let mut rows = Vec::new();
            for &t in &c.t {
                let mut failures = 0;
                for _ in 0..c.samples {
                    let rows_z = rng.gen_range(1..=c.max_colors.max(1));
                    let m = rng.gen_range(1..=c.max_m.max(1));
                    let z = Matrix::from_fn(rows_z, m, |_, _| Rational::from_integer(rng.gen_range(-c.entry_bound..=c.entry_bound).into()));
                    let cell = format!("R={rows_z} M={m} T={t}");
                    if !in_cell(check, cell, verify_decomp_identity(&z, t))? {
                        failures += 1;
                    }
                }
                rows.push(count_row(c.max_m, c.max_colors, t, 2, c.samples, failures, ScalarKind::ExactRational));
            }
            rows
        }
        Check::Rearrange => {
            let c = &cfg.rearrange;
            let cell = format!("vectors={} dim={}", c.vectors, c.dim);
            let distinct_possible = checked_count(c.entry_max as usize + 1, c.dim) >= c.vectors as u128;
            if c.vectors < 2 || c.dim == 0 || !distinct_possible {
                return Err(CellError { check, cell, source: Error::InvalidArgument("need at least two distinct vectors".into()) });
            }
            let perms = permutations(c.vectors);
            let (mut trials, mut failures) = (0, 0);
            for _ in 0..c.sets {
                let mut vs: Vec<Vec<u64>> = Vec::new();
                while vs.len() < c.vectors {
                    let v: Vec<u64> = (0..c.dim).map(|_| rng.gen_range(0..=c.entry_max)).collect();
                    if !vs.contains(&v) {
                        vs.push(v);
                    }
                }
                for sigma in perms.iter().filter(|s| s.iter().enumerate().any(|(i, &x)| i != x)) {
                    trials += 1;
                    if !in_cell(check, cell.clone(), rearrangement_check(&vs, sigma))? {
                        failures += 1;
                    }
                }
            }
            vec![count_row(c.dim, c.vectors, 0, 0, trials, failures, ScalarKind::ExactRational)]
        }
        Check::Bucket => {
            let c = &cfg.bucket;
            let mut rows = Vec::new();
            for &rbar in &c.colors {
                for &k in &c.half_t {
                    let omega = default_omega(2 * k);
                    let seqs = sorted_color_sequences(rbar, k);
                    let mut failures = 0;
                    for d in &seqs {
                        let cell = format!("R={rbar} T/2={k} d={d:?}");
                        if !in_cell(check, cell, verify_unique_argmax(d, omega, rbar))? {
                            failures += 1;
                        }
                    }
                    rows.push(count_row(rbar, rbar, 2 * k, 2, seqs.len(), failures, ScalarKind::ExactRational));
                }
            }
            rows
        }
        Check::Repetition => {
            let c = &cfg.repetition;
            let mut rows = Vec::new();
            for &t in &c.t {
                for &l in &c.l {
                    let cell = format!("T={t} L={l}");
                    let nested = in_cell(check, cell.clone(), repetition_nested_count(t, l))?;
                    let closed = repetition_count(t, l);
                    let ok = closed.as_ref().is_ok_and(|c| *c == nested);
                    rows.push(SepRankReport {
                        m: 0,
                        r: 0,
                        t,
                        l,
                        measured_rank: usize::try_from(&nested).unwrap_or(usize::MAX),
                        expected: closed.unwrap_or(nested),
                        verdict: if ok { Verdict::Equal } else { Verdict::Violation },
                        arithmetic: ScalarKind::ExactRational,
                        trials: 1,
                        failures: usize::from(!ok),
                        float_pass_rate: None,
                    });
                }
            }
            rows
        }
        Check::HadamardBound => {
            let c = &cfg.hadamard_bound;
            if c.max_r == 0 || c.max_dim == 0 || c.max_p == 0 {
                return Err(CellError { check, cell: "config".into(), source: Error::InvalidArgument("max_r, max_dim and max_p must be positive".into()) });
            }
            let mut failures = 0;
            for _ in 0..c.samples {
                let r = rng.gen_range(1..=c.max_r);
                let rows_a = rng.gen_range(r.min(c.max_dim)..=c.max_dim);
                let cols_a = rng.gen_range(r.min(c.max_dim)..=c.max_dim);
                let p = rng.gen_range(1..=c.max_p);
                let cell = format!("{rows_a}x{cols_a} R={r} p={p}");
                let (measured, bound) = in_cell(check, cell, hadamard_bound_trial(rows_a, cols_a, r, p, &mut rng))?;
                if BigUint::from(measured) > bound {
                    failures += 1;
                }
            }
            vec![count_row(c.max_dim, c.max_r, 0, c.max_p as usize, c.samples, failures, ScalarKind::Float64)]
        }
    };
    Ok(rows.into_iter().map(|report| CheckRow { check, report }).collect())
}

fn shallow_rows(
    check: Check,
    grid: &ShallowGrid,
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(usize, usize, usize, usize, &mut ChaCha8Rng) -> Result<SepRankReport>,
) -> std::result::Result<Vec<SepRankReport>, CellError> {
    let mut rows = Vec::new();
    for &m in &grid.m {
        for &r in &grid.r {
            for &t in &grid.t {
                let cell = format!("M={m} R={r} T={t}");
                in_cell(check, cell.clone(), check_size(checked_count(m, t)))?;
                rows.push(in_cell(check, cell, f(m, r, t, grid.trials, rng))?);
            }
        }
    }
    Ok(rows)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Runs the selected checks in order and concatenates their rows.
pub fn run_suite(checks: &[Check], cfg: &SuiteConfig, seed: u64) -> std::result::Result<Vec<CheckRow>, CellError> {
    let mut rows = Vec::new();
    for &c in checks {
        rows.extend(run_check(c, cfg, seed)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig {
            theorem_shallow: ShallowGrid { m: vec![2], r: vec![1, 3], t: vec![2, 4], trials: 3 },
            theorem_deep: DeepCells { cells: vec![(2, 2, 4)], ..DeepCells::default() },
            decomp: DecompCfg { samples: 2, t: vec![4], ..DecompCfg::default() },
            rearrange: RearrangeCfg { sets: 3, ..RearrangeCfg::default() },
            bucket: BucketCfg { colors: vec![2], half_t: vec![2] },
            repetition: RepetitionCfg::default(),
            min_cut: ShallowGrid { m: vec![2], r: vec![1, 4], t: vec![4], trials: 3 },
            hadamard_bound: HadamardCfg { samples: 10, ..HadamardCfg::default() },
        }
    }

    #[test]
    fn small_suite_has_no_violations() {
        let rows = run_suite(&Check::ALL, &small(), 1).unwrap();
        assert!(rows.iter().all(|r| !r.report.is_violation()), "{:?}", rows.iter().filter(|r| r.report.is_violation()).collect::<Vec<_>>());
        assert_eq!(rows.iter().filter(|r| r.check == Check::Repetition).count(), 16);
        assert_eq!(rows[0].csv_row().split(',').count(), CheckRow::CSV_HEADER.split(',').count());
    }

    #[test]
    fn cap_names_the_cell() {
        let cfg = SuiteConfig { theorem_shallow: ShallowGrid { m: vec![3], r: vec![2], t: vec![16], trials: 1 }, ..small() };
        let err = run_check(Check::TheoremShallow, &cfg, 0).unwrap_err();
        assert!(matches!(err.source, Error::SizeCap { .. }));
        assert_eq!(err.cell, "M=3 R=2 T=16");
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<SuiteConfig>(r#"{"decomp": {"samples": 1, "extra": 2}}"#).is_err());
        let c: SuiteConfig = serde_json::from_str(r#"{"decomp": {"samples": 1}}"#).unwrap();
        assert_eq!(c.decomp.t, vec![4, 6]);
    }
}
