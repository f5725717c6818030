//! Synthetic long-memory tasks (copying memory, Start-End similarity) and
//! the permuted pixel-by-pixel MNIST pipeline.

pub mod mnist;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{arg_err, shape_err, Result};

pub use mnist::{
    invert_permutation, load_mnist_idx, permute_pixels, pixel_permutation, split_indices, validation_split, MnistData,
    SequenceDataset, IMAGE_MAGIC, LABEL_MAGIC, PIXELS,
};

/// Token ids: data symbols `1..=n`, blank `n+1`, trigger `n+2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n: u32,
}

impl Vocabulary {
    pub fn blank(&self) -> u32 {
        self.n + 1
    }
    pub fn trigger(&self) -> u32 {
        self.n + 2
    }
    /// Number of distinct token ids including blank and trigger.
    pub fn size(&self) -> usize {
        self.n as usize + 2
    }
    pub fn is_data(&self, tok: u32) -> bool {
        (1..=self.n).contains(&tok)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyConfig {
    pub m: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub n: u32,
}

impl CopyConfig {
    pub fn new(m: usize, b: usize, n: u32) -> Result<Self> {
        let cfg = Self { m, b, n };
        cfg.validate()?;
        Ok(cfg)
    }
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.n < 2 {
            return arg_err(format!("copy task needs m >= 1 and n >= 2, got m = {}, n = {}", self.m, self.n));
        }
        Ok(())
    }
    pub fn seq_len(&self) -> usize {
        self.b + 2 * self.m
    }
    pub fn vocab(&self) -> Vocabulary {
        Vocabulary { n: self.n }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub m: usize,
    pub n: u32,
}

impl SimConfig {
    pub fn new(t: usize, m: usize, n: u32) -> Result<Self> {
        let cfg = Self { t, m, n };
        cfg.validate()?;
        Ok(cfg)
    }
    pub fn validate(&self) -> Result<()> {
        if self.t % 2 != 0 || self.m == 0 || self.m % 2 != 0 || self.m >= self.t / 2 || self.n < 2 {
            return arg_err(format!(
                "similarity task needs even T, even m >= 2 with m < T/2, n >= 2; got T = {}, m = {}, n = {}",
                self.t, self.m, self.n
            ));
        }
        Ok(())
    }
    pub fn vocab(&self) -> Vocabulary {
        Vocabulary { n: self.n }
    }
}

/// Similarity class of the two aligned substrings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimClass {
    Zero,
    Half,
    One,
}

impl SimClass {
    pub const ALL: [SimClass; 3] = [SimClass::Zero, SimClass::Half, SimClass::One];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Per-step target tokens.
    Sequence(Vec<u32>),
    /// Final-step class.
    Class(SimClass),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub input: Vec<u32>,
    pub target: Target,
}

impl TaskSample {
    /// `{input, target}` for sequence targets, `{input, class}` for classes.
    pub fn to_json_line(&self) -> Value {
        match &self.target {
            Target::Sequence(t) => json!({ "input": self.input, "target": t }),
            Target::Class(c) => json!({ "input": self.input, "class": c.index() }),
        }
    }
}

/// `m` data symbols, `B` blanks, the trigger, `m − 1` blanks; the target is
/// blank except for the final `m` steps, which replay the data.
pub fn gen_copy<G: Rng + ?Sized>(cfg: &CopyConfig, rng: &mut G) -> TaskSample {
    let v = cfg.vocab();
    let data: Vec<u32> = (0..cfg.m).map(|_| rng.gen_range(1..=cfg.n)).collect();
    let mut input = data.clone();
    input.extend(std::iter::repeat(v.blank()).take(cfg.b));
    input.push(v.trigger());
    input.extend(std::iter::repeat(v.blank()).take(cfg.m - 1));
    let mut target = vec![v.blank(); cfg.b + cfg.m];
    target.extend(data);
    TaskSample { input, target: Target::Sequence(target) }
}

/// Mean per-character match over the final `m` steps.
pub fn data_accuracy(preds: &[Vec<u32>], targets: &[Vec<u32>], cfg: &CopyConfig) -> Result<f64> {
    let t = cfg.seq_len();
    if preds.len() != targets.len() || preds.is_empty() {
        return shape_err(format!("{} predictions for {} targets", preds.len(), targets.len()));
    }
    if preds.iter().chain(targets).any(|s| s.len() != t) {
        return shape_err(format!("every sequence must have length T = {t}"));
    }
    let hits: usize = preds
        .iter()
        .zip(targets)
        .map(|(p, q)| p[t - cfg.m..].iter().zip(&q[t - cfg.m..]).filter(|(a, b)| a == b).count())
        .sum();
    Ok(hits as f64 / (cfg.m * preds.len()) as f64)
}

fn other_symbol<G: Rng + ?Sized>(n: u32, avoid: u32, rng: &mut G) -> u32 {
    let v = rng.gen_range(1..n);
    if v >= avoid {
        v + 1
    } else {
        v
    }
}

/// Blank sequence with `s1` at a uniform start in the first half and `s2`
/// exactly `T/2` later; the class sets how many aligned symbols agree.
pub fn gen_sim<G: Rng + ?Sized>(cfg: &SimConfig, rng: &mut G) -> TaskSample {
    let v = cfg.vocab();
    let half = cfg.t / 2;
    let class = SimClass::ALL[rng.gen_range(0..3)];
    let start = rng.gen_range(0..half - cfg.m);
    let s1: Vec<u32> = (0..cfg.m).map(|_| rng.gen_range(1..=cfg.n)).collect();
    let mut matching = vec![false; cfg.m];
    match class {
        SimClass::One => matching.fill(true),
        SimClass::Half => sample(rng, cfg.m, cfg.m / 2).into_iter().for_each(|i| matching[i] = true),
        SimClass::Zero => {}
    }
    let s2: Vec<u32> = s1.iter().zip(&matching).map(|(&a, &keep)| if keep { a } else { other_symbol(cfg.n, a, rng) }).collect();
    let mut input = vec![v.blank(); cfg.t];
    input[start..start + cfg.m].copy_from_slice(&s1);
    input[start + half..start + half + cfg.m].copy_from_slice(&s2);
    TaskSample { input, target: Target::Class(class) }
}

/// Number of aligned data-symbol pairs `(t, t + T/2)` that agree.
pub fn aligned_matches(input: &[u32], vocab: &Vocabulary) -> usize {
    let half = input.len() / 2;
    (0..half).filter(|&i| vocab.is_data(input[i]) && input[i] == input[i + half]).count()
}

/// Class implied by the aligned match count, if it is one of `0`, `m/2`, `m`.
pub fn classify_sim(input: &[u32], cfg: &SimConfig) -> Option<SimClass> {
    match aligned_matches(input, &cfg.vocab()) {
        0 => Some(SimClass::Zero),
        k if k == cfg.m => Some(SimClass::One),
        k if 2 * k == cfg.m => Some(SimClass::Half),
        _ => None,
    }
}

/// `m · log2(n)`.
pub fn bits_memorized(m: usize, n: u32) -> f64 {
    m as f64 * (n as f64).log2()
}
