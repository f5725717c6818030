//! Backpropagation through time, RMSprop, early stopping and experiment
//! runners for the copy, similarity and permuted-MNIST tasks.

mod backprop;
mod model;
mod optim;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{arg_err, Error, Result};
use crate::tasks::{gen_copy, gen_sim, CopyConfig, SequenceDataset, SimConfig};

pub use backprop::{backprop, evaluate, evaluate_all, model_backprop, Batch, Evaluation, Gradients, LayerGrads, LossKind, Targets};
pub use model::{Architecture, CellKind, Layer, Model};
pub use optim::{rmsprop_step, EarlyStopper, RmsPropState, StopDecision};

/// Samples evaluated per forward pass during validation and testing.
pub const EVAL_CHUNK: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub lrs: Vec<f64>,
    pub patience: usize,
    /// Iterations between validation checks.
    pub cadence: usize,
    pub seed: u64,
    pub val_size: usize,
    pub test_size: usize,
    pub threshold: f64,
    /// End a run as soon as the validation metric clears `threshold`.
    pub stop_on_success: bool,
    /// Global gradient-norm clipping; off when `None`.
    pub clip_norm: Option<f64>,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_iters: 20_000,
            lrs: vec![1e-3, 3e-4, 1e-4],
            patience: 10,
            cadence: 500,
            seed: 0,
            val_size: 1000,
            test_size: 10_000,
            threshold: 0.99,
            stop_on_success: true,
            clip_norm: None,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.cadence == 0 || self.log_every == 0 || self.patience == 0 {
            return arg_err("batch_size, cadence, log_every and patience must be positive");
        }
        if self.lrs.is_empty() || self.lrs.iter().any(|&lr| !(1e-5..=1e-3).contains(&lr)) {
            return arg_err(format!("learning rates must be a non-empty subset of [1e-5, 1e-3], got {:?}", self.lrs));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return arg_err(format!("threshold must lie in (0, 1], got {}", self.threshold));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return arg_err("clip_norm must be positive");
        }
        if self.val_size == 0 || self.test_size == 0 {
            return arg_err("val_size and test_size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValPoint {
    pub iter: usize,
    pub loss: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: Value,
    pub lr: f64,
    pub iterations: usize,
    /// Held-out data-accuracy (copy) or classification accuracy.
    pub metric: f64,
    pub success: bool,
    pub diverged: bool,
    pub error: Option<String>,
    pub loss_curve: Vec<CurvePoint>,
    pub val_curve: Vec<ValPoint>,
    pub max_deviation: Option<f64>,
    pub seconds: f64,
}

/// Supplier of training batches.
pub trait BatchSource {
    fn input_dim(&self) -> usize;
    fn classes(&self) -> usize;
    fn next_batch(&mut self, rng: &mut ChaCha8Rng, size: usize) -> Result<Batch>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTask {
    Copy(CopyConfig),
    Similarity(SimConfig),
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        match self {
            SyntheticTask::Copy(c) => c.validate(),
            SyntheticTask::Similarity(c) => c.validate(),
        }
    }

    pub fn batch(&self, rng: &mut ChaCha8Rng, size: usize) -> Result<Batch> {
        match self {
            SyntheticTask::Copy(c) => Batch::from_copy(&(0..size).map(|_| gen_copy(c, rng)).collect::<Vec<_>>(), c),
            SyntheticTask::Similarity(c) => Batch::from_sim(&(0..size).map(|_| gen_sim(c, rng)).collect::<Vec<_>>(), c),
        }
    }

    /// Fixed evaluation set of `count` samples in chunks of [`EVAL_CHUNK`].
    pub fn fixed_set(&self, seed: u64, count: usize) -> Result<Vec<Batch>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).step_by(EVAL_CHUNK).map(|s| self.batch(&mut rng, EVAL_CHUNK.min(count - s))).collect()
    }
}

impl BatchSource for SyntheticTask {
    fn input_dim(&self) -> usize {
        match self {
            SyntheticTask::Copy(c) => c.vocab().size(),
            SyntheticTask::Similarity(c) => c.n as usize + 1,
        }
    }
    fn classes(&self) -> usize {
        match self {
            SyntheticTask::Copy(c) => c.vocab().size(),
            SyntheticTask::Similarity(_) => 3,
        }
    }
    fn next_batch(&mut self, rng: &mut ChaCha8Rng, size: usize) -> Result<Batch> {
        self.batch(rng, size)
    }
}

/// Epoch-shuffled minibatches over a fixed dataset.
pub struct DatasetSource<'a> {
    data: &'a SequenceDataset,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> DatasetSource<'a> {
    pub fn new(data: &'a SequenceDataset) -> Result<Self> {
        if data.is_empty() {
            return arg_err("empty training set");
        }
        Ok(Self { data, order: (0..data.len()).collect(), cursor: data.len() })
    }
}

impl BatchSource for DatasetSource<'_> {
    fn input_dim(&self) -> usize {
        1
    }
    fn classes(&self) -> usize {
        10
    }
    fn next_batch(&mut self, rng: &mut ChaCha8Rng, size: usize) -> Result<Batch> {
        let mut idx = Vec::with_capacity(size);
        while idx.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let take = (size - idx.len()).min(self.order.len() - self.cursor);
            idx.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        Ok(Batch::from_sequences(self.data, &idx))
    }
}

/// Evaluation chunks over a whole dataset.
pub fn dataset_batches(data: &SequenceDataset) -> Vec<Batch> {
    let idx: Vec<usize> = (0..data.len()).collect();
    idx.chunks(EVAL_CHUNK).map(|c| Batch::from_sequences(data, c)).collect()
}

/// One training run at a fixed learning rate. Fresh batches come from
/// `source`; validation runs every `cadence` iterations and drives both the
/// success stop and patience-based early stopping. The test metric is taken
/// on the best validation snapshot. Non-finite values end the run with
/// `diverged` set.
pub fn train_loop(mut model: Model, source: &mut dyn BatchSource, val: &[Batch], test: &[Batch], cfg: &TrainConfig, lr: f64) -> Result<(Model, ExperimentResult)> {
    if cfg.batch_size == 0 || cfg.cadence == 0 || cfg.log_every == 0 {
        return arg_err("batch_size, cadence and log_every must be positive");
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut opt = RmsPropState::new(lr)?;
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best = model.clone();
    let mut result = ExperimentResult {
        config: Value::Null,
        lr,
        iterations: 0,
        metric: 0.0,
        success: false,
        diverged: false,
        error: None,
        loss_curve: Vec::new(),
        val_curve: Vec::new(),
        max_deviation: model.max_orthogonality_deviation(),
        seconds: 0.0,
    };
    let mut window = (0.0, 0usize);
    for it in 1..=cfg.max_iters {
        let batch = source.next_batch(&mut rng, cfg.batch_size)?;
        let mut grads = match model_backprop(&model, &batch) {
            Ok(g) => g,
            Err(Error::NonFinite(e)) => {
                result.diverged = true;
                result.error = Some(format!("non-finite value{e} at iteration {it}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(c) = cfg.clip_norm {
            let norm = grads.global_norm();
            if norm > c {
                grads.scale(c / norm);
            }
        }
        opt.step(model.param_slices_mut(), grads.slices())?;
        model.refresh_orthogonal();
        result.iterations = it;
        window = (window.0 + grads.loss, window.1 + 1);
        if it % cfg.log_every == 0 || it == cfg.max_iters {
            result.loss_curve.push(CurvePoint { iter: it, loss: window.0 / window.1 as f64 });
            window = (0.0, 0);
            if let Some(d) = model.max_orthogonality_deviation() {
                result.max_deviation = Some(result.max_deviation.map_or(d, |m| m.max(d)));
            }
        }
        if it % cfg.cadence == 0 || it == cfg.max_iters {
            let ev = match evaluate_all(&model, val) {
                Ok(ev) => ev,
                Err(Error::NonFinite(e)) => {
                    result.diverged = true;
                    result.error = Some(format!("non-finite value{e} at iteration {it}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            result.val_curve.push(ValPoint { iter: it, loss: ev.loss, metric: ev.metric() });
            if cfg.stop_on_success && ev.metric() > cfg.threshold {
                best = model.clone();
                break;
            }
            match stopper.observe(ev.loss) {
                StopDecision::Improved => best = model.clone(),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            }
        }
    }
    if result.val_curve.is_empty() && !result.diverged {
        best = model.clone();
    }
    result.metric = match evaluate_all(&best, test) {
        Ok(ev) => ev.metric(),
        Err(Error::NonFinite(_)) => {
            result.diverged = true;
            0.0
        }
        Err(e) => return Err(e),
    };
    result.success = !result.diverged && result.metric > cfg.threshold;
    result.seconds = start.elapsed().as_secs_f64();
    Ok((model, result))
}

fn better(a: &ExperimentResult, b: &ExperimentResult) -> bool {
    (a.success, a.metric) > (b.success, b.metric)
}

fn sweep(cfg: &TrainConfig, config: Value, mut run: impl FnMut(f64) -> Result<ExperimentResult>) -> Result<ExperimentResult> {
    let mut best: Option<ExperimentResult> = None;
    for &lr in &cfg.lrs {
        let r = run(lr)?;
        let done = r.success && cfg.stop_on_success;
        if best.as_ref().map_or(true, |b| better(&r, b)) {
            best = Some(r);
        }
        if done {
            break;
        }
    }
    let mut best = best.ok_or_else(|| Error::InvalidArgument("empty learning-rate sweep".into()))?;
    best.config = config;
    Ok(best)
}

/// Best-over-sweep run on a synthetic task with fresh training batches.
pub fn run_synthetic(arch: &Architecture, task: &SyntheticTask, cfg: &TrainConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    task.validate()?;
    let val = task.fixed_set(cfg.seed.wrapping_add(1), cfg.val_size)?;
    let test = task.fixed_set(cfg.seed.wrapping_add(2), cfg.test_size)?;
    let config = json!({ "arch": arch, "task": task, "train": cfg });
    sweep(cfg, config, |lr| {
        let model = Model::init(arch, task.input_dim(), task.classes(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        Ok(train_loop(model, &mut task.clone(), &val, &test, cfg, lr)?.1)
    })
}

/// Best-over-sweep run on a fixed pixel-sequence dataset.
pub fn run_dataset(arch: &Architecture, train: &SequenceDataset, val: &SequenceDataset, test: &SequenceDataset, cfg: &TrainConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (val_b, test_b) = (dataset_batches(val), dataset_batches(test));
    let config = json!({ "arch": arch, "task": "permuted-mnist", "train": cfg, "train_size": train.len(), "val_size": val.len(), "test_size": test.len() });
    sweep(cfg, config, |lr| {
        let model = Model::init(arch, 1, 10, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        Ok(train_loop(model, &mut DatasetSource::new(train)?, &val_b, &test_b, cfg, lr)?.1)
    })
}

/// Largest entrywise relative error between analytic gradients and central
/// differences with step `h`; entries below `1e-6` in magnitude are compared
/// absolutely.
pub fn gradient_check(model: &Model, batch: &Batch, h: f64) -> Result<f64> {
    let grads = model_backprop(model, batch)?;
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (g, group) in analytic.iter().enumerate() {
        for (k, &a) in group.iter().enumerate() {
            let base = probe.param_slices_mut()[g][k];
            let mut loss_at = |v: f64| -> Result<f64> {
                probe.param_slices_mut()[g][k] = v;
                probe.refresh_orthogonal();
                Ok(evaluate(&probe, batch)?.loss)
            };
            let numeric = (loss_at(base + h)? - loss_at(base - h)?) / (2.0 * h);
            loss_at(base)?;
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    Ok(worst)
}

/// Maps `f` over `items` on up to `jobs` threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    out.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every cell ran")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub depth: usize,
    pub channels: usize,
    pub params: usize,
    pub hardness: usize,
    pub metric: f64,
    pub success: bool,
    pub iters: usize,
    pub seconds: f64,
}

impl FrontierRow {
    pub const CSV_HEADER: &'static str = "depth,channels,params,hardness,metric,success,iters,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{},{:.3}",
            self.depth, self.channels, self.params, self.hardness, self.metric, self.success, self.iters, self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub arch: Architecture,
    /// Largest hardness reached before the first failure.
    pub max_hardness: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierTable {
    pub rows: Vec<FrontierRow>,
    pub frontier: Vec<FrontierEntry>,
}

impl FrontierTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(FrontierRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn max_hardness(&self, arch: &Architecture) -> Option<usize> {
        self.frontier.iter().find(|e| &e.arch == arch).and_then(|e| e.max_hardness)
    }
}

/// Sweeps each architecture over the hardness grid in ascending order and
/// stops at its first failure; architectures run on up to `jobs` threads.
pub fn success_frontier_with<F>(archs: &[Architecture], hardness: &[usize], jobs: usize, trainer: F) -> FrontierTable
where
    F: Fn(&Architecture, usize) -> FrontierRow + Sync,
{
    let mut grid = hardness.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let per_arch = parallel_map(archs, jobs, |arch| {
        let mut rows = Vec::new();
        let mut best = None;
        for &h in &grid {
            let row = trainer(arch, h);
            let ok = row.success;
            rows.push(row);
            if !ok {
                break;
            }
            best = Some(h);
        }
        (rows, FrontierEntry { arch: *arch, max_hardness: best })
    });
    let (rows, frontier): (Vec<_>, Vec<_>) = per_arch.into_iter().unzip();
    FrontierTable { rows: rows.into_iter().flatten().collect(), frontier }
}

/// Hardness axis of a synthetic task family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierTask {
    /// Hardness is the delay `B`.
    CopyDelay { m: usize, n: u32 },
    /// Hardness is the sequence length `T`.
    SimilarityLength { m: usize, n: u32 },
}

impl FrontierTask {
    pub fn at(&self, h: usize) -> Result<SyntheticTask> {
        Ok(match *self {
            FrontierTask::CopyDelay { m, n } => SyntheticTask::Copy(CopyConfig::new(m, h, n)?),
            FrontierTask::SimilarityLength { m, n } => SyntheticTask::Similarity(SimConfig::new(h, m, n)?),
        })
    }
}

/// Frontier over a synthetic task family with the sweep trainer; cells whose
/// configuration is invalid count as failures.
pub fn success_frontier(family: &FrontierTask, archs: &[Architecture], hardness: &[usize], cfg: &TrainConfig, jobs: usize) -> Result<FrontierTable> {
    cfg.validate()?;
    Ok(success_frontier_with(archs, hardness, jobs, |arch, h| {
        let start = Instant::now();
        let res = family.at(h).and_then(|task| Ok((run_synthetic(arch, &task, cfg)?, task.input_dim(), task.classes())));
        let (metric, success, iters, params) = match &res {
            Ok((r, m, c)) => (r.metric, r.success, r.iterations, arch.params(*m, *c)),
            Err(_) => (0.0, false, 0, 0),
        };
        FrontierRow {
            depth: arch.depth,
            channels: arch.channels,
            params,
            hardness: h,
            metric,
            success,
            iters,
            seconds: start.elapsed().as_secs_f64(),
        }
    }))
}
