use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use deepmem::seprank::suite::{run_suite, Check, CheckRow};
use deepmem::tasks::{gen_copy, gen_sim, load_mnist_idx, permute_pixels, split_indices, MnistData};
use deepmem::tensor::{with_size_cap, DEFAULT_SIZE_CAP};
use deepmem::train::{run_dataset, run_synthetic, success_frontier, SyntheticTask, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{self, FrontierFile, GenFile, MnistTask, TrainFile, TrainTask, VerifyFile};
use crate::error::{CliError, Exit};
use crate::fetch::{data_dir, MNIST_FILES};

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

impl Globals {
    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable report")
}

pub fn list_checks() {
    for c in Check::ALL {
        println!("{:<16} {}", c.name(), c.describe());
    }
}

pub fn list_all() {
    println!("checks:");
    list_checks();
    println!("tasks: copy, similarity, permuted-mnist");
    println!("cells: rac, tanh, scornn");
}

pub fn verify(g: &Globals) -> Result<Exit, CliError> {
    let mut cfg: VerifyFile = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if cfg.checks.is_empty() {
        return Err(CliError::config("no checks selected"));
    }
    let dir = g.out_dir()?;
    let cap = cfg.size_cap.unwrap_or(DEFAULT_SIZE_CAP);
    match with_size_cap(cap, || run_suite(&cfg.checks, &cfg.suite, cfg.seed)) {
        Ok(rows) => {
            let violations = rows.iter().filter(|r| r.report.is_violation()).count();
            let mut csv = format!("{}\n", CheckRow::CSV_HEADER);
            for r in &rows {
                println!("{}", r.csv_row());
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            write(&dir.join("verify.csv"), &csv)?;
            let summary = json!({ "config": cfg, "rows": rows, "violations": violations, "passed": violations == 0 });
            write(&dir.join("verify.json"), &pretty(&summary))?;
            println!("{} rows, {violations} violations", rows.len());
            Ok(if violations == 0 { Exit::Pass } else { Exit::Violation })
        }
        Err(e) => {
            let message = e.to_string();
            let exit = CliError::from(e.source).exit;
            let summary = json!({ "config": cfg, "error": { "check": e.check, "cell": e.cell, "message": message } });
            write(&dir.join("verify.json"), &pretty(&summary))?;
            Err(CliError::new(exit, message))
        }
    }
}

fn resolve_train(train: &mut TrainConfig, file_seed: Option<u64>, flag: Option<u64>) {
    if let Some(s) = flag.or(file_seed) {
        train.seed = s;
    }
}

fn find_idx(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))].into_iter().find(|p| p.is_file())
}

/// Loads the train and test IDX pairs from the data directory.
pub fn load_mnist(dir: &Path) -> Result<(MnistData, MnistData), CliError> {
    let mut paths = Vec::new();
    for name in MNIST_FILES.iter().map(|f| f.name) {
        paths.push(find_idx(dir, name).ok_or_else(|| {
            CliError::new(
                Exit::DataMissing,
                format!("MNIST file {name} not found in {}; run `deepmem fetch-mnist --out {}` or set SEPRANK_DATA_DIR", dir.display(), dir.display()),
            )
        })?);
    }
    let get = |name: &str| paths[MNIST_FILES.iter().position(|f| f.name == name).expect("known file")].clone();
    let train = load_mnist_idx(get("train-images-idx3-ubyte"), get("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(get("t10k-images-idx3-ubyte"), get("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

fn mnist_run(cfg: &TrainFile, task: &MnistTask) -> Result<deepmem::train::ExperimentResult, CliError> {
    let (train_raw, test_raw) = load_mnist(&data_dir(None))?;
    let (tr_idx, va_idx) = split_indices(train_raw.len(), task.validation, task.split_seed)?;
    let tr_idx = &tr_idx[..task.train_subset.unwrap_or(tr_idx.len()).min(tr_idx.len())];
    let test_n = task.test_limit.unwrap_or(test_raw.len()).min(test_raw.len());
    if tr_idx.is_empty() || va_idx.is_empty() || test_n == 0 {
        return Err(CliError::config("train, validation and test sets must be non-empty"));
    }
    let train = permute_pixels(&train_raw.subset(tr_idx), task.permutation_seed);
    let val = permute_pixels(&train_raw.subset(&va_idx), task.permutation_seed);
    let test = permute_pixels(&test_raw.subset(&(0..test_n).collect::<Vec<_>>()), task.permutation_seed);
    Ok(run_dataset(&cfg.arch, &train, &val, &test, &cfg.train)?)
}

pub fn train(g: &Globals) -> Result<Exit, CliError> {
    let mut cfg: TrainFile = config::load(g.config.as_deref())?;
    resolve_train(&mut cfg.train, cfg.seed, g.seed);
    cfg.train.validate()?;
    let dir = g.out_dir()?;
    let mut result = match &cfg.task {
        TrainTask::Copy(c) => run_synthetic(&cfg.arch, &SyntheticTask::Copy(*c), &cfg.train)?,
        TrainTask::Similarity(c) => run_synthetic(&cfg.arch, &SyntheticTask::Similarity(*c), &cfg.train)?,
        TrainTask::PermutedMnist(t) => mnist_run(&cfg, t)?,
    };
    result.config = json!({ "resolved": cfg, "run": result.config });
    write(&dir.join("train.json"), &pretty(&result))?;
    let mut curve = String::from("iter,loss\n");
    for p in &result.loss_curve {
        curve.push_str(&format!("{},{}\n", p.iter, p.loss));
    }
    write(&dir.join("loss_curve.csv"), &curve)?;
    println!(
        "metric {:.6} success {} lr {} iterations {} diverged {} seconds {:.1}",
        result.metric, result.success, result.lr, result.iterations, result.diverged, result.seconds
    );
    Ok(Exit::Pass)
}

pub fn frontier(g: &Globals) -> Result<Exit, CliError> {
    let mut cfg: FrontierFile = config::load(g.config.as_deref())?;
    resolve_train(&mut cfg.train, cfg.seed, g.seed);
    if cfg.archs.is_empty() {
        return Err(CliError::config("no architectures given"));
    }
    let dir = g.out_dir()?;
    let table = success_frontier(&cfg.family, &cfg.archs, &cfg.hardness, &cfg.train, g.jobs.max(1))?;
    print!("{}", table.to_csv());
    for e in &table.frontier {
        println!("depth {} channels {}: max hardness {:?}", e.arch.depth, e.arch.channels, e.max_hardness);
    }
    write(&dir.join("frontier.csv"), &table.to_csv())?;
    write(&dir.join("frontier.json"), &pretty(&json!({ "config": cfg, "table": table })))?;
    Ok(Exit::Pass)
}

pub fn gen(g: &Globals) -> Result<Exit, CliError> {
    let mut cfg: GenFile = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.task.validate()?;
    let dir = g.out_dir()?;
    let path = dir.join("dataset.jsonl");
    let file = fs::File::create(&path).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let header = json!({ "seed": cfg.seed, "task": cfg.task, "count": cfg.count, "schema": cfg.schema });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    writeln!(w, "{header}")?;
    for _ in 0..cfg.count {
        let s = match &cfg.task {
            SyntheticTask::Copy(c) => gen_copy(c, &mut rng),
            SyntheticTask::Similarity(c) => gen_sim(c, &mut rng),
        };
        writeln!(w, "{}", s.to_json_line())?;
    }
    w.flush()?;
    println!("wrote {} samples to {}", cfg.count, path.display());
    Ok(Exit::Pass)
}
