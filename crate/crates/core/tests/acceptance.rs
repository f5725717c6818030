//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use deepmem::ortho::{cayley, orthogonality_deviation, scornn_grad, SkewParam};
use deepmem::rac::{build_weights_tensor_tt, mps_chain, network_grid, random_shallow_rac, GridSpec};
use deepmem::seprank::suite::{run_check, Check, SuiteConfig};
use deepmem::tasks::{load_mnist_idx, permute_pixels, split_indices, validation_split, CopyConfig, SimConfig};
use deepmem::tensor::{mps_contract, Matrix};
use deepmem::train::{
    gradient_check, run_dataset, run_synthetic, success_frontier, train_loop, Architecture, CellKind, FrontierTask, Model,
    SyntheticTask, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn suite_check(check: Check, limit: Duration) -> Outcome {
    let start = Instant::now();
    let rows = run_check(check, &SuiteConfig::default(), 0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let bad: Vec<String> = rows.iter().filter(|r| r.report.is_violation()).map(|r| r.csv_row()).collect();
    let failures: usize = rows.iter().map(|r| r.report.failures).sum();
    let trials: usize = rows.iter().map(|r| r.report.trials).sum();
    let detail = format!("{} cells, {failures}/{trials} off-target trials, {:.1}s", rows.len(), elapsed.as_secs_f64());
    if !bad.is_empty() {
        return Err(format!("{detail}; violations: {}", bad.join(" | ")));
    }
    ensure(elapsed < limit, detail)
}

fn triple_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..50 {
        let (m, r) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let net = random_shallow_rac(m, r, 2, &mut rng).map_err(|e| e.to_string())?;
        for t in 1..=4 {
            for c in 0..2 {
                let tt = build_weights_tensor_tt(&net, c, t).map_err(|e| e.to_string())?;
                let mps = mps_contract(&mps_chain(&net, c, t).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                let grid = network_grid(&net, &GridSpec::one_hot(m, t), c).map_err(|e| e.to_string())?;
                compared += 1;
                if tt != mps || tt != grid {
                    mismatches += 1;
                }
            }
        }
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches over {compared} (net, class, T) tensors"))
}

fn orthogonality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cayley_dev = 0.0f64;
    for _ in 0..200 {
        let r = rng.gen_range(2..=32);
        let upper = (0..r * (r - 1) / 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let d = (0..r).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let p = SkewParam::new(r, upper, d).map_err(|e| e.to_string())?;
        cayley_dev = cayley_dev.max(orthogonality_deviation(&cayley(&p)));
    }

    let mut grad_err = 0.0f64;
    for k in 0..20 {
        let r = [2, 4, 8][k % 3];
        let upper: Vec<f64> = (0..r * (r - 1) / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..r).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let w0 = Matrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
        let loss = |u: &[f64]| -> f64 {
            let w = cayley(&SkewParam::new(r, u.to_vec(), d.clone()).unwrap());
            w.as_slice().iter().zip(w0.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let p = SkewParam::new(r, upper.clone(), d.clone()).map_err(|e| e.to_string())?;
        let w = cayley(&p);
        let dl_dw = w.sub(&w0).map_err(|e| e.to_string())?.scale(&2.0);
        let g = scornn_grad(&dl_dw, &w, &p).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).map(|(i, j)| g[(i, j)]).collect();
        for (k, a) in analytic.iter().enumerate() {
            let h = 1e-6;
            let (mut up, mut dn) = (upper.clone(), upper.clone());
            up[k] += h;
            dn[k] -= h;
            let numeric = (loss(&up) - loss(&dn)) / (2.0 * h);
            grad_err = grad_err.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }

    let task = SyntheticTask::Copy(CopyConfig::new(2, 3, 4).map_err(|e| e.to_string())?);
    let arch = Architecture { depth: 2, channels: 16, cell: CellKind::Scornn };
    let model = Model::init(&arch, 6, 6, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_iters: 1000, batch_size: 16, log_every: 1, cadence: 1000, stop_on_success: false, ..TrainConfig::default() };
    let val = task.fixed_set(1, 50).map_err(|e| e.to_string())?;
    let (_, res) = train_loop(model, &mut task.clone(), &val, &val, &cfg, 1e-3).map_err(|e| e.to_string())?;
    let train_dev = res.max_deviation.unwrap_or(f64::INFINITY);

    ensure(
        res.iterations == 1000 && train_dev < 1e-8 && cayley_dev < 1e-12 && grad_err < 1e-5,
        format!("training deviation {train_dev:.2e} after {} steps, Cayley {cayley_dev:.2e}, gradient rel err {grad_err:.2e}", res.iterations),
    )
}

fn bptt_check() -> Outcome {
    let task = SyntheticTask::Copy(CopyConfig::new(1, 3, 2).map_err(|e| e.to_string())?);
    let mut worst = Vec::new();
    for cell in [CellKind::Rac, CellKind::Tanh, CellKind::Scornn] {
        let mut err = 0.0f64;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = Model::init(&Architecture { depth: 2, channels: 3, cell }, 4, 4, &mut rng).map_err(|e| e.to_string())?;
            let batch = task.batch(&mut rng, 1).map_err(|e| e.to_string())?;
            err = err.max(gradient_check(&model, &batch, 1e-5).map_err(|e| e.to_string())?);
        }
        worst.push((cell, err));
    }
    let detail = worst.iter().map(|(c, e)| format!("{c:?} {e:.2e}")).collect::<Vec<_>>().join(", ");
    ensure(worst.iter().all(|&(_, e)| e < 1e-4), detail)
}

const COPY_INPUT: usize = 10;

fn copy_reproduction() -> Outcome {
    let task = SyntheticTask::Copy(CopyConfig::new(3, 20, 8).map_err(|e| e.to_string())?);
    let deep = Architecture { depth: 2, channels: 32, cell: CellKind::Scornn };
    let cfg = TrainConfig { cadence: 250, test_size: 2000, ..TrainConfig::default() };
    let single = run_synthetic(&deep, &task, &cfg).map_err(|e| e.to_string())?;
    let reached = single.success && single.metric > 0.99 && single.iterations <= 20_000;

    let shallow = Architecture::matched(1, CellKind::Scornn, deep.params(COPY_INPUT, COPY_INPUT), COPY_INPUT, COPY_INPUT);
    let family = FrontierTask::CopyDelay { m: 3, n: 8 };
    let mut ordered = 0;
    let mut per_seed = Vec::new();
    for seed in 0..3 {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let table = success_frontier(&family, &[deep, shallow], &[0, 10, 20, 40], &cfg, 1).map_err(|e| e.to_string())?;
        let (d, s) = (table.max_hardness(&deep), table.max_hardness(&shallow));
        ordered += usize::from(d >= s);
        per_seed.push(format!("seed {seed}: {d:?} vs {s:?}"));
    }
    ensure(
        reached && ordered >= 2,
        format!(
            "depth-2 R=32 accuracy {:.4} in {} iters (lr {}); frontier depth-2 vs depth-1 R={} ({}), ordered in {ordered}/3 seeds",
            single.metric,
            single.iterations,
            single.lr,
            shallow.channels,
            per_seed.join(", ")
        ),
    )
}

fn similarity_reproduction() -> Outcome {
    let (m, n) = (4u32, 8u32);
    let input = n as usize + 1;
    let deep = Architecture { depth: 2, channels: 16, cell: CellKind::Scornn };
    let shallow = Architecture::matched(1, CellKind::Scornn, deep.params(input, 3), input, 3);
    let mut wins = [[0usize; 2]; 2];
    let mut accs = Vec::new();
    for (ti, t) in [20u32, 40].into_iter().enumerate() {
        let task = SyntheticTask::Similarity(SimConfig::new(t as usize, m as usize, n).map_err(|e| e.to_string())?);
        for seed in 0..3 {
            let cfg = TrainConfig {
                seed,
                max_iters: 10_000,
                lrs: vec![1e-3],
                patience: 1000,
                test_size: 2000,
                ..TrainConfig::default()
            };
            for (ai, arch) in [deep, shallow].iter().enumerate() {
                let res = run_synthetic(arch, &task, &cfg).map_err(|e| e.to_string())?;
                wins[ti][ai] += usize::from(res.success);
                accs.push(format!("{:.3}", res.metric));
            }
        }
    }
    let never_behind = wins.iter().all(|w| w[0] >= w[1]);
    let ahead = wins.iter().map(|w| w[0]).sum::<usize>() > wins.iter().map(|w| w[1]).sum::<usize>();
    ensure(
        never_behind && ahead,
        format!(
            "successes depth-2 R=16 vs depth-1 R={}: T=20 {}-{}, T=40 {}-{}; accuracies {}",
            shallow.channels,
            wins[0][0],
            wins[0][1],
            wins[1][0],
            wins[1][1],
            accs.join(" ")
        ),
    )
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("SEPRANK_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist_smoke() -> Outcome {
    let dir = mnist_dir();
    let raw_images = std::fs::read(dir.join("t10k-images-idx3-ubyte")).map_err(|e| format!("{}: {e}; run fetch-mnist", dir.display()))?;
    let raw_labels = std::fs::read(dir.join("t10k-labels-idx1-ubyte")).map_err(|e| format!("{}: {e}; run fetch-mnist", dir.display()))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).map_err(|e| e.to_string())?;
    let pixels_back: Vec<u8> = test.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect();
    let round_trip = test.len() == 10_000
        && test.image_len() == 784
        && pixels_back == raw_images[16..]
        && test.labels == raw_labels[8..];

    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).map_err(|e| e.to_string())?;
    let (_, subset) = split_indices(train.len(), 2000, 0).map_err(|e| e.to_string())?;
    let seqs = permute_pixels(&train.subset(&subset), 1);
    let (tr, va) = validation_split(&seqs, 200, 0).map_err(|e| e.to_string())?;
    let arch = Architecture { depth: 1, channels: 32, cell: CellKind::Scornn };
    let cfg = TrainConfig { max_iters: 500, batch_size: 32, lrs: vec![1e-3], log_every: 1, cadence: 500, stop_on_success: false, ..TrainConfig::default() };
    let res = run_dataset(&arch, &tr, &va, &va, &cfg).map_err(|e| e.to_string())?;
    let c = &res.loss_curve;
    let k = 50.min(c.len() / 2).max(1);
    let first = c[..k].iter().map(|p| p.loss).sum::<f64>() / k as f64;
    let last = c[c.len() - k..].iter().map(|p| p.loss).sum::<f64>() / k as f64;
    let drop = 1.0 - last / first;
    ensure(
        round_trip && res.iterations == 500 && drop >= 0.2,
        format!(
            "test set {}x{} round trip {round_trip}; 500-iter loss {first:.3} -> {last:.3} (drop {:.1}%), held-out accuracy {:.3}",
            test.len(),
            test.image_len(),
            drop * 100.0,
            res.metric
        ),
    )
}

fn main() -> ExitCode {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("shallow exact rank", Box::new(move || suite_check(Check::TheoremShallow, mins(5)))),
        ("deep assignment bound", Box::new(move || suite_check(Check::TheoremDeep, mins(10)))),
        ("tt/mps/forward equivalence", Box::new(triple_equivalence)),
        ("decomposition identity", Box::new(move || suite_check(Check::Decomp, mins(60)))),
        ("repetition count", Box::new(move || suite_check(Check::Repetition, mins(60)))),
        ("rearrangement inequality", Box::new(move || suite_check(Check::Rearrange, mins(60)))),
        ("bucket argmax", Box::new(move || suite_check(Check::Bucket, mins(60)))),
        ("min-cut agreement", Box::new(move || suite_check(Check::MinCut, mins(60)))),
        ("hadamard rank bound", Box::new(move || suite_check(Check::HadamardBound, mins(60)))),
        ("orthogonality", Box::new(orthogonality)),
        ("bptt gradient check", Box::new(bptt_check)),
        ("copy reproduction", Box::new(copy_reproduction)),
        ("similarity reproduction", Box::new(similarity_reproduction)),
        ("mnist smoke", Box::new(mnist_smoke)),
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run) in &criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
