use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deepmem"));
    c.env_remove("SEPRANK_DATA_DIR").env_remove("SEPRANK_MNIST_MIRRORS");
    c
}

fn run(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(text) = config {
        let p = out.join("config.json");
        fs::create_dir_all(out).unwrap();
        fs::write(&p, text).unwrap();
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn lines(p: &Path) -> Vec<Value> {
    fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn list_prints_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--list"], None, dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["theorem-shallow", "theorem-deep", "decomp", "rearrange", "bucket", "repetition", "min-cut", "hadamard-bound"] {
        assert!(text.contains(name), "{name} missing");
    }
    assert!(!dir.path().join("verify.csv").exists());
    assert_eq!(code(&run(&["list"], None, dir.path())), 0);
}

const SMALL_VERIFY: &str = r#"{
  "schema": 1,
  "checks": ["theorem-shallow", "repetition", "bucket", "decomp"],
  "suite": {
    "theorem_shallow": {"m": [2], "r": [1, 2, 5], "t": [2, 4], "trials": 5},
    "decomp": {"samples": 3, "t": [4]},
    "bucket": {"colors": [2], "half_t": [2]}
  }
}"#;

#[test]
fn verify_small_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], Some(SMALL_VERIFY), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.starts_with("check,M,R,T,L,measured,expected,verdict,trials,failures\n"));
    assert_eq!(csv.lines().count(), 1 + 6 + 16 + 1 + 1);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config"]["suite"]["decomp"]["samples"], 3);
}

#[test]
fn verify_cap_exits_three_and_names_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": 1, "checks": ["theorem-shallow"], "size_cap": 4096,
                 "suite": {"theorem_shallow": {"m": [3], "r": [2], "t": [2, 10], "trials": 2}}}"#;
    let o = run(&["verify"], Some(cfg), dir.path());
    assert_eq!(code(&o), 3);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(summary["error"]["cell"], "M=3 R=2 T=10");
    assert_eq!(summary["error"]["check"], "theorem-shallow");
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["verify"], Some(r#"{"schema": 1, "bogus": true}"#), dir.path())), 2);
    assert_eq!(code(&run(&["verify"], Some(r#"{"schema": 2}"#), dir.path())), 2);
    assert_eq!(code(&run(&["verify"], Some("not json"), dir.path())), 2);
    let odd = r#"{"schema": 1, "checks": ["theorem-shallow"], "suite": {"theorem_shallow": {"t": [3]}}}"#;
    assert_eq!(code(&run(&["verify"], Some(odd), dir.path())), 2);
    assert_eq!(code(&run(&["gen"], Some(r#"{"task": {"copy": {"m": 0, "B": 1, "n": 4}}, "count": 1}"#), dir.path())), 2);
}

#[test]
fn gen_copy_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--seed", "5"], Some(r#"{"schema": 1, "task": {"copy": {"m": 3, "B": 5, "n": 8}}, "count": 10}"#), dir.path());
    assert_eq!(code(&o), 0);
    let rows = lines(&dir.path().join("dataset.jsonl"));
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0]["seed"], 5);
    for r in &rows[1..] {
        assert_eq!(r["input"].as_array().unwrap().len(), 11);
        assert_eq!(r["target"].as_array().unwrap().len(), 11);
    }
}

#[test]
fn gen_similarity_histogram_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen"], Some(r#"{"task": {"similarity": {"T": 20, "m": 4, "n": 8}}, "count": 3000}"#), dir.path());
    assert_eq!(code(&o), 0);
    let rows = lines(&dir.path().join("dataset.jsonl"));
    let mut hist = [0usize; 3];
    for r in &rows[1..] {
        hist[r["class"].as_u64().unwrap() as usize] += 1;
    }
    assert!(hist.iter().all(|&c| (c as f64 / 3000.0 - 1.0 / 3.0).abs() <= 0.05), "{hist:?}");
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["gen"], Some(r#"{"task": {"copy": {"m": 1, "B": 0, "n": 2}}, "count": 0}"#), empty.path())), 0);
    assert_eq!(lines(&empty.path().join("dataset.jsonl")).len(), 1);
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = r#"{"seed": 9, "task": {"similarity": {"T": 12, "m": 2, "n": 3}}, "count": 50}"#;
    run(&["gen"], Some(cfg), a.path());
    run(&["gen"], Some(cfg), b.path());
    assert_eq!(fs::read(a.path().join("dataset.jsonl")).unwrap(), fs::read(b.path().join("dataset.jsonl")).unwrap());
}

#[test]
fn train_smoke_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let start = std::time::Instant::now();
    assert_eq!(code(&run(&["train", "--seed", "3"], None, a.path())), 0);
    assert!(start.elapsed().as_secs() < 120);
    assert_eq!(code(&run(&["train", "--seed", "3"], None, b.path())), 0);
    let read = |d: &Path| -> Value { serde_json::from_str(&fs::read_to_string(d.join("train.json")).unwrap()).unwrap() };
    let (ra, rb) = (read(a.path()), read(b.path()));
    assert_eq!(ra["metric"].as_f64().unwrap().to_bits(), rb["metric"].as_f64().unwrap().to_bits());
    assert_eq!(ra["loss_curve"], rb["loss_curve"]);
    assert_eq!(ra["config"]["resolved"]["train"]["seed"], 3);
    assert!(a.path().join("loss_curve.csv").exists());
}

#[test]
fn train_without_mnist_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"arch": {"depth": 1, "channels": 4, "cell": "scornn"}, "task": {"permuted-mnist": {}}, "train": {"max_iters": 1}}"#;
    let p = dir.path().join("c.json");
    fs::write(&p, cfg).unwrap();
    let o = bin().args(["train", "--config"]).arg(&p).arg("--out").arg(dir.path()).env("SEPRANK_DATA_DIR", dir.path().join("none")).output().unwrap();
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fetch-mnist"));
}

#[test]
fn frontier_rows_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "family": {"copy-delay": {"m": 1, "n": 2}},
      "archs": [{"depth": 1, "channels": 4, "cell": "scornn"}, {"depth": 2, "channels": 3, "cell": "scornn"}],
      "hardness": [0, 2],
      "train": {"max_iters": 20, "cadence": 10, "val_size": 20, "test_size": 20, "lrs": [0.001], "stop_on_success": false, "threshold": 0.01}
    }"#;
    let o = run(&["frontier", "--jobs", "2"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
    assert!(csv.starts_with("depth,channels,params,hardness,metric,success,iters,seconds\n"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for arch in ["1", "2"] {
        let mine: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == arch).collect();
        assert!(!mine.is_empty() && mine.len() <= 2);
        let hardness: Vec<&str> = mine.iter().map(|r| r[3]).collect();
        assert_eq!(hardness, ["0", "2"][..mine.len()]);
        let failed_early = mine[..mine.len() - 1].iter().any(|r| r[5] == "false");
        assert!(!failed_early);
        if mine.len() == 1 {
            assert_eq!(mine[0][5], "false");
        }
    }
}

fn mnist_dir() -> Option<PathBuf> {
    let d = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    d.join("t10k-labels-idx1-ubyte").is_file().then_some(d)
}

fn copy_mnist(to: &Path) -> bool {
    let Some(src) = mnist_dir() else {
        eprintln!("skipping: data/mnist not present");
        return false;
    };
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
    true
}

/// Serves `body` for every request until `count` requests are handled.
fn serve(body: Vec<u8>, count: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(count) {
            let mut s = stream.unwrap();
            let mut reader = BufReader::new(s.try_clone().unwrap());
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap() > 2 {
                line.clear();
            }
            write!(s, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
            s.write_all(&body).unwrap();
        }
    });
    format!("http://{addr}/")
}

fn gz(bytes: &[u8]) -> Vec<u8> {
    let mut e = GzEncoder::new(Vec::new(), Compression::fast());
    e.write_all(bytes).unwrap();
    e.finish().unwrap()
}

fn fetch(dest: &Path, mirrors: &str) -> Output {
    bin().arg("fetch-mnist").arg("--out").arg(dest).env("SEPRANK_MNIST_MIRRORS", mirrors).output().unwrap()
}

#[test]
fn fetch_is_idempotent_and_repairs() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("mnist");
    if !copy_mnist(&dest) {
        return;
    }
    let o = fetch(&dest, "http://127.0.0.1:1/");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("checksum ok").count(), 4);

    let labels = dest.join("t10k-labels-idx1-ubyte");
    let good = fs::read(&labels).unwrap();
    let mut bad = good.clone();
    bad[100] ^= 0xff;
    fs::write(&labels, &bad).unwrap();
    let o = fetch(&dest, &serve(gz(&good), 1));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&labels).unwrap(), good);
    assert!(String::from_utf8_lossy(&o.stdout).contains("downloaded"));
}

#[test]
fn fetch_failure_codes() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("empty");
    assert_eq!(code(&fetch(&dest, "http://127.0.0.1:1/")), 6);
    assert_eq!(code(&fetch(&dest, &serve(gz(b"not mnist"), 1))), 5);
}
