use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Exit};

pub struct MnistFile {
    pub name: &'static str,
    /// SHA-256 of the uncompressed IDX file.
    pub sha256: &'static str,
}

pub const MNIST_FILES: [MnistFile; 4] = [
    MnistFile { name: "train-images-idx3-ubyte", sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db" },
    MnistFile { name: "train-labels-idx1-ubyte", sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5" },
    MnistFile { name: "t10k-images-idx3-ubyte", sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7" },
    MnistFile { name: "t10k-labels-idx1-ubyte", sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2" },
];

pub const DEFAULT_MIRRORS: [&str; 2] = ["https://storage.googleapis.com/cvdf-datasets/mnist/", "https://ossci-datasets.s3.amazonaws.com/mnist/"];

/// Mirror list override (comma-separated base URLs).
pub const MIRROR_ENV: &str = "SEPRANK_MNIST_MIRRORS";
pub const DATA_ENV: &str = "SEPRANK_DATA_DIR";

/// `explicit`, then `$SEPRANK_DATA_DIR`, then `data/mnist`.
pub fn data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn mirrors() -> Vec<String> {
    match std::env::var(MIRROR_ENV) {
        Ok(v) if !v.trim().is_empty() => v.split(',').map(|s| s.trim().to_string()).collect(),
        _ => DEFAULT_MIRRORS.iter().map(|s| s.to_string()).collect(),
    }
}

fn download(url: &str) -> Result<Vec<u8>, String> {
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build();
    let resp = agent.get(url).call().map_err(|e| e.to_string())?;
    let mut body = Vec::new();
    resp.into_reader().read_to_end(&mut body).map_err(|e| e.to_string())?;
    Ok(body)
}

fn gunzip_if_needed(bytes: Vec<u8>) -> Result<Vec<u8>, String> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out).map_err(|e| e.to_string())?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn is_valid(path: &Path, sha: &str) -> bool {
    fs::read(path).map(|b| sha256_hex(&b) == sha).unwrap_or(false)
}

/// Ensures the four IDX files exist under `dest` with the pinned digests,
/// downloading only missing or corrupted ones.
pub fn fetch_mnist(dest: &Path) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(dest)?;
    let mut log = Vec::new();
    for f in &MNIST_FILES {
        let path = dest.join(f.name);
        if is_valid(&path, f.sha256) {
            log.push(format!("{}: present, checksum ok", f.name));
            continue;
        }
        let mut network_errors = Vec::new();
        let mut mismatch = None;
        let mut done = false;
        for base in mirrors() {
            let url = format!("{base}{}.gz", f.name);
            let body = match download(&url).and_then(gunzip_if_needed) {
                Ok(b) => b,
                Err(e) => {
                    network_errors.push(format!("{url}: {e}"));
                    continue;
                }
            };
            let got = sha256_hex(&body);
            if got != f.sha256 {
                mismatch = Some(format!("{url}: sha256 {got}, expected {}", f.sha256));
                continue;
            }
            let tmp = dest.join(format!("{}.part", f.name));
            fs::write(&tmp, &body)?;
            fs::rename(&tmp, &path)?;
            log.push(format!("{}: downloaded from {url}, checksum ok", f.name));
            done = true;
            break;
        }
        if !done {
            return Err(match mismatch {
                Some(m) => CliError::new(Exit::Checksum, format!("checksum mismatch for {}: {m}", f.name)),
                None => CliError::new(Exit::Network, format!("could not download {}: {}", f.name, network_errors.join("; "))),
            });
        }
    }
    Ok(log)
}
