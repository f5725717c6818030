use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const PIXELS: usize = 784;

/// Images scaled to `[0, 1]`, stored row-major as `len() × pixels`.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistData {
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl MnistData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let p = self.image_len();
        &self.pixels[i * p..(i + 1) * p]
    }

    pub fn subset(&self, idx: &[usize]) -> MnistData {
        let mut pixels = Vec::with_capacity(idx.len() * self.image_len());
        for &i in idx {
            pixels.extend_from_slice(self.image(i));
        }
        MnistData { pixels, labels: idx.iter().map(|&i| self.labels[i]).collect(), rows: self.rows, cols: self.cols }
    }
}

/// Fixed-order pixel sequences: `sequence[k] = image[permutation[k]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<f32>,
    pub labels: Vec<u8>,
    pub seq_len: usize,
    pub permutation: Vec<usize>,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &[f32] {
        &self.sequences[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// Raster-order image recovered through the inverse permutation.
    pub fn unpermute(&self, i: usize) -> Vec<f32> {
        let seq = self.sequence(i);
        invert_permutation(&self.permutation).iter().map(|&k| seq[k]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> SequenceDataset {
        let mut sequences = Vec::with_capacity(idx.len() * self.seq_len);
        for &i in idx {
            sequences.extend_from_slice(self.sequence(i));
        }
        SequenceDataset {
            sequences,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            seq_len: self.seq_len,
            permutation: self.permutation.clone(),
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(buf: &[u8], at: usize, what: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn parse_images(buf: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(buf, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let n = be_u32(buf, 4, "images")? as usize;
    let rows = be_u32(buf, 8, "images")? as usize;
    let cols = be_u32(buf, 12, "images")? as usize;
    let need = n * rows * cols;
    let body = &buf[16..];
    if body.len() < need {
        return Err(Error::Format(format!("images: truncated, {} of {need} pixel bytes", body.len())));
    }
    Ok((n, rows, cols, &body[..need]))
}

fn parse_labels(buf: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(buf, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let n = be_u32(buf, 4, "labels")? as usize;
    let body = &buf[8..];
    if body.len() < n {
        return Err(Error::Format(format!("labels: truncated, {} of {n} bytes", body.len())));
    }
    let labels = &body[..n];
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("labels: value {bad} outside 0..=9")));
    }
    Ok(labels)
}

/// Loads an IDX image/label pair; gzip input is detected by its magic bytes.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistData> {
    let ibuf = read_maybe_gz(images_path.as_ref())?;
    let lbuf = read_maybe_gz(labels_path.as_ref())?;
    let (n, rows, cols, body) = parse_images(&ibuf)?;
    let labels = parse_labels(&lbuf)?;
    if labels.len() != n {
        return Err(Error::Format(format!("count mismatch: {n} images, {} labels", labels.len())));
    }
    Ok(MnistData { pixels: body.iter().map(|&b| b as f32 / 255.0).collect(), labels: labels.to_vec(), rows, cols })
}

/// Fisher-Yates over `0..len`; seed 0 yields the identity.
pub fn pixel_permutation(seed: u64, len: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    if seed != 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..len).rev() {
            let j = rng.gen_range(0..=i);
            p.swap(i, j);
        }
    }
    p
}

pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &i) in p.iter().enumerate() {
        inv[i] = k;
    }
    inv
}

pub fn permute_pixels(images: &MnistData, seed: u64) -> SequenceDataset {
    let len = images.image_len();
    let permutation = pixel_permutation(seed, len);
    let mut sequences = Vec::with_capacity(images.pixels.len());
    for i in 0..images.len() {
        let img = images.image(i);
        sequences.extend(permutation.iter().map(|&k| img[k]));
    }
    SequenceDataset { sequences, labels: images.labels.clone(), seq_len: len, permutation }
}

/// Shuffles `0..n` with `seed` and returns `(train, validation)` where the
/// validation part is the final `k` indices.
pub fn split_indices(n: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if k >= n {
        return arg_err(format!("validation size {k} must be below dataset size {n}"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = idx.split_off(n - k);
    Ok((idx, val))
}

pub fn validation_split(data: &SequenceDataset, k: usize, seed: u64) -> Result<(SequenceDataset, SequenceDataset)> {
    let (tr, va) = split_indices(data.len(), k, seed)?;
    Ok((data.subset(&tr), data.subset(&va)))
}
