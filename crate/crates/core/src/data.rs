//! Datasets: IDX archive parsing, bilinear resizing, non-IID partitioning
//! and synthetic Gaussian blobs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::amplitude_encode;
use crate::error::{Error, Result};
use crate::train::Sample;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Labeled feature rows of equal dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|f| f.len() != first.len()) {
                return Err(Error::Dimension("feature rows differ in length".into()));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Sorted distinct labels.
    pub fn class_set(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &y in &self.labels {
            *m.entry(y).or_default() += 1;
        }
        m
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(parts: &[&Dataset]) -> Dataset {
        let mut out = Dataset::default();
        for p in parts {
            out.features.extend(p.features.iter().cloned());
            out.labels.extend(&p.labels);
        }
        out
    }

    /// Amplitude-encodes every row.
    pub fn encode(&self) -> Result<Vec<Sample>> {
        self.features
            .par_iter()
            .zip(&self.labels)
            .map(|(x, &label)| {
                Ok(Sample {
                    state: amplitude_encode(x)?,
                    label,
                })
            })
            .collect()
    }
}

/// Decoded IDX image archive; each image is row-major with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx("truncated header".into()))
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx(format!("wrong magic for images: {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let payload = &bytes[16..];
    let want = count * size;
    if payload.len() < want {
        return Err(Error::Idx(format!(
            "truncated payload: expected {want} bytes, found {}",
            payload.len()
        )));
    }
    let images = if size == 0 {
        vec![Vec::new(); count]
    } else {
        payload[..want]
            .chunks_exact(size)
            .map(|c| c.iter().map(|&p| f64::from(p) / 255.0).collect())
            .collect()
    };
    Ok(IdxImages { rows, cols, images })
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx(format!("wrong magic for labels: {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Idx(format!(
            "label count {count} does not match payload of {} bytes",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&b| usize::from(b)).collect())
}

/// Serializes raw pixel bytes as an IDX image archive.
pub fn write_idx_images(rows: usize, cols: usize, pixels: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len() * rows * cols);
    for v in [IMAGE_MAGIC, pixels.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Bilinear resize with half-pixel centers (align-corners false).
pub fn bilinear_downsample(
    image: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || image.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "image of {} pixels is not a nonempty {rows}x{cols} grid",
            image.len()
        )));
    }
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::Dimension("output size must be at least 1x1".into()));
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let (r0, r1, wr) = axis(r, rows, out_rows);
        for c in 0..out_cols {
            let (c0, c1, wc) = axis(c, cols, out_cols);
            let top = image[r0 * cols + c0] * (1.0 - wc) + image[r0 * cols + c1] * wc;
            let bottom = image[r1 * cols + c0] * (1.0 - wc) + image[r1 * cols + c1] * wc;
            out.push(top * (1.0 - wr) + bottom * wr);
        }
    }
    Ok(out)
}

/// Loads an IDX image/label pair, optionally resizing every image.
pub fn load_idx(images: &Path, labels: &Path, resize: Option<(usize, usize)>) -> Result<Dataset> {
    let imgs = read_idx_images(&std::fs::read(images)?)?;
    let labels = read_idx_labels(&std::fs::read(labels)?)?;
    if imgs.images.len() != labels.len() {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            imgs.images.len(),
            labels.len()
        )));
    }
    let features = match resize {
        Some((r, c)) => imgs
            .images
            .par_iter()
            .map(|im| bilinear_downsample(im, imgs.rows, imgs.cols, r, c))
            .collect::<Result<Vec<_>>>()?,
        None => imgs.images,
    };
    Dataset::new(features, labels)
}

/// Per-client `(class, count)` requests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub clients: Vec<Vec<(usize, usize)>>,
    pub rng_seed: u64,
}

/// Draws each client's requested samples without replacement.
///
/// Every class's row indices are shuffled once with the plan seed and
/// handed out in client order, so clients never share a row.
pub fn partition(dataset: &Dataset, plan: &PartitionPlan) -> Result<Vec<Dataset>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in dataset.labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut requested: BTreeMap<usize, usize> = BTreeMap::new();
    for &(class, count) in plan.clients.iter().flatten() {
        *requested.entry(class).or_default() += count;
    }
    for (&class, &want) in &requested {
        let have = by_class.get(&class).map_or(0, Vec::len);
        if want > have {
            return Err(Error::Partition(format!(
                "class {class}: requested {want} samples, only {have} available"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
    }
    let mut cursor: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(plan.clients.len());
    for client in &plan.clients {
        let mut picked = Vec::new();
        for &(class, count) in client {
            let start = cursor.entry(class).or_default();
            let rows = &by_class[&class];
            picked.extend_from_slice(&rows[*start..*start + count]);
            *start += count;
        }
        out.push(dataset.select(&picked));
    }
    Ok(out)
}

/// Unit-variance Gaussian clusters, one per class, `per_class` rows each.
///
/// With `classes <= dimension` the centers sit on distinct coordinate axes
/// at distance `separation` from each other; otherwise they are random
/// directions of length `separation`. Features are shifted by a common
/// constant so the smallest entry is zero.
pub fn synthetic_blobs(
    classes: usize,
    per_class: usize,
    dimension: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if classes <= dimension {
                let mut v = vec![0.0; dimension];
                v[c] = separation / std::f64::consts::SQRT_2;
                v
            } else {
                let dir: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                dir.iter().map(|x| x / norm * separation).collect()
            }
        })
        .collect();

    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            features.push(
                center
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
        }
    }
    let min = features
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        for v in features.iter_mut().flatten() {
            *v -= min;
        }
    }
    Dataset { features, labels }
}
