//! MNIST ingestion from IDX files and deterministic batching.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::init::seeded_rng;
use crate::tensor::{Shape, Tensor};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message} (at byte offset {offset})")]
    Ingest {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{images} holds {image_count} images but {labels} holds {label_count} labels")]
    CountMismatch {
        images: PathBuf,
        image_count: usize,
        labels: PathBuf,
        label_count: usize,
    },
    #[error("batch size {batch_size} is invalid for a dataset of {len} samples")]
    BatchSize { batch_size: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// (count, 1, rows, cols), pixels in [0, 1].
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

/// Reads a file, transparently inflating gzip (detected by its 0x1f8b magic).
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> DataError {
        DataError::Ingest {
            path: self.path.to_path_buf(),
            offset: self.offset,
            message: message.into(),
        }
    }

    fn u32_be(&mut self) -> Result<u32, DataError> {
        let chunk = self
            .bytes
            .get(self.offset..self.offset + 4)
            .ok_or_else(|| self.err("truncated header"))?;
        self.offset += 4;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn payload(&mut self, len: usize) -> Result<&[u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(self.err(format!("truncated payload: expected {len} bytes, found {available}")));
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }
}

/// Raw IDX image bytes: (count, rows, cols, pixels).
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    parse_images(path, &read_maybe_gz(path)?)
}

fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let mut cur = Cursor {
        path,
        bytes,
        offset: 0,
    };
    let magic = cur.u32_be()?;
    if magic != IMAGES_MAGIC {
        cur.offset = 0;
        return Err(cur.err(format!("bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")));
    }
    let count = cur.u32_be()? as usize;
    let rows = cur.u32_be()? as usize;
    let cols = cur.u32_be()? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let pixels = cur.payload(len)?.to_vec();
    Ok((count, rows, cols, pixels))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    parse_labels(path, &read_maybe_gz(path)?)
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut cur = Cursor {
        path,
        bytes,
        offset: 0,
    };
    let magic = cur.u32_be()?;
    if magic != LABELS_MAGIC {
        cur.offset = 0;
        return Err(cur.err(format!("bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")));
    }
    let count = cur.u32_be()? as usize;
    let start = cur.offset;
    let labels = cur.payload(count)?.to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(DataError::Ingest {
            path: path.to_path_buf(),
            offset: start + pos,
            message: format!("label {} is outside 0..=9", labels[pos]),
        });
    }
    Ok(labels)
}

/// Loads an image/label file pair, scaling pixels by exactly 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset, DataError> {
    let images = read_maybe_gz(images_path)?;
    let labels = read_maybe_gz(labels_path)?;
    assemble(images_path, &images, labels_path, &labels, split)
}

/// Same as [`load_idx`] for in-memory files (uncompressed IDX); errors
/// name the files `<images>` and `<labels>`.
pub fn dataset_from_idx_bytes(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset, DataError> {
    assemble(Path::new("<images>"), images, Path::new("<labels>"), labels, split)
}

fn assemble(images_path: &Path, images: &[u8], labels_path: &Path, labels: &[u8], split: Split) -> Result<Dataset, DataError> {
    let (count, rows, cols, pixels) = parse_images(images_path, images)?;
    let labels = parse_labels(labels_path, labels)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: images_path.to_path_buf(),
            image_count: count,
            labels: labels_path.to_path_buf(),
            label_count: labels.len(),
        });
    }
    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let images = Tensor::from_vec(Shape::new(count, 1, rows, cols), data).expect("length checked against header");
    Ok(Dataset { images, labels, split })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> Shape {
        self.images.shape().with_batch(1)
    }

    /// The first `n` samples (all of them if `n` exceeds the count).
    pub fn truncated(&self, n: usize) -> Dataset {
        self.slice(0, n.min(self.len()))
    }

    /// Samples `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let per = self.images.shape().per_sample();
        let data = self.images.data()[start * per..end * per].to_vec();
        Dataset {
            images: Tensor::from_vec(self.images.shape().with_batch(end - start), data).expect("slice of valid tensor"),
            labels: self.labels[start..end].to_vec(),
            split: self.split,
        }
    }

    /// Stacks the samples at `indices` into one tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.images.shape().per_sample());
        for &i in indices {
            data.extend_from_slice(self.images.sample(i));
        }
        Tensor::from_vec(self.images.shape().with_batch(indices.len()), data).expect("gathered samples")
    }

    /// Pixel bytes recovered by `round(pixel · 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.images
            .data()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// One training batch. The reconstruction target is the input itself.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub input: Tensor,
}

impl Batch {
    pub fn target(&self) -> &Tensor {
        &self.input
    }
}

/// Seed for the shuffle of a given epoch; distinct epochs get distinct
/// streams from one run seed.
pub fn epoch_seed(run_seed: u64, epoch: u64) -> u64 {
    run_seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Sample order for one epoch.
pub fn epoch_order(len: usize, run_seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seeded_rng(epoch_seed(run_seed, epoch)));
    order
}

/// Full batches of one shuffled epoch; a trailing partial batch is dropped.
pub fn batches(
    data: &Dataset,
    batch_size: usize,
    run_seed: u64,
    epoch: u64,
) -> Result<impl Iterator<Item = Batch> + '_, DataError> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(DataError::BatchSize {
            batch_size,
            len: data.len(),
        });
    }
    let order = epoch_order(data.len(), run_seed, epoch);
    let count = data.len() / batch_size;
    Ok((0..count).map(move |b| {
        let indices = order[b * batch_size..(b + 1) * batch_size].to_vec();
        let input = data.gather(&indices);
        Batch { indices, input }
    }))
}
