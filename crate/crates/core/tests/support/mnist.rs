//! Location of the MNIST IDX files used by data-dependent tests.
#![allow(dead_code)]

use std::path::PathBuf;

use cae::data::{load_idx, Dataset, Split};

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn files(split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir().join(format!("{prefix}-images-idx3-ubyte")),
        dir().join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads a split, or explains how to fetch it.
pub fn load(split: Split) -> Result<Dataset, String> {
    let (images, labels) = files(split);
    load_idx(&images, &labels, split)
        .map_err(|e| format!("MNIST {split} split unavailable ({e}); run scripts/fetch_mnist.sh"))
}
