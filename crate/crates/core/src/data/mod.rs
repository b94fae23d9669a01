//! Datasets, batching and example metadata.

mod batch;
mod dataset;
pub mod idx;
pub mod synth;

use std::path::PathBuf;

pub use batch::{ExampleBatch, Metadata};
pub use dataset::Dataset;

use crate::error::{Result, VarNetError};
use crate::tensor::Tensor;

/// Environment variable naming the dataset cache root.
pub const DATA_DIR_ENV: &str = "VARNET_DATA_DIR";

pub const KNOWN_DATASETS: [&str; 5] = ["synth-digits", "synth-sprites", "mnist", "fashion-mnist", "kmnist"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn download_hint(id: &str) -> &'static str {
    match id {
        "mnist" => "download the four *-ubyte.gz files from https://ossci-datasets.s3.amazonaws.com/mnist/",
        "fashion-mnist" => "download the four *-ubyte.gz files from https://github.com/zalandoresearch/fashion-mnist",
        _ => "download the four *-ubyte.gz files from https://github.com/rois-codh/kmnist",
    }
}

fn load_idx_dataset(id: &str, split: Split, subset: Option<usize>) -> Result<Dataset> {
    let dir = data_dir().join(id);
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images = idx::locate(&dir, &format!("{prefix}-images-idx3-ubyte"));
    let labels = idx::locate(&dir, &format!("{prefix}-labels-idx1-ubyte"));
    let (Some(images), Some(labels)) = (images, labels) else {
        return Err(VarNetError::MissingDataset {
            id: id.to_string(),
            dir,
            hint: format!("{} into this directory (or set {DATA_DIR_ENV})", download_hint(id)),
        });
    };
    let (n, h, w, pixels, labels) = idx::load_pair(&images, &labels)?;
    let keep = subset.unwrap_or(n).min(n);
    let d = h * w;
    let x = Tensor::from_vec(keep, d, pixels[..keep * d].to_vec())?;
    let labels = labels[..keep].to_vec();
    Dataset::new(id, [1, h, w], x, Metadata::with_labels(labels), vec![10])
}

/// Loads a dataset by id. Synthetic sets are generated from `seed`; the test
/// split uses an independent stream. File-backed sets read from
/// [`data_dir`] and keep their first `subset` examples.
pub fn load_dataset(id: &str, split: Split, subset: Option<usize>, seed: u64) -> Result<Dataset> {
    let synth_seed = match split {
        Split::Train => seed,
        Split::Test => seed ^ 0x7e57_7e57_7e57_7e57,
    };
    match id {
        "synth-digits" => synth::synth_digits(subset.unwrap_or(10_000), synth_seed),
        "synth-sprites" => synth::synth_sprites(subset.unwrap_or(10_000), synth_seed),
        "mnist" | "fashion-mnist" | "kmnist" => load_idx_dataset(id, split, subset),
        other => Err(VarNetError::Config(format!(
            "unknown dataset `{other}` (known: {})",
            KNOWN_DATASETS.join(", ")
        ))),
    }
}
