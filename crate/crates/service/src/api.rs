//! Request and response payloads. Images travel as base64-encoded PNG.

use serde::{Deserialize, Serialize};
use varnet::sampling::{BlockSetting, GridAxis, GridCell, InterpolationAxis, ZMode};

/// An input given by dataset index, PNG image or raw planar values, with
/// optional metadata. Metadata given here overrides a dataset example's own.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels: Option<Vec<f64>>,
    /// One label per label field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockInfo {
    pub index: usize,
    pub kind: String,
    pub offset: usize,
    pub d_psi: usize,
    /// Attention coordinates (free blocks) or metadata columns (continuous).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Label classes of discrete and label-dependent blocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub dataset: Option<String>,
    pub dataset_size: Option<usize>,
    pub step: u64,
    pub fingerprint: String,
    pub d_z: usize,
    pub input_shape: [usize; 3],
    pub total_dim: usize,
    pub two_stage: bool,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub mu_z: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub psi: Vec<f64>,
    /// Attention weights per block (`null` for fixed blocks).
    pub alphas: Vec<Option<Vec<f64>>>,
    pub reconstruction: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeRequest {
    pub z: Vec<f64>,
    /// Full attribute vector; alternatively `blocks` gives one setting per block.
    #[serde(default)]
    pub psi: Option<Vec<f64>>,
    #[serde(default)]
    pub blocks: Option<Vec<BlockSetting>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub image: String,
    pub psi: Vec<f64>,
}

fn default_pad() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRequest {
    pub source: InputSpec,
    /// Per-block settings applied before sweeping; `null` keeps the source's own.
    #[serde(default)]
    pub overrides: Vec<Option<BlockSetting>>,
    #[serde(default)]
    pub axes: Vec<GridAxis>,
    #[serde(default)]
    pub z_mode: ZMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pad")]
    pub pad: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridResponse {
    /// All cells tiled row-major with one extra row holding the source
    /// reconstruction in its bottom-left cell.
    pub image: String,
    pub rows: usize,
    pub cols: usize,
    pub steps: Vec<usize>,
    pub cells: Vec<GridCell>,
    pub cell_images: Vec<String>,
    pub source_echo: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateRequest {
    pub a: InputSpec,
    pub b: InputSpec,
    pub axis: InterpolationAxis,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpolateResponse {
    pub strip: String,
    pub images: Vec<String>,
    pub z: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fixed attributes; drawn from the prior when absent.
    #[serde(default)]
    pub psi: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleResponse {
    pub images: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSample {
    pub index: usize,
    pub image: String,
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}
