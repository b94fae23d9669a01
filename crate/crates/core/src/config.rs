//! Experiment configuration files (TOML, strict schema).
//!
//! ```toml
//! seed = 7
//!
//! [dataset]
//! id = "synth-digits"
//! train = 10000
//! eval = 2000
//!
//! [model]
//! d_z = 16
//! input_shape = [1, 28, 28]
//! encoder = { kind = "mlp", hidden = [256] }
//! decoder = { kind = "mlp", hidden = [256] }
//!
//! [[attributes]]
//! kind = "fixed_discrete"
//! m = 10
//! d_psi = 16
//! field = 0
//!
//! [train]
//! beta = 1.0
//! gamma = 10.0
//! iters = 3000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeBlock, AttributeSpec};
use crate::error::{Result, VarNetError};
use crate::model::ModelConfig;
use crate::training::HyperParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    #[serde(default = "default_train")]
    pub train: usize,
    #[serde(default = "default_eval")]
    pub eval: usize,
}

fn default_train() -> usize {
    10_000
}

fn default_eval() -> usize {
    2_000
}

/// First stage of a two-stage run: a plain autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOneConfig {
    pub model: ModelConfig,
    #[serde(default = "plain_vae_hyper")]
    pub train: HyperParams,
}

fn plain_vae_hyper() -> HyperParams {
    HyperParams {
        gamma: 0.0,
        ..HyperParams::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default = "AttributeSpec::empty")]
    pub attributes: AttributeSpec,
    #[serde(default)]
    pub train: HyperParams,
    /// Present for two-stage runs; `model` then reads its posterior means.
    #[serde(default)]
    pub stage1: Option<StageOneConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// What a dataset id provides: example shape, label classes per field and
/// number of continuous metadata columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSchema {
    pub shape: [usize; 3],
    pub label_counts: Vec<usize>,
    pub continuous: usize,
}

pub fn dataset_schema(id: &str) -> Result<DatasetSchema> {
    Ok(match id {
        "synth-digits" | "mnist" | "fashion-mnist" | "kmnist" => DatasetSchema {
            shape: [1, 28, 28],
            label_counts: vec![10],
            continuous: 0,
        },
        "synth-sprites" => DatasetSchema {
            shape: [1, 64, 64],
            label_counts: vec![3],
            continuous: 4,
        },
        other => return Err(VarNetError::Config(format!("unknown dataset `{other}`"))),
    })
}

/// Checks an attribute spec against what a dataset provides.
pub fn check_spec_against(spec: &AttributeSpec, schema: &DatasetSchema) -> Result<()> {
    for (i, block) in spec.blocks().iter().enumerate() {
        match block {
            AttributeBlock::FixedDiscrete { m, field, .. } | AttributeBlock::LabelDependentFree { m, field, .. } => {
                let have = schema.label_counts.get(*field).ok_or_else(|| {
                    VarNetError::Config(format!(
                        "attribute block {i} reads label field {field}, the dataset has {}",
                        schema.label_counts.len()
                    ))
                })?;
                if have != m {
                    return Err(VarNetError::Config(format!(
                        "attribute block {i} declares m = {m} but label field {field} has {have} classes"
                    )));
                }
            }
            AttributeBlock::FixedContinuous { m, offset, .. } => {
                if offset + m > schema.continuous {
                    return Err(VarNetError::Config(format!(
                        "attribute block {i} reads continuous columns {offset}..{} but the dataset has {}",
                        offset + m,
                        schema.continuous
                    )));
                }
            }
            AttributeBlock::Free { .. } => {}
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| VarNetError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VarNetError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VarNetError::Config(e.to_string()))
    }

    /// Every cross-field check, run before any training.
    pub fn validate(&self) -> Result<()> {
        let schema = dataset_schema(&self.dataset.id)?;
        if self.dataset.train == 0 {
            return Err(VarNetError::Config("dataset.train must be positive".into()));
        }
        self.model.validate()?;
        self.train.validate()?;
        check_spec_against(&self.attributes, &schema)?;
        if self.attributes.is_empty() && self.train.gamma != 0.0 {
            return Err(VarNetError::Config(
                "an empty attribute list trains a plain autoencoder and needs gamma = 0".into(),
            ));
        }
        let expected = match &self.stage1 {
            None => schema.shape,
            Some(s1) => {
                s1.model.validate()?;
                s1.train.validate()?;
                if s1.train.gamma != 0.0 {
                    return Err(VarNetError::Config("stage1.train.gamma must be 0".into()));
                }
                if s1.model.input_shape != schema.shape {
                    return Err(VarNetError::Config(format!(
                        "stage1.model.input_shape {:?} does not match dataset shape {:?}",
                        s1.model.input_shape, schema.shape
                    )));
                }
                [1, 1, s1.model.d_z]
            }
        };
        if self.model.input_shape != expected {
            return Err(VarNetError::Config(format!(
                "model.input_shape {:?} does not match the expected {:?}",
                self.model.input_shape, expected
            )));
        }
        if self.stage1.is_some() != self.model.two_stage {
            return Err(VarNetError::Config(
                "model.two_stage must be true exactly when a [stage1] section is present".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[dataset]
id = "synth-digits"
train = 100
[model]
d_z = 16
input_shape = [1, 28, 28]
[[attributes]]
kind = "fixed_discrete"
m = 10
d_psi = 8
field = 0
[train]
beta = 1.0
gamma = 10.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.attributes.total_dim(), 8);
        assert_eq!(c.train.batch_size, 64);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let typo = BASE.replace("gamma = 10.0", "gama = 10.0");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(VarNetError::Config(_))));
    }

    #[test]
    fn dimension_mismatches_rejected() {
        for bad in [
            BASE.replace("m = 10", "m = 3"),
            BASE.replace("field = 0", "field = 1"),
            BASE.replace("input_shape = [1, 28, 28]", "input_shape = [1, 32, 32]"),
            BASE.replace("beta = 1.0", "beta = -1.0"),
        ] {
            assert!(ExperimentConfig::from_toml(&bad).is_err(), "{bad}");
        }
    }
}
