use crate::error::{Result, VarNetError};
use crate::tensor::Tensor;

/// Per-example side information.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    /// Discrete label fields, indexed `labels[field][sample]`.
    pub labels: Vec<Vec<usize>>,
    /// Continuous metadata in `[0, 1]`, shape `[n, M]`.
    pub continuous: Option<Tensor>,
}

impl Metadata {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_labels(labels: Vec<usize>) -> Self {
        Self {
            labels: vec![labels],
            continuous: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty() && self.continuous.is_none()
    }

    /// Restricts every field to the listed examples, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            labels: self
                .labels
                .iter()
                .map(|f| idx.iter().map(|&i| f[i]).collect())
                .collect(),
            continuous: self.continuous.as_ref().map(|c| c.select_rows(idx)),
        }
    }

    /// Number of examples described, if any field is present.
    pub fn len(&self) -> Option<usize> {
        self.labels
            .first()
            .map(Vec::len)
            .or_else(|| self.continuous.as_ref().map(Tensor::rows))
    }
}

/// A batch of inputs scaled to `[0, 1]` with their metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleBatch {
    pub x: Tensor,
    pub meta: Metadata,
}

impl ExampleBatch {
    pub fn new(x: Tensor, meta: Metadata) -> Result<Self> {
        let b = Self { x, meta };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if n == 0 {
            return Err(VarNetError::Batch("batch must hold at least one example".into()));
        }
        if !self.x.is_finite() {
            return Err(VarNetError::Batch("batch inputs contain non-finite values".into()));
        }
        for (f, labels) in self.meta.labels.iter().enumerate() {
            if labels.len() != n {
                return Err(VarNetError::Batch(format!(
                    "label field {f} has {} entries for {n} examples",
                    labels.len()
                )));
            }
        }
        if let Some(c) = &self.meta.continuous {
            if c.rows() != n {
                return Err(VarNetError::Batch(format!(
                    "continuous metadata has {} rows for {n} examples",
                    c.rows()
                )));
            }
        }
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            meta: self.meta.select(idx),
        }
    }
}
