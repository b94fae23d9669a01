use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{ExampleBatch, Metadata};
use crate::error::{Result, VarNetError};
use crate::tensor::Tensor;

/// An in-memory dataset of flattened inputs in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub id: String,
    /// `[channels, height, width]` of one example.
    pub shape: [usize; 3],
    pub x: Tensor,
    pub meta: Metadata,
    /// Number of classes of each label field.
    pub label_counts: Vec<usize>,
}

impl Dataset {
    pub fn new(id: impl Into<String>, shape: [usize; 3], x: Tensor, meta: Metadata, label_counts: Vec<usize>) -> Result<Self> {
        let id = id.into();
        let d: usize = shape.iter().product();
        if x.cols() != d {
            return Err(VarNetError::Shape(format!(
                "dataset `{id}`: examples have {} features but shape {shape:?} needs {d}",
                x.cols()
            )));
        }
        if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VarNetError::Format(format!("dataset `{id}`: inputs must lie in [0, 1]")));
        }
        if meta.labels.len() != label_counts.len() {
            return Err(VarNetError::Format(format!(
                "dataset `{id}`: {} label fields but {} class counts",
                meta.labels.len(),
                label_counts.len()
            )));
        }
        for (f, (labels, &m)) in meta.labels.iter().zip(&label_counts).enumerate() {
            if labels.len() != x.rows() {
                return Err(VarNetError::Format(format!("dataset `{id}`: label field {f} has the wrong length")));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
                return Err(VarNetError::Format(format!(
                    "dataset `{id}`: label {bad} in field {f} exceeds its {m} classes"
                )));
            }
        }
        if let Some(c) = &meta.continuous {
            if c.rows() != x.rows() || c.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(VarNetError::Format(format!(
                    "dataset `{id}`: continuous metadata must have one row per example, values in [0, 1]"
                )));
            }
        }
        Ok(Self {
            id,
            shape,
            x,
            meta,
            label_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// Examples at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            id: self.id.clone(),
            shape: self.shape,
            x: self.x.select_rows(idx),
            meta: self.meta.select(idx),
            label_counts: self.label_counts.clone(),
        }
    }

    /// Examples `start .. start + len`.
    pub fn range(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.len());
        self.select(&(start.min(end)..end).collect::<Vec<_>>())
    }

    /// First `n` examples and the rest.
    pub fn split(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        (self.range(0, n), self.range(n, self.len() - n))
    }

    pub fn batch(&self, idx: &[usize]) -> ExampleBatch {
        ExampleBatch {
            x: self.x.select_rows(idx),
            meta: self.meta.select(idx),
        }
    }

    pub fn as_batch(&self) -> ExampleBatch {
        ExampleBatch {
            x: self.x.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size.max(1))
    }

    /// Example order for one epoch; a pure function of `(seed, epoch)`.
    pub fn epoch_order(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Shuffled batches covering every example once; the last may be short.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> impl Iterator<Item = ExampleBatch> + '_ {
        let order = self.epoch_order(seed, epoch);
        let bs = batch_size.max(1);
        (0..self.batches_per_epoch(bs)).map(move |b| {
            let end = ((b + 1) * bs).min(order.len());
            self.batch(&order[b * bs..end])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x = Tensor::from_vec(n, 1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
        Dataset::new("toy", [1, 1, 1], x, Metadata::with_labels((0..n).map(|i| i % 3).collect()), vec![3]).unwrap()
    }

    #[test]
    fn batch_count_arithmetic() {
        let d = toy(1000);
        assert_eq!(d.batches(100, 0, 0).count(), 10);
        assert_eq!(d.batches_per_epoch(64), 16);
    }

    #[test]
    fn epoch_is_exhaustive_and_deterministic() {
        let d = toy(250);
        let seen: Vec<f64> = d.batches(64, 9, 3).flat_map(|b| b.x.into_vec()).collect();
        let mut sorted = seen.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, d.x.data());
        let again: Vec<f64> = d.batches(64, 9, 3).flat_map(|b| b.x.into_vec()).collect();
        assert_eq!(seen, again);
        assert_ne!(d.epoch_order(9, 3), d.epoch_order(9, 4));
    }

    #[test]
    fn rejects_out_of_range() {
        let x = Tensor::filled(2, 1, 1.5);
        assert!(Dataset::new("bad", [1, 1, 1], x, Metadata::none(), vec![]).is_err());
        let x = Tensor::filled(2, 1, 0.5);
        assert!(Dataset::new("bad", [1, 1, 1], x, Metadata::with_labels(vec![0, 4]), vec![3]).is_err());
    }
}
