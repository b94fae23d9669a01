//! Post-hoc classifiers: a matched-vs-shuffled pair probe measuring how much
//! the templates reveal about their attributes, and a plain input classifier
//! used as an oracle for generated samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Graph;
use crate::error::{Result, VarNetError};
use crate::nn::{cross_entropy, Activation, Bind, Mlp};
use crate::params::{Adam, AdamConfig, ParamGroup, ParamStore};
use crate::tensor::Tensor;

/// Features that barely vary in training are not amplified past `1 / STD_FLOOR`.
const STD_FLOOR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            epochs: 10,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

/// Standardized-input MLP classifier.
#[derive(Clone, Debug)]
pub struct Classifier {
    store: ParamStore,
    net: Mlp,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    classes: usize,
}

impl Classifier {
    pub fn train(x: &Tensor, labels: &[usize], classes: usize, cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        if x.rows() != labels.len() || x.rows() == 0 {
            return Err(VarNetError::Batch(format!(
                "{} inputs but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(VarNetError::Batch(format!("label {bad} out of range 0..{classes}")));
        }
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n as f64;
            }
        }
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let inv_std = var.iter().map(|v| 1.0 / v.sqrt().max(STD_FLOOR)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut widths = vec![d];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(classes);
        let net = Mlp::new(
            &mut store,
            "clf",
            ParamGroup::Encoder,
            &widths,
            Activation::LeakyRelu,
            Activation::Identity,
            &mut rng,
        );
        let mut me = Self {
            store,
            net,
            mean,
            inv_std,
            classes,
        };
        let xs = me.standardize(x);
        let ids = me.store.ids().collect();
        let mut opt = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                beta1: 0.9,
                ..AdamConfig::default()
            },
            &me.store,
            ids,
        );
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let grads = {
                    let mut g = Graph::new();
                    let bind = Bind::all(&me.store);
                    let xb = g.constant(xs.select_rows(chunk));
                    let logits = me.net.forward(&mut g, &bind, xb);
                    let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    let loss = cross_entropy(&mut g, logits, &yb);
                    g.backward(loss)
                };
                opt.step(&mut me.store, |id| grads.param(id));
            }
        }
        Ok(me)
    }

    fn standardize(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let d = out.cols();
        for (j, v) in out.data_mut().iter_mut().enumerate() {
            let c = j % d;
            *v = (*v - self.mean[c]) * self.inv_std[c];
        }
        out
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        let mut g = Graph::new();
        let xv = g.constant(self.standardize(x));
        let logits = self.net.forward(&mut g, &Bind::frozen(&self.store), xv);
        let l = g.value(logits);
        (0..l.rows())
            .map(|r| {
                l.row(r)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(i, _)| i)
            })
            .collect()
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> f64 {
        let hits = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// Matched pairs `(z_i, ψ_i)` labelled 1 and shuffled pairs `(z_i, ψ_π(i))`
/// labelled 0.
pub fn pair_dataset(z: &Tensor, psi: &Tensor, rng: &mut ChaCha8Rng) -> Result<(Tensor, Vec<usize>)> {
    if z.rows() != psi.rows() {
        return Err(VarNetError::Batch("templates and attributes differ in count".into()));
    }
    let n = z.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let matched = Tensor::concat_cols(&[z, psi])?;
    let shuffled = Tensor::concat_cols(&[z, &psi.select_rows(&perm)])?;
    let x = Tensor::concat_rows(&[&matched, &shuffled])?;
    let mut y = vec![1; n];
    y.extend(std::iter::repeat_n(0, n));
    Ok((x, y))
}

/// Held-out accuracy of a freshly trained pair probe: 0.5 means the
/// templates carry no usable information about their attributes.
pub fn pair_probe_accuracy(
    train: (&Tensor, &Tensor),
    test: (&Tensor, &Tensor),
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xt, yt) = pair_dataset(train.0, train.1, &mut rng)?;
    let (xe, ye) = pair_dataset(test.0, test.1, &mut rng)?;
    let clf = Classifier::train(&xt, &yt, 2, cfg, seed)?;
    Ok(clf.accuracy(&xe, &ye))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::standard_normal;

    #[test]
    fn probe_detects_dependence_and_its_absence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ClassifierConfig {
            hidden: vec![32],
            epochs: 15,
            batch_size: 64,
            lr: 3e-3,
        };
        let z = standard_normal(1200, 3, &mut rng);
        let indep = standard_normal(1200, 2, &mut rng);
        let dep = z.slice_cols(0, 2);
        let split = |t: &Tensor| (t.select_rows(&(0..800).collect::<Vec<_>>()), t.select_rows(&(800..1200).collect::<Vec<_>>()));
        let (zt, ze) = split(&z);
        let (it, ie) = split(&indep);
        let (dt, de) = split(&dep);
        let a_indep = pair_probe_accuracy((&zt, &it), (&ze, &ie), &cfg, 1).unwrap();
        let a_dep = pair_probe_accuracy((&zt, &dt), (&ze, &de), &cfg, 1).unwrap();
        assert!(a_indep < 0.58, "{a_indep}");
        assert!(a_dep > 0.8, "{a_dep}");
    }
}
