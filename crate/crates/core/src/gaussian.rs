//! Gaussian heads: the diagonal posterior over templates, the scalar-variance
//! likelihood over inputs, and their closed-form quantities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VarNetError};
use crate::tensor::Tensor;

pub const SIGMA_Z_MIN: f64 = 1e-4;
pub const SIGMA_Z_MAX: f64 = 1e2;

/// `q(z|x) = N(μ_z, diag(σ_z²))` for a batch, both `[n, d_z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl GaussianPosterior {
    pub fn new(mu: Tensor, sigma: Tensor) -> Result<Self> {
        if mu.shape() != sigma.shape() {
            return Err(VarNetError::Shape(format!(
                "posterior mean {:?} and scale {:?} differ",
                mu.shape(),
                sigma.shape()
            )));
        }
        if !mu.is_finite() || !sigma.is_finite() || sigma.data().iter().any(|&s| s <= 0.0) {
            return Err(VarNetError::Domain(
                "posterior needs finite means and strictly positive finite scales".into(),
            ));
        }
        Ok(Self { mu, sigma })
    }

    pub fn d_z(&self) -> usize {
        self.mu.cols()
    }

    pub fn len(&self) -> usize {
        self.mu.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            mu: self.mu.select_rows(idx),
            sigma: self.sigma.select_rows(idx),
        }
    }
}

/// Draws `ε ~ N(0, I)` of the given shape.
pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// `z = μ + σ ⊙ ε` for a given noise tensor.
pub fn reparam_with_noise(post: &GaussianPosterior, eps: &Tensor) -> Tensor {
    let mut z = post.mu.clone();
    for ((zi, s), e) in z.data_mut().iter_mut().zip(post.sigma.data()).zip(eps.data()) {
        *zi += s * e;
    }
    z
}

/// One template sample per posterior row.
pub fn reparam_sample(post: &GaussianPosterior, rng: &mut impl Rng) -> Tensor {
    let eps = standard_normal(post.mu.rows(), post.mu.cols(), rng);
    reparam_with_noise(post, &eps)
}

/// `KL(q ‖ N(0, I))` per row: `½ Σⱼ (μⱼ² + σⱼ² − 1 − log σⱼ²)`.
pub fn gaussian_kl(post: &GaussianPosterior) -> Vec<f64> {
    (0..post.len())
        .map(|r| {
            post.mu
                .row(r)
                .iter()
                .zip(post.sigma.row(r))
                .map(|(m, s)| {
                    let v = s * s;
                    m * m + v - 1.0 - v.ln()
                })
                .sum::<f64>()
                * 0.5
        })
        .collect()
}

/// `log N(x; μ_x, σ_x² I)` for one input:
/// `−(D/2)·log(2π σ_x²) − ‖x − μ_x‖² / (2σ_x²)`.
pub fn gaussian_log_likelihood(x: &[f64], mu_x: &[f64], sigma_x: f64) -> Result<f64> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(VarNetError::Domain(format!("sigma_x must be positive, got {sigma_x}")));
    }
    if x.len() != mu_x.len() {
        return Err(VarNetError::Shape(format!(
            "input has {} elements but decoder mean has {}",
            x.len(),
            mu_x.len()
        )));
    }
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mu_x).map(|(a, b)| (a - b) * (a - b)).sum();
    let var = sigma_x * sigma_x;
    Ok(-0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var))
}
