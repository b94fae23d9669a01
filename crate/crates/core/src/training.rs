//! Alternating discriminator / encoder-decoder optimization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeSpec, PriorDraw};
use crate::autograd::{Graph, Var};
use crate::data::{Dataset, ExampleBatch};
use crate::error::{Result, VarNetError};
use crate::gaussian::standard_normal;
use crate::model::{ModelConfig, VarNet, DISC_CLAMP};
use crate::nn::Bind;
use crate::params::{Adam, AdamConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub beta: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub iters: u64,
    pub disc_optimizer: AdamConfig,
    pub encdec_optimizer: AdamConfig,
    /// Discriminator steps per encoder-decoder step.
    pub disc_steps: usize,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 10.0,
            batch_size: 64,
            iters: 3000,
            disc_optimizer: AdamConfig::default(),
            encdec_optimizer: AdamConfig::default(),
            disc_steps: 1,
            log_every: 50,
            checkpoint_every: 1000,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VarNetError::Config(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite nonnegative number");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite nonnegative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.disc_steps == 0 {
            return bad("disc_steps must be positive");
        }
        for opt in [&self.disc_optimizer, &self.encdec_optimizer] {
            if !(opt.lr > 0.0) || !(0.0..1.0).contains(&opt.beta1) || !(0.0..1.0).contains(&opt.beta2) {
                return bad("optimizer needs lr > 0 and betas in [0, 1)");
            }
        }
        Ok(())
    }
}

/// Both phases' objectives after one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub re_n: f64,
    pub kl_n: f64,
    pub r_disc_n: f64,
    pub l_disc_n: f64,
    pub total: f64,
}

/// Everything a training run mutates.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: VarNet,
    pub opt_disc: Adam,
    pub opt_encdec: Adam,
    pub step: u64,
    pub seed: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model: VarNet, hp: &HyperParams, seed: u64) -> Self {
        let disc = model.store.ids_where(|g| g.is_discriminator());
        let rest = model.store.ids_where(|g| !g.is_discriminator());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            opt_disc: Adam::new(hp.disc_optimizer, &model.store, disc),
            opt_encdec: Adam::new(hp.encdec_optimizer, &model.store, rest),
            model,
            step: 0,
            seed,
            rng,
        }
    }

    /// Fresh model and optimizers from a configuration.
    pub fn init(config: ModelConfig, spec: AttributeSpec, hp: &HyperParams, seed: u64) -> Result<Self> {
        Ok(Self::new(VarNet::new(config, spec, seed)?, hp, seed))
    }
}

fn clamp_score(p: f64) -> f64 {
    p.clamp(DISC_CLAMP, 1.0 - DISC_CLAMP)
}

fn check_scores(prior: &[f64], data: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(VarNetError::Batch("adversarial losses need at least one pair".into()));
    }
    if prior.len() != data.len() {
        return Err(VarNetError::Batch(format!(
            "{} prior scores but {} data scores",
            prior.len(),
            data.len()
        )));
    }
    Ok(())
}

/// `mean[log D(z, ψ_prior) + log(1 − D(z, ψ_data))]` from discriminator
/// scores; the discriminator maximizes it.
pub fn disc_loss_from_scores(prior: &[f64], data: &[f64]) -> Result<f64> {
    check_scores(prior, data)?;
    let s: f64 = prior
        .iter()
        .zip(data)
        .map(|(&p, &d)| clamp_score(p).ln() + (1.0 - clamp_score(d)).ln())
        .sum();
    Ok(s / prior.len() as f64)
}

/// `−mean[log D(z, ψ_data) + log(1 − D(z, ψ_prior))]`; the encoder-decoder
/// minimizes it.
pub fn encdec_adversarial_loss_from_scores(prior: &[f64], data: &[f64]) -> Result<f64> {
    check_scores(prior, data)?;
    let s: f64 = prior
        .iter()
        .zip(data)
        .map(|(&p, &d)| clamp_score(d).ln() + (1.0 - clamp_score(p)).ln())
        .sum();
    Ok(-s / prior.len() as f64)
}

fn check_pair_batches(z: &Tensor, psi_prior: &Tensor, psi_data: &Tensor) -> Result<()> {
    if z.rows() != psi_prior.rows() || z.rows() != psi_data.rows() {
        return Err(VarNetError::Batch(format!(
            "batch sizes differ: {} templates, {} prior and {} data attributes",
            z.rows(),
            psi_prior.rows(),
            psi_data.rows()
        )));
    }
    Ok(())
}

/// Discriminator objective of `model` on explicit pairs.
pub fn disc_loss(model: &VarNet, z: &Tensor, psi_prior: &Tensor, psi_data: &Tensor) -> Result<f64> {
    check_pair_batches(z, psi_prior, psi_data)?;
    disc_loss_from_scores(&model.discriminate(z, psi_prior)?, &model.discriminate(z, psi_data)?)
}

/// Adversarial term of the encoder-decoder objective on explicit pairs.
pub fn encdec_adversarial_loss(model: &VarNet, z: &Tensor, psi_prior: &Tensor, psi_data: &Tensor) -> Result<f64> {
    check_pair_batches(z, psi_prior, psi_data)?;
    encdec_adversarial_loss_from_scores(&model.discriminate(z, psi_prior)?, &model.discriminate(z, psi_data)?)
}

fn log1m(g: &mut Graph, p: Var) -> Var {
    let q = g.neg(p);
    let q = g.add_scalar(q, 1.0);
    g.log(q)
}

fn l_disc_graph(g: &mut Graph, d_prior: Var, d_data: Var) -> Var {
    let a = g.log(d_prior);
    let b = log1m(g, d_data);
    let s = g.add(a, b);
    g.mean_all(s)
}

fn r_disc_graph(g: &mut Graph, d_prior: Var, d_data: Var) -> Var {
    let a = g.log(d_data);
    let b = log1m(g, d_prior);
    let s = g.add(a, b);
    let m = g.mean_all(s);
    g.neg(m)
}

/// Randomness consumed by one phase: reparameterization noise and the prior
/// draw for `ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseNoise {
    pub eps: Tensor,
    pub prior: PriorDraw,
}

impl PhaseNoise {
    /// Fixed blocks shuffle the batch's own attributes.
    pub fn draw(model: &VarNet, n: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        Ok(Self {
            eps: standard_normal(n, model.d_z(), rng),
            prior: model.attributes.draw_prior(n, Some(n), rng)?,
        })
    }
}

struct Pass {
    x: Var,
    mu: Var,
    sigma: Var,
    log_sigma: Var,
    z: Var,
    psi_data: Var,
    psi_prior: Var,
}

fn forward_pass(model: &VarNet, g: &mut Graph, bind: &Bind<'_>, batch: &ExampleBatch, noise: &PhaseNoise) -> Result<Pass> {
    let x = g.constant(batch.x.clone());
    let enc = model.encode_graph(g, bind, x);
    let eps = g.constant(noise.eps.clone());
    let se = g.mul(enc.sigma, eps);
    let z = g.add(enc.mu, se);
    let eval = model.attributes.forward(g, bind, x, &batch.meta)?;
    let psi_prior = model
        .attributes
        .apply_prior(g, bind, &noise.prior, Some(&eval.blocks))?;
    Ok(Pass {
        x,
        mu: enc.mu,
        sigma: enc.sigma,
        log_sigma: enc.log_sigma,
        z,
        psi_data: eval.psi,
        psi_prior,
    })
}

/// `L_Disc` on the graph, templates detached from the encoder.
pub fn disc_objective(model: &VarNet, g: &mut Graph, bind: &Bind<'_>, batch: &ExampleBatch, noise: &PhaseNoise) -> Result<Var> {
    let p = forward_pass(model, g, bind, batch, noise)?;
    let z = g.detach(p.z);
    let d_prior = model.discriminate_graph(g, bind, z, p.psi_prior);
    let d_data = model.discriminate_graph(g, bind, z, p.psi_data);
    Ok(l_disc_graph(g, d_prior, d_data))
}

/// Graph nodes of the encoder-decoder objective.
#[derive(Clone, Copy, Debug)]
pub struct EncDecTerms {
    pub re: Var,
    pub kl: Var,
    /// Absent when the attribute spec is empty.
    pub r_disc: Option<Var>,
    pub total: Var,
}

/// `L_EncDec = RE + β·KL + γ·R_Disc`, each term a batch mean.
pub fn encdec_objective(
    model: &VarNet,
    g: &mut Graph,
    bind: &Bind<'_>,
    batch: &ExampleBatch,
    noise: &PhaseNoise,
    beta: f64,
    gamma: f64,
) -> Result<EncDecTerms> {
    let p = forward_pass(model, g, bind, batch, noise)?;
    let n = batch.len() as f64;
    let d = model.input_dim() as f64;
    let d_z = model.d_z() as f64;

    let mu_x = model.decode_graph(g, bind, p.z, p.psi_data);
    let diff = g.sub(p.x, mu_x);
    let sq = g.square(diff);
    let sq = g.sum_all(sq);
    let sq = g.scale(sq, 1.0 / n);
    let ls = bind.var(g, model.log_sigma_x);
    let m2 = g.scale(ls, -2.0);
    let inv_var = g.exp(m2);
    let fit = g.mul(sq, inv_var);
    let fit = g.scale(fit, 0.5);
    let norm = g.scale(ls, d);
    let re = g.add(fit, norm);
    let re = g.add_scalar(re, 0.5 * d * (2.0 * std::f64::consts::PI).ln());

    let mu2 = g.square(p.mu);
    let mu2 = g.sum_all(mu2);
    let var = g.square(p.sigma);
    let var = g.sum_all(var);
    let logs = g.sum_all(p.log_sigma);
    let logs = g.scale(logs, -2.0);
    let kl = g.add(mu2, var);
    let kl = g.add(kl, logs);
    let kl = g.scale(kl, 0.5 / n);
    let kl = g.add_scalar(kl, -0.5 * d_z);

    let weighted_kl = g.scale(kl, beta);
    let mut total = g.add(re, weighted_kl);
    let r_disc = if model.spec().is_empty() {
        None
    } else {
        let d_prior = model.discriminate_graph(g, bind, p.z, p.psi_prior);
        let d_data = model.discriminate_graph(g, bind, p.z, p.psi_data);
        let r = r_disc_graph(g, d_prior, d_data);
        let wr = g.scale(r, gamma);
        total = g.add(total, wr);
        Some(r)
    };
    Ok(EncDecTerms { re, kl, r_disc, total })
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VarNetError::numerics(term))
    }
}

fn validate_batch(model: &VarNet, batch: &ExampleBatch) -> Result<()> {
    batch.validate()?;
    if batch.x.cols() != model.input_dim() {
        return Err(VarNetError::Shape(format!(
            "batch has {} features, model expects {}",
            batch.x.cols(),
            model.input_dim()
        )));
    }
    model.spec().validate_metadata(&batch.meta, batch.len())
}

/// One discriminator phase followed by one encoder-decoder phase.
pub fn train_step(state: &mut TrainState, batch: &ExampleBatch, hp: &HyperParams) -> Result<LossReport> {
    let step = state.step + 1;
    train_step_inner(state, batch, hp).map_err(|e| e.at_step(step))
}

fn train_step_inner(state: &mut TrainState, batch: &ExampleBatch, hp: &HyperParams) -> Result<LossReport> {
    validate_batch(&state.model, batch)?;
    let mut l_disc_n = 0.0;
    if !state.model.spec().is_empty() {
        for _ in 0..hp.disc_steps {
            l_disc_n = disc_phase_inner(state, batch)?;
        }
    }
    let mut report = encdec_phase_inner(state, batch, hp)?;
    report.l_disc_n = l_disc_n;
    Ok(report)
}

/// One discriminator update (gradient ascent on `L_Disc`); returns `L_Disc`.
/// Only discriminator parameters move.
pub fn disc_phase(state: &mut TrainState, batch: &ExampleBatch) -> Result<f64> {
    let step = state.step + 1;
    validate_batch(&state.model, batch)
        .and_then(|_| disc_phase_inner(state, batch))
        .map_err(|e| e.at_step(step))
}

/// One encoder-decoder update and the step counter advance. The report's
/// `l_disc_n` is left at zero. Discriminator parameters do not move.
pub fn encdec_phase(state: &mut TrainState, batch: &ExampleBatch, hp: &HyperParams) -> Result<LossReport> {
    let step = state.step + 1;
    validate_batch(&state.model, batch)
        .and_then(|_| encdec_phase_inner(state, batch, hp))
        .map_err(|e| e.at_step(step))
}

fn disc_phase_inner(state: &mut TrainState, batch: &ExampleBatch) -> Result<f64> {
    if state.model.spec().is_empty() {
        return Err(VarNetError::Spec("a model without attributes has no discriminator phase".into()));
    }
    let noise = PhaseNoise::draw(&state.model, batch.len(), &mut state.rng)?;
    let (l_disc_n, grads) = {
        let mut g = Graph::new();
        let bind = Bind::discriminator_only(&state.model.store);
        let l = disc_objective(&state.model, &mut g, &bind, batch, &noise)?;
        let v = finite("l_disc", g.value(l).item())?;
        let ascent = g.neg(l);
        (v, g.backward(ascent))
    };
    check_grads(&grads)?;
    state.opt_disc.step(&mut state.model.store, |id| grads.param(id));
    Ok(l_disc_n)
}

fn encdec_phase_inner(state: &mut TrainState, batch: &ExampleBatch, hp: &HyperParams) -> Result<LossReport> {
    let noise = PhaseNoise::draw(&state.model, batch.len(), &mut state.rng)?;
    let (report, grads) = {
        let mut g = Graph::new();
        let bind = Bind::except_discriminator(&state.model.store);
        let t = encdec_objective(&state.model, &mut g, &bind, batch, &noise, hp.beta, hp.gamma)?;
        let re_n = finite("re", g.value(t.re).item())?;
        let kl_n = finite("kl", g.value(t.kl).item())?;
        let r_disc_n = match t.r_disc {
            Some(r) => finite("r_disc", g.value(r).item())?,
            None => 0.0,
        };
        let total = finite("total", g.value(t.total).item())?;
        let report = LossReport {
            step: state.step + 1,
            re_n,
            kl_n,
            r_disc_n,
            l_disc_n: 0.0,
            total,
        };
        (report, g.backward(t.total))
    };
    check_grads(&grads)?;
    state.opt_encdec.step(&mut state.model.store, |id| grads.param(id));
    state.step += 1;
    Ok(report)
}

fn check_grads(grads: &crate::autograd::Gradients) -> Result<()> {
    if grads.params().all(|(_, t)| t.is_finite()) {
        Ok(())
    } else {
        Err(VarNetError::numerics("gradient"))
    }
}

/// Hooks called by [`fit`].
pub trait Observer {
    /// Every `log_every` steps and at the last step.
    fn report(&mut self, _report: &LossReport) -> Result<()> {
        Ok(())
    }

    /// Every `checkpoint_every` steps and at exit, after the reference bank
    /// has been refreshed.
    fn checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// Runs [`train_step`] until `hp.iters` total steps. Batch order depends only
/// on `(state.seed, step)`, so a resumed run sees the same batches.
pub fn fit(state: &mut TrainState, data: &Dataset, hp: &HyperParams, obs: &mut dyn Observer) -> Result<Vec<LossReport>> {
    hp.validate()?;
    if data.is_empty() {
        return Err(VarNetError::Batch("dataset is empty".into()));
    }
    let per_epoch = data.batches_per_epoch(hp.batch_size) as u64;
    let mut reports = Vec::new();
    let mut order = Vec::new();
    let mut order_epoch = u64::MAX;
    while state.step < hp.iters {
        let (epoch, b) = (state.step / per_epoch, (state.step % per_epoch) as usize);
        if epoch != order_epoch {
            order = data.epoch_order(state.seed, epoch);
            order_epoch = epoch;
        }
        let end = ((b + 1) * hp.batch_size).min(order.len());
        let batch = data.batch(&order[b * hp.batch_size..end]);
        let report = train_step(state, &batch, hp)?;
        let last = state.step == hp.iters;
        if (hp.log_every > 0 && state.step.is_multiple_of(hp.log_every)) || last {
            obs.report(&report)?;
        }
        reports.push(report);
        if (hp.checkpoint_every > 0 && state.step.is_multiple_of(hp.checkpoint_every)) || last {
            state.model.refresh_reference(&data.x, &data.meta)?;
            obs.checkpoint(state)?;
        }
    }
    state.model.refresh_reference(&data.x, &data.meta)?;
    Ok(reports)
}

/// Posterior means of every example, as a representation dataset of shape
/// `[1, 1, d_z]` carrying the original metadata.
pub fn encode_dataset(model: &VarNet, data: &Dataset) -> Result<Dataset> {
    let mut parts = Vec::new();
    for start in (0..data.len()).step_by(512) {
        let chunk = data.range(start, 512);
        parts.push(model.encode(&chunk.x)?.mu);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    let mu = Tensor::concat_rows(&refs)?;
    Ok(Dataset {
        id: format!("{}@latent", data.id),
        shape: [1, 1, model.d_z()],
        x: mu,
        meta: data.meta.clone(),
        label_counts: data.label_counts.clone(),
    })
}

/// Identifies the first-stage model a second-stage model was trained on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linkage {
    pub stage1_fingerprint: String,
    pub stage1_d_z: usize,
    pub stage1_input_shape: [usize; 3],
    pub dataset: String,
}

/// Plain VAE first, then a VarNet on its posterior means.
pub fn two_stage_fit(
    stage1: &mut TrainState,
    hp1: &HyperParams,
    stage2: &mut TrainState,
    hp2: &HyperParams,
    data: &Dataset,
    obs1: &mut dyn Observer,
    obs2: &mut dyn Observer,
) -> Result<(Linkage, Vec<LossReport>, Vec<LossReport>)> {
    if !stage1.model.spec().is_empty() || hp1.gamma != 0.0 {
        return Err(VarNetError::Pipeline(
            "the first stage must be a plain autoencoder: empty attribute spec and gamma = 0".into(),
        ));
    }
    let r1 = fit(stage1, data, hp1, obs1)?;
    let (latent, linkage) = stage_two_inputs(&stage1.model, data)?;
    if stage2.model.input_dim() != latent.input_dim() {
        return Err(VarNetError::Pipeline(format!(
            "second stage reads {} features but the first stage has d_z = {}",
            stage2.model.input_dim(),
            latent.input_dim()
        )));
    }
    let r2 = fit(stage2, &latent, hp2, obs2)?;
    Ok((linkage, r1, r2))
}

/// Representation dataset and linkage record for a trained first stage.
pub fn stage_two_inputs(stage1: &VarNet, data: &Dataset) -> Result<(Dataset, Linkage)> {
    let latent = encode_dataset(stage1, data)?;
    let linkage = Linkage {
        stage1_fingerprint: crate::checkpoint::fingerprint(&stage1.store),
        stage1_d_z: stage1.d_z(),
        stage1_input_shape: stage1.config.input_shape,
        dataset: data.id.clone(),
    };
    Ok((latent, linkage))
}

/// Decodes second-stage outputs through the first-stage decoder.
pub fn decode_two_stage(stage2: &VarNet, stage1: &VarNet, z: &Tensor, psi: &Tensor) -> Result<Tensor> {
    let latent = stage2.decode(z, psi)?.mu;
    Ok(stage1.decode(&latent, &Tensor::zeros(latent.rows(), 0))?.mu)
}
