//! The three networks: stochastic encoder `q(z|x)`, attribute-conditioned
//! decoder `p(x|z,ψ)`, and the pair discriminator `D(z,ψ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeFunction, AttributeSpec};
use crate::autograd::{Graph, Var};
use crate::conv::ConvGeometry;
use crate::data::Metadata;
use crate::error::{Result, VarNetError};
use crate::gaussian::{GaussianPosterior, SIGMA_Z_MAX, SIGMA_Z_MIN};
use crate::nn::{Activation, Bind, Conv2d, Linear, Mlp, Modulation, ResBlock, LEAKY_SLOPE};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Discriminator outputs are clamped to `[ε, 1 − ε]` so both logs stay finite.
pub const DISC_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetConfig {
    Mlp {
        hidden: Vec<usize>,
    },
    /// Strided 3×3 convolutions, one stage per entry, each halving the
    /// spatial size; optionally followed by a residual block.
    Conv {
        channels: Vec<usize>,
        #[serde(default = "yes")]
        residual: bool,
    },
}

fn yes() -> bool {
    true
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::Mlp { hidden: vec![256] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 256],
        }
    }
}

fn sigmoid_output() -> Activation {
    Activation::Sigmoid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_z: usize,
    /// `[channels, height, width]`; representation vectors use `[1, 1, D]`.
    pub input_shape: [usize; 3],
    #[serde(default)]
    pub encoder: NetConfig,
    #[serde(default)]
    pub decoder: NetConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    /// Output nonlinearity of the decoder mean.
    #[serde(default = "sigmoid_output")]
    pub output: Activation,
    /// Also feed `ψ` to the decoder input next to `z`.
    #[serde(default = "yes")]
    pub concat_psi_input: bool,
    /// Marks a model trained on a first-stage autoencoder's posterior means.
    #[serde(default)]
    pub two_stage: bool,
}

impl ModelConfig {
    /// Small all-MLP configuration.
    pub fn mlp(d_z: usize, input_shape: [usize; 3], hidden: usize) -> Self {
        Self {
            d_z,
            input_shape,
            encoder: NetConfig::Mlp { hidden: vec![hidden] },
            decoder: NetConfig::Mlp { hidden: vec![hidden] },
            discriminator: DiscriminatorConfig::default(),
            output: Activation::Sigmoid,
            concat_psi_input: true,
            two_stage: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(VarNetError::Config(m));
        if self.d_z == 0 {
            return err("d_z must be at least 1".into());
        }
        if self.input_shape.contains(&0) {
            return err(format!("input_shape {:?} has a zero dimension", self.input_shape));
        }
        for (name, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            match net {
                NetConfig::Mlp { hidden } if hidden.contains(&0) => {
                    return err(format!("{name}: hidden widths must be positive"));
                }
                NetConfig::Conv { channels, .. } => {
                    if channels.is_empty() || channels.contains(&0) {
                        return err(format!("{name}: conv channels must be a non-empty list of positive counts"));
                    }
                    let f = 1 << channels.len();
                    let [_, h, w] = self.input_shape;
                    if h % f != 0 || w % f != 0 {
                        return err(format!(
                            "{name}: {}×{} inputs are not divisible by 2^{} for {} conv stages",
                            h,
                            w,
                            channels.len(),
                            channels.len()
                        ));
                    }
                }
                _ => {}
            }
        }
        if self.discriminator.hidden.contains(&0) {
            return err("discriminator hidden widths must be positive".into());
        }
        Ok(())
    }
}

/// Graph values of an encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOut {
    pub mu: Var,
    /// Clamped `log σ_z`.
    pub log_sigma: Var,
    pub sigma: Var,
}

#[derive(Clone, Debug)]
enum EncoderTrunk {
    Mlp(Vec<Linear>),
    Conv(Vec<(Conv2d, Option<ResBlock>)>),
}

#[derive(Clone, Debug)]
pub struct Encoder {
    trunk: EncoderTrunk,
    head: Linear,
    d_z: usize,
}

impl Encoder {
    fn new(config: &ModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let group = ParamGroup::Encoder;
        let [c, h, w] = config.input_shape;
        let (trunk, feat) = match &config.encoder {
            NetConfig::Mlp { hidden } => {
                let mut fan_in = config.input_dim();
                let mut layers = Vec::new();
                for (i, &width) in hidden.iter().enumerate() {
                    layers.push(Linear::new(store, &format!("enc.mlp.{i}"), group, fan_in, width, rng));
                    fan_in = width;
                }
                (EncoderTrunk::Mlp(layers), fan_in)
            }
            NetConfig::Conv { channels, residual } => {
                let (mut ic, mut ih, mut iw) = (c, h, w);
                let mut stages = Vec::new();
                for (i, &oc) in channels.iter().enumerate() {
                    let geom = ConvGeometry {
                        in_c: ic,
                        in_h: ih,
                        in_w: iw,
                        out_c: oc,
                        kernel: 3,
                        stride: 2,
                        pad: 1,
                    };
                    let conv = Conv2d::new(store, &format!("enc.conv.{i}"), group, geom, rng);
                    let (oh, ow) = (geom.out_h(), geom.out_w());
                    let res = residual.then(|| ResBlock::new(store, &format!("enc.res.{i}"), group, oc, oh, ow, rng));
                    stages.push((conv, res));
                    (ic, ih, iw) = (oc, oh, ow);
                }
                (EncoderTrunk::Conv(stages), ic * ih * iw)
            }
        };
        let head = Linear::new(store, "enc.head", group, feat, 2 * config.d_z, rng);
        Self {
            trunk,
            head,
            d_z: config.d_z,
        }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var) -> EncoderOut {
        let mut h = x;
        match &self.trunk {
            EncoderTrunk::Mlp(layers) => {
                for l in layers {
                    h = l.forward(g, bind, h);
                    h = g.leaky_relu(h, LEAKY_SLOPE);
                }
            }
            EncoderTrunk::Conv(stages) => {
                for (conv, res) in stages {
                    h = conv.forward(g, bind, h);
                    h = g.leaky_relu(h, LEAKY_SLOPE);
                    if let Some(r) = res {
                        h = r.forward(g, bind, h);
                    }
                }
            }
        }
        let out = self.head.forward(g, bind, h);
        let mu = g.slice_cols(out, 0, self.d_z);
        let raw = g.slice_cols(out, self.d_z, self.d_z);
        let log_sigma = g.clamp(raw, SIGMA_Z_MIN.ln(), SIGMA_Z_MAX.ln());
        let sigma = g.exp(log_sigma);
        EncoderOut { mu, log_sigma, sigma }
    }
}

#[derive(Clone, Debug)]
struct UpStage {
    conv: Conv2d,
    modulation: Modulation,
    in_c: usize,
    in_h: usize,
    in_w: usize,
}

#[derive(Clone, Debug)]
enum DecoderNet {
    Mlp {
        hidden: Vec<(Linear, Modulation)>,
        out: Linear,
    },
    Conv {
        input: Linear,
        input_mod: Modulation,
        stages: Vec<UpStage>,
        out: Conv2d,
    },
}

#[derive(Clone, Debug)]
pub struct Decoder {
    net: DecoderNet,
    output: Activation,
    concat_psi: bool,
}

impl Decoder {
    fn new(config: &ModelConfig, d_psi: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let group = ParamGroup::Decoder;
        let in_dim = config.d_z + if config.concat_psi_input { d_psi } else { 0 };
        let [c, h, w] = config.input_shape;
        let net = match &config.decoder {
            NetConfig::Mlp { hidden } => {
                let mut fan_in = in_dim;
                let mut layers = Vec::new();
                for (i, &width) in hidden.iter().enumerate() {
                    let lin = Linear::new(store, &format!("dec.mlp.{i}"), group, fan_in, width, rng);
                    let m = Modulation::new(store, &format!("dec.mod.{i}"), group, d_psi, width, rng);
                    layers.push((lin, m));
                    fan_in = width;
                }
                let out = Linear::new(store, "dec.out", group, fan_in, config.input_dim(), rng);
                DecoderNet::Mlp { hidden: layers, out }
            }
            NetConfig::Conv { channels, .. } => {
                let levels = channels.len();
                let (bh, bw) = (h >> levels, w >> levels);
                let c0 = channels[0];
                let input = Linear::new(store, "dec.input", group, in_dim, c0 * bh * bw, rng);
                let input_mod = Modulation::new(store, "dec.input_mod", group, d_psi, c0, rng);
                let mut stages = Vec::new();
                let (mut ic, mut ih, mut iw) = (c0, bh, bw);
                for i in 0..levels {
                    let oc = channels.get(i + 1).copied().unwrap_or(channels[levels - 1]);
                    let geom = ConvGeometry {
                        in_c: ic,
                        in_h: 2 * ih,
                        in_w: 2 * iw,
                        out_c: oc,
                        kernel: 3,
                        stride: 1,
                        pad: 1,
                    };
                    stages.push(UpStage {
                        conv: Conv2d::new(store, &format!("dec.conv.{i}"), group, geom, rng),
                        modulation: Modulation::new(store, &format!("dec.mod.{i}"), group, d_psi, oc, rng),
                        in_c: ic,
                        in_h: ih,
                        in_w: iw,
                    });
                    (ic, ih, iw) = (oc, 2 * ih, 2 * iw);
                }
                let out_geom = ConvGeometry {
                    in_c: ic,
                    in_h: ih,
                    in_w: iw,
                    out_c: c,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                };
                let out = Conv2d::new(store, "dec.out", group, out_geom, rng);
                DecoderNet::Conv {
                    input,
                    input_mod,
                    stages,
                    out,
                }
            }
        };
        Self {
            net,
            output: config.output,
            concat_psi: config.concat_psi_input,
        }
    }

    /// Decoder mean `μ_x(z, ψ)`.
    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, z: Var, psi: Var) -> Var {
        let inp = if self.concat_psi && g.shape(psi).1 > 0 {
            g.concat_cols(&[z, psi])
        } else {
            z
        };
        let h = match &self.net {
            DecoderNet::Mlp { hidden, out } => {
                let mut h = inp;
                for (lin, m) in hidden {
                    h = lin.forward(g, bind, h);
                    h = m.forward(g, bind, h, psi);
                    h = g.leaky_relu(h, LEAKY_SLOPE);
                }
                out.forward(g, bind, h)
            }
            DecoderNet::Conv {
                input,
                input_mod,
                stages,
                out,
            } => {
                let mut h = input.forward(g, bind, inp);
                h = input_mod.forward(g, bind, h, psi);
                h = g.leaky_relu(h, LEAKY_SLOPE);
                for s in stages {
                    h = g.upsample2x(h, s.in_c, s.in_h, s.in_w);
                    h = s.conv.forward(g, bind, h);
                    h = s.modulation.forward(g, bind, h, psi);
                    h = g.leaky_relu(h, LEAKY_SLOPE);
                }
                out.forward(g, bind, h)
            }
        };
        self.output.apply(g, h)
    }

    fn modulations(&self) -> Vec<&Modulation> {
        match &self.net {
            DecoderNet::Mlp { hidden, .. } => hidden.iter().map(|(_, m)| m).collect(),
            DecoderNet::Conv { input_mod, stages, .. } => std::iter::once(input_mod)
                .chain(stages.iter().map(|s| &s.modulation))
                .collect(),
        }
    }

    fn input_layer(&self) -> &Linear {
        match &self.net {
            DecoderNet::Mlp { hidden, out } => hidden.first().map_or(out, |(l, _)| l),
            DecoderNet::Conv { input, .. } => input,
        }
    }
}

/// Decoder output: the Gaussian mean and the shared scale.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput {
    pub mu: Tensor,
    pub sigma_x: f64,
}

#[derive(Clone, Debug)]
pub struct VarNet {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub attributes: AttributeFunction,
    pub discriminator: Mlp,
    /// Learnable `log σ_x`.
    pub log_sigma_x: ParamId,
    /// Per-block reference attributes that fixed-block priors permute;
    /// empty until [`VarNet::refresh_reference`] runs.
    pub reference: Vec<Tensor>,
}

impl VarNet {
    /// Builds and initializes every network from `seed`.
    pub fn new(config: ModelConfig, spec: AttributeSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d_psi = spec.total_dim();
        let encoder = Encoder::new(&config, &mut store, &mut rng);
        let decoder = Decoder::new(&config, d_psi, &mut store, &mut rng);
        let log_sigma_x = store.add("dec.log_sigma_x", ParamGroup::Decoder, Tensor::scalar(0.0));
        let attributes = AttributeFunction::new(spec, config.input_dim(), &mut store, &mut rng);
        let mut widths = vec![config.d_z + d_psi];
        widths.extend_from_slice(&config.discriminator.hidden);
        widths.push(1);
        let discriminator = Mlp::new(
            &mut store,
            "disc",
            ParamGroup::Discriminator,
            &widths,
            Activation::LeakyRelu,
            Activation::Sigmoid,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            attributes,
            discriminator,
            log_sigma_x,
            reference: Vec::new(),
        })
    }

    /// Rows kept in the reference bank.
    pub const REFERENCE_ROWS: usize = 512;

    /// Caches `f` evaluated on (up to [`Self::REFERENCE_ROWS`] of) the given
    /// examples, block by block. Free blocks keep an empty tensor.
    pub fn refresh_reference(&mut self, x: &Tensor, meta: &Metadata) -> Result<()> {
        if !self.spec().blocks().iter().any(|b| b.needs_reference()) {
            self.reference.clear();
            return Ok(());
        }
        let k = x.rows().min(Self::REFERENCE_ROWS);
        let idx: Vec<usize> = (0..k).collect();
        let (x, meta) = (x.select_rows(&idx), meta.select(&idx));
        let mut g = Graph::new();
        let xv = g.constant(x);
        let eval = self.attributes.forward(&mut g, &Bind::frozen(&self.store), xv, &meta)?;
        self.reference = eval
            .blocks
            .iter()
            .zip(self.spec().blocks())
            .map(|(&b, block)| {
                if block.needs_reference() {
                    g.value(b).clone()
                } else {
                    Tensor::zeros(0, block.d_psi())
                }
            })
            .collect();
        Ok(())
    }

    /// `n` draws from `p(ψ)`, fixed blocks permuting the reference bank.
    pub fn sample_prior(&self, n: usize, rng: &mut impl rand::Rng) -> Result<Tensor> {
        self.attributes
            .sample_prior_from_bank(&self.store, &self.reference, n, rng)
    }

    pub fn spec(&self) -> &AttributeSpec {
        &self.attributes.spec
    }

    pub fn d_z(&self) -> usize {
        self.config.d_z
    }

    pub fn d_psi(&self) -> usize {
        self.spec().total_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn sigma_x(&self) -> f64 {
        self.store.value(self.log_sigma_x).item().exp()
    }

    fn check_cols(&self, what: &str, t: &Tensor, cols: usize) -> Result<()> {
        if t.cols() != cols {
            return Err(VarNetError::Shape(format!("{what} has {} features, expected {cols}", t.cols())));
        }
        Ok(())
    }

    pub fn encode_graph(&self, g: &mut Graph, bind: &Bind<'_>, x: Var) -> EncoderOut {
        self.encoder.forward(g, bind, x)
    }

    pub fn decode_graph(&self, g: &mut Graph, bind: &Bind<'_>, z: Var, psi: Var) -> Var {
        self.decoder.forward(g, bind, z, psi)
    }

    /// Clamped `D(z, ψ)`, shape `[n, 1]`.
    pub fn discriminate_graph(&self, g: &mut Graph, bind: &Bind<'_>, z: Var, psi: Var) -> Var {
        let inp = if g.shape(psi).1 > 0 { g.concat_cols(&[z, psi]) } else { z };
        let p = self.discriminator.forward(g, bind, inp);
        g.clamp(p, DISC_CLAMP, 1.0 - DISC_CLAMP)
    }

    /// Posterior `q(z|x)` for a batch of flattened inputs.
    pub fn encode(&self, x: &Tensor) -> Result<GaussianPosterior> {
        self.check_cols("input", x, self.input_dim())?;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = self.encode_graph(&mut g, &Bind::frozen(&self.store), xv);
        GaussianPosterior::new(g.value(out.mu).clone(), g.value(out.sigma).clone())
    }

    /// Decoder mean for templates `z` and attributes `psi`.
    pub fn decode(&self, z: &Tensor, psi: &Tensor) -> Result<DecoderOutput> {
        self.check_cols("template", z, self.d_z())?;
        self.check_cols("attribute", psi, self.d_psi())?;
        if z.rows() != psi.rows() {
            return Err(VarNetError::Shape(format!(
                "{} templates but {} attributes",
                z.rows(),
                psi.rows()
            )));
        }
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let pv = g.constant(psi.clone());
        let mu = self.decode_graph(&mut g, &Bind::frozen(&self.store), zv, pv);
        Ok(DecoderOutput {
            mu: g.value(mu).clone(),
            sigma_x: self.sigma_x(),
        })
    }

    /// `ψ = f(x, m)`.
    pub fn attributes_of(&self, x: &Tensor, meta: &Metadata) -> Result<Tensor> {
        self.check_cols("input", x, self.input_dim())?;
        self.attributes.eval(&self.store, x, meta)
    }

    /// Scores `D(z, ψ) ∈ [ε, 1 − ε]`, one per row.
    pub fn discriminate(&self, z: &Tensor, psi: &Tensor) -> Result<Vec<f64>> {
        self.check_cols("template", z, self.d_z())?;
        self.check_cols("attribute", psi, self.d_psi())?;
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let pv = g.constant(psi.clone());
        let p = self.discriminate_graph(&mut g, &Bind::frozen(&self.store), zv, pv);
        Ok(g.value(p).data().to_vec())
    }

    /// Parameters that read `ψ` inside the decoder: the modulation maps and
    /// the `ψ` columns of the input layer.
    pub fn ablate_conditioning(&mut self) {
        let mods: Vec<ParamId> = self
            .decoder
            .modulations()
            .iter()
            .flat_map(|m| m.conditioning_weights())
            .collect();
        for id in mods {
            let t = self.store.value_mut(id);
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        if self.config.concat_psi_input {
            let d_z = self.d_z();
            let w = self.decoder.input_layer().weight;
            let t = self.store.value_mut(w);
            for r in d_z..t.rows() {
                t.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Copies parameter values from `other` by name; shapes must agree.
    pub fn load_params(&mut self, values: impl IntoIterator<Item = (String, Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.store.len()];
        for (name, value) in values {
            let id = self
                .store
                .find(&name)
                .ok_or_else(|| VarNetError::Format(format!("unknown parameter `{name}`")))?;
            let slot = self.store.value_mut(id);
            if slot.shape() != value.shape() {
                return Err(VarNetError::Format(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value;
            seen[id.index()] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(VarNetError::Format(format!(
                "parameter `{}` missing",
                self.store.entries()[i].name
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::{AlphaPrior, AttributeBlock};

    fn spec() -> AttributeSpec {
        AttributeSpec::new(vec![
            AttributeBlock::Free {
                d: 2,
                d_psi: 3,
                attention_hidden: vec![8],
                nu_alpha: AlphaPrior::Uniform,
            },
            AttributeBlock::FixedDiscrete {
                m: 4,
                d_psi: 2,
                field: 0,
                vocabulary: None,
            },
        ])
        .unwrap()
    }

    fn conv_config() -> ModelConfig {
        ModelConfig {
            d_z: 4,
            input_shape: [1, 8, 8],
            encoder: NetConfig::Conv {
                channels: vec![4, 6],
                residual: true,
            },
            decoder: NetConfig::Conv {
                channels: vec![6, 4],
                residual: false,
            },
            discriminator: DiscriminatorConfig { hidden: vec![8, 8, 8] },
            output: Activation::Sigmoid,
            concat_psi_input: true,
            two_stage: false,
        }
    }

    #[test]
    fn conv_model_shapes() {
        let net = VarNet::new(conv_config(), spec(), 0).unwrap();
        let x = Tensor::filled(3, 64, 0.0);
        let post = net.encode(&x).unwrap();
        assert_eq!(post.mu.shape(), (3, 4));
        assert!(post.sigma.data().iter().all(|&s| s > 0.0));
        let psi = Tensor::filled(3, 5, 0.1);
        let out = net.decode(&post.mu, &psi).unwrap();
        assert_eq!(out.mu.shape(), (3, 64));
        assert!(out.mu.is_finite());
        assert_eq!(out.sigma_x, 1.0);
    }

    #[test]
    fn shape_errors() {
        let net = VarNet::new(ModelConfig::mlp(4, [1, 4, 4], 8), spec(), 0).unwrap();
        assert!(matches!(net.encode(&Tensor::zeros(1, 15)), Err(VarNetError::Shape(_))));
        assert!(matches!(
            net.decode(&Tensor::zeros(1, 4), &Tensor::zeros(1, 4)),
            Err(VarNetError::Shape(_))
        ));
        assert!(matches!(
            net.discriminate(&Tensor::zeros(1, 3), &Tensor::zeros(1, 5)),
            Err(VarNetError::Shape(_))
        ));
    }

    #[test]
    fn indivisible_conv_input_rejected() {
        let mut c = conv_config();
        c.input_shape = [1, 10, 10];
        assert!(matches!(VarNet::new(c, spec(), 0), Err(VarNetError::Config(_))));
    }

    #[test]
    fn ablation_removes_attribute_dependence() {
        let mut net = VarNet::new(conv_config(), spec(), 3).unwrap();
        let z = Tensor::row_vector(vec![0.1, -0.3, 0.5, 0.2]);
        let a = net.decode(&z, &Tensor::row_vector(vec![1.0, 0.0, -1.0, 0.5, 0.5])).unwrap();
        let b = net.decode(&z, &Tensor::row_vector(vec![-1.0, 2.0, 0.0, 0.0, 1.5])).unwrap();
        assert_ne!(a.mu, b.mu);
        net.ablate_conditioning();
        let a = net.decode(&z, &Tensor::row_vector(vec![1.0, 0.0, -1.0, 0.5, 0.5])).unwrap();
        let b = net.decode(&z, &Tensor::row_vector(vec![-1.0, 2.0, 0.0, 0.0, 1.5])).unwrap();
        assert_eq!(a.mu, b.mu);
    }

    #[test]
    fn parameter_names_are_stable_across_builds() {
        let a = VarNet::new(conv_config(), spec(), 1).unwrap();
        let b = VarNet::new(conv_config(), spec(), 2).unwrap();
        let na: Vec<_> = a.store.entries().iter().map(|e| e.name.clone()).collect();
        let nb: Vec<_> = b.store.entries().iter().map(|e| e.name.clone()).collect();
        assert_eq!(na, nb);
        assert_ne!(a.store, b.store);
    }
}
