//! Layers built on the autodiff graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::conv::ConvGeometry;
use crate::params::{fan_in_uniform, normal_init, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

/// Decides, per parameter group, whether parameters enter the graph as
/// trainable leaves or as frozen constants.
#[derive(Clone, Copy)]
pub struct Bind<'a> {
    pub store: &'a ParamStore,
    trainable: fn(ParamGroup) -> bool,
}

impl<'a> Bind<'a> {
    pub fn new(store: &'a ParamStore, trainable: fn(ParamGroup) -> bool) -> Self {
        Self { store, trainable }
    }

    /// Nothing trainable: pure forward evaluation.
    pub fn frozen(store: &'a ParamStore) -> Self {
        Self::new(store, |_| false)
    }

    /// Everything trainable.
    pub fn all(store: &'a ParamStore) -> Self {
        Self::new(store, |_| true)
    }

    pub fn discriminator_only(store: &'a ParamStore) -> Self {
        Self::new(store, ParamGroup::is_discriminator)
    }

    pub fn except_discriminator(store: &'a ParamStore) -> Self {
        Self::new(store, |g| !g.is_discriminator())
    }

    pub fn var(&self, g: &mut Graph, id: ParamId) -> Var {
        if (self.trainable)(self.store.entry(id).group) {
            g.param(self.store, id)
        } else {
            g.frozen_param(self.store, id)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Self::Identity => x,
            Self::Relu => g.relu(x),
            Self::LeakyRelu => g.leaky_relu(x, LEAKY_SLOPE),
            Self::Sigmoid => g.sigmoid(x),
            Self::Tanh => g.tanh(x),
        }
    }
}

/// `y = x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = fan_in_uniform(fan_in, fan_out, fan_in, rng).map(|v| v / 2f64.sqrt());
        Self::with_init(store, name, group, w, Tensor::zeros(1, fan_out))
    }

    pub fn with_init(store: &mut ParamStore, name: &str, group: ParamGroup, weight: Tensor, bias: Tensor) -> Self {
        let (fan_in, fan_out) = weight.shape();
        assert_eq!(bias.shape(), (1, fan_out));
        Self {
            weight: store.add(format!("{name}.weight"), group, weight),
            bias: store.add(format!("{name}.bias"), group, bias),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var) -> Var {
        let w = bind.var(g, self.weight);
        let b = bind.var(g, self.bias);
        let h = g.matmul(x, w);
        g.add_row(h, b)
    }
}

/// Stack of linear layers with a shared hidden activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), group, w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, bind, x);
            x = if i == last {
                self.output.apply(g, x)
            } else {
                self.hidden.apply(g, x)
            };
        }
        x
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeometry,
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, geom: ConvGeometry, rng: &mut impl Rng) -> Self {
        let fan_in = geom.patch_len();
        let w = fan_in_uniform(geom.out_c, fan_in, fan_in, rng).map(|v| v / 2f64.sqrt());
        Self {
            weight: store.add(format!("{name}.weight"), group, w),
            bias: store.add(format!("{name}.bias"), group, Tensor::zeros(1, geom.out_c)),
            geom,
        }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var) -> Var {
        let w = bind.var(g, self.weight);
        let b = bind.var(g, self.bias);
        g.conv2d(x, w, b, self.geom)
    }
}

/// Two 3×3 same-padding convolutions with an identity skip.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub first: Conv2d,
    pub second: Conv2d,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Self {
        let geom = ConvGeometry {
            in_c: c,
            in_h: h,
            in_w: w,
            out_c: c,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        Self {
            first: Conv2d::new(store, &format!("{name}.conv0"), group, geom, rng),
            second: Conv2d::new(store, &format!("{name}.conv1"), group, geom, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var) -> Var {
        let h = self.first.forward(g, bind, x);
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.second.forward(g, bind, h);
        let s = g.add(x, h);
        g.leaky_relu(s, LEAKY_SLOPE)
    }
}

/// Feature-wise affine modulation of normalized activations by a
/// conditioning vector: `scale(c)`, `shift(c)` are per-channel linear maps.
#[derive(Clone, Debug)]
pub struct Modulation {
    pub scale: Linear,
    pub shift: Linear,
    pub channels: usize,
}

impl Modulation {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        cond_dim: usize,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let std = 1.0 / (cond_dim.max(1) as f64).sqrt();
        let scale = Linear::with_init(
            store,
            &format!("{name}.scale"),
            group,
            normal_init(cond_dim, channels, std, rng),
            Tensor::filled(1, channels, 1.0),
        );
        let shift = Linear::with_init(
            store,
            &format!("{name}.shift"),
            group,
            normal_init(cond_dim, channels, std, rng),
            Tensor::zeros(1, channels),
        );
        Self {
            scale,
            shift,
            channels,
        }
    }

    /// Normalizes `x` per sample, then applies the modulation computed from `cond`.
    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var, cond: Var) -> Var {
        let n = g.layer_norm(x, NORM_EPS);
        let s = self.scale.forward(g, bind, cond);
        let b = self.shift.forward(g, bind, cond);
        g.channel_affine(n, s, b, self.channels)
    }

    /// Weights that read the conditioning vector.
    pub fn conditioning_weights(&self) -> [ParamId; 2] {
        [self.scale.weight, self.shift.weight]
    }
}

/// Softmax cross-entropy averaged over the batch; `labels[i] < k`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Var {
    let (n, k) = g.shape(logits);
    let lv = g.value(logits);
    let maxes: Vec<f64> = (0..n)
        .map(|r| lv.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let ones = g.constant(Tensor::filled(1, k, 1.0));
    let m = g.constant(Tensor::from_vec(n, 1, maxes).unwrap());
    let mb = g.matmul(m, ones);
    let shifted = g.sub(logits, mb);
    let e = g.exp(shifted);
    let s = g.sum_rows(e);
    let lse = g.log(s);
    let lse_b = g.matmul(lse, ones);
    let logp = g.sub(shifted, lse_b);
    let mut mask = Tensor::zeros(n, k);
    for (i, &l) in labels.iter().enumerate() {
        mask.set(i, l, -1.0 / n as f64);
    }
    let mask = g.constant(mask);
    let picked = g.mul(logp, mask);
    g.sum_all(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::zeros(3, 4));
        let l = cross_entropy(&mut g, logits, &[0, 1, 3]);
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn frozen_bind_collects_no_param_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", ParamGroup::Encoder, 3, 2, &mut rng);
        let mut g = Graph::new();
        let x = g.input(Tensor::filled(2, 3, 1.0));
        let y = lin.forward(&mut g, &Bind::frozen(&store), x);
        let s = g.sum_all(y);
        let grads = g.backward(s);
        assert_eq!(grads.params().count(), 0);
        assert!(grads.wrt(x).is_some());
    }

    #[test]
    fn modulation_with_zero_condition_uses_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let m = Modulation::new(&mut store, "m", ParamGroup::Decoder, 3, 2, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let c = g.constant(Tensor::zeros(1, 3));
        let y = m.forward(&mut g, &Bind::frozen(&store), x, c);
        let mut g2 = Graph::new();
        let x2 = g2.constant(g.value(x).clone());
        let n = g2.layer_norm(x2, NORM_EPS);
        assert_eq!(g.value(y), g2.value(n));
    }
}
