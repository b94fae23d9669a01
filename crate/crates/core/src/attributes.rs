//! The attribute function `ψ = f(x, m)` as a concatenation of blocks, and the
//! matching prior `p(ψ)`.
//!
//! Block kinds:
//!
//! * `free`: `ψ = Σᵢ αᵢ(x) vᵢ` with a learned basis `V: [d, d_ψ]` and a
//!   sigmoid-squashed attention network giving `α ∈ [0,1]^d`. The prior
//!   pushes `α ~ ν_α` through the same basis.
//! * `fixed_continuous`: `ψ = Σᵢ mᵢ vᵢ` for metadata `m ∈ [0,1]^M`.
//! * `fixed_discrete`: `ψ = e_m`, a learned embedding of label `m`.
//! * `label_dependent_free`: `ψ = Σᵢ αᵢ(x, m) e_{m,i}` with one basis per label.
//!
//! Fixed and label-dependent blocks draw their prior by permuting attributes
//! computed on a reference batch, independently per block.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::data::Metadata;
use crate::error::{Result, VarNetError};
use crate::nn::{Activation, Bind, Mlp};
use crate::params::{normal_init, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

fn default_attention_hidden() -> Vec<usize> {
    vec![64]
}

/// Distribution `ν_α` over `[0,1]^d` for free-attribute prior draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPrior {
    #[default]
    Uniform,
    Beta { a: f64, b: f64 },
}

impl AlphaPrior {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Self::Uniform => rng.random::<f64>(),
            Self::Beta { a, b } => Beta::new(a, b)
                .expect("validated beta parameters")
                .sample(rng),
        }
    }

    /// Mean of one coordinate.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform => 0.5,
            Self::Beta { a, b } => a / (a + b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttributeBlock {
    Free {
        d: usize,
        d_psi: usize,
        #[serde(default = "default_attention_hidden")]
        attention_hidden: Vec<usize>,
        #[serde(default)]
        nu_alpha: AlphaPrior,
    },
    FixedContinuous {
        m: usize,
        d_psi: usize,
        /// First column of this block inside the continuous metadata.
        #[serde(default)]
        offset: usize,
    },
    FixedDiscrete {
        m: usize,
        d_psi: usize,
        /// Which label field of the metadata this block reads.
        #[serde(default)]
        field: usize,
        /// Optional human-readable names for the label values.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<Vec<String>>,
    },
    LabelDependentFree {
        m: usize,
        d: usize,
        d_psi: usize,
        #[serde(default)]
        field: usize,
        #[serde(default = "default_attention_hidden")]
        attention_hidden: Vec<usize>,
        #[serde(default)]
        nu_alpha: AlphaPrior,
    },
}

impl AttributeBlock {
    pub fn d_psi(&self) -> usize {
        match self {
            Self::Free { d_psi, .. }
            | Self::FixedContinuous { d_psi, .. }
            | Self::FixedDiscrete { d_psi, .. }
            | Self::LabelDependentFree { d_psi, .. } => *d_psi,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Free { .. } => "free",
            Self::FixedContinuous { .. } => "fixed_continuous",
            Self::FixedDiscrete { .. } => "fixed_discrete",
            Self::LabelDependentFree { .. } => "label_dependent_free",
        }
    }

    /// Number of attention coordinates for blocks driven by `α`.
    pub fn alpha_dim(&self) -> Option<usize> {
        match self {
            Self::Free { d, .. } | Self::LabelDependentFree { d, .. } => Some(*d),
            _ => None,
        }
    }

    /// Label cardinality and field for blocks keyed by a discrete label.
    pub fn label_field(&self) -> Option<(usize, usize)> {
        match self {
            Self::FixedDiscrete { m, field, .. } | Self::LabelDependentFree { m, field, .. } => Some((*field, *m)),
            _ => None,
        }
    }

    /// Whether the prior for this block needs a reference batch.
    pub fn needs_reference(&self) -> bool {
        !matches!(self, Self::Free { .. })
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let bad = |msg: &str| Err(VarNetError::Spec(format!("block {idx} ({}): {msg}", self.kind())));
        if self.d_psi() == 0 {
            return bad("d_psi must be positive");
        }
        match self {
            Self::Free { d, nu_alpha, .. } | Self::LabelDependentFree { d, nu_alpha, .. } => {
                if *d == 0 {
                    return bad("d must be positive");
                }
                if let AlphaPrior::Beta { a, b } = nu_alpha {
                    if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) {
                        return bad("beta prior parameters must be positive");
                    }
                }
            }
            _ => {}
        }
        match self {
            Self::FixedContinuous { m, .. } | Self::FixedDiscrete { m, .. } | Self::LabelDependentFree { m, .. } if *m == 0 => {
                bad("m must be positive")
            }
            Self::FixedDiscrete {
                m,
                vocabulary: Some(v),
                ..
            } if v.len() != *m => bad("vocabulary length must equal m"),
            _ => Ok(()),
        }
    }
}

/// Ordered list of attribute blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttributeBlock>", into = "Vec<AttributeBlock>")]
pub struct AttributeSpec {
    blocks: Vec<AttributeBlock>,
    total_dim: usize,
}

impl TryFrom<Vec<AttributeBlock>> for AttributeSpec {
    type Error = VarNetError;

    fn try_from(blocks: Vec<AttributeBlock>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            b.validate(i)?;
        }
        let total_dim = blocks.iter().map(AttributeBlock::d_psi).sum();
        Ok(Self { blocks, total_dim })
    }
}

impl From<AttributeSpec> for Vec<AttributeBlock> {
    fn from(s: AttributeSpec) -> Self {
        s.blocks
    }
}

impl AttributeSpec {
    /// A non-empty spec.
    pub fn new(blocks: Vec<AttributeBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(VarNetError::Spec("attribute spec must hold at least one block".into()));
        }
        Self::try_from(blocks)
    }

    /// The spec of a plain autoencoder: no attributes at all.
    pub fn empty() -> Self {
        Self {
            blocks: Vec::new(),
            total_dim: 0,
        }
    }

    pub fn blocks(&self) -> &[AttributeBlock] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Column offset of each block inside `ψ`.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.d_psi();
                Some(o)
            })
            .collect()
    }

    /// Checks that `meta` carries every field the blocks read, for `n` examples.
    pub fn validate_metadata(&self, meta: &Metadata, n: usize) -> Result<()> {
        for (i, block) in self.blocks.iter().enumerate() {
            let err = |reason: String| VarNetError::Metadata {
                block: i,
                kind: block.kind(),
                reason,
            };
            match block {
                AttributeBlock::FixedDiscrete { m, field, .. } | AttributeBlock::LabelDependentFree { m, field, .. } => {
                    let labels = meta
                        .labels
                        .get(*field)
                        .ok_or_else(|| err(format!("label field {field} is missing")))?;
                    if labels.len() != n {
                        return Err(err(format!("label field {field} has {} entries for {n} examples", labels.len())));
                    }
                    if let Some(bad) = labels.iter().find(|&&l| l >= *m) {
                        return Err(err(format!("label {bad} out of range 0..{m}")));
                    }
                }
                AttributeBlock::FixedContinuous { m, offset, .. } => {
                    let c = meta
                        .continuous
                        .as_ref()
                        .ok_or_else(|| err("continuous metadata is missing".into()))?;
                    if c.rows() != n || c.cols() < offset + m {
                        return Err(err(format!(
                            "continuous metadata is [{}, {}], need {n} rows and columns {offset}..{}",
                            c.rows(),
                            c.cols(),
                            offset + m
                        )));
                    }
                    for r in 0..n {
                        if let Some(v) = c.row(r)[*offset..offset + m].iter().find(|v| !(0.0..=1.0).contains(*v)) {
                            return Err(err(format!("value {v} outside [0, 1] in row {r}")));
                        }
                    }
                }
                AttributeBlock::Free { .. } => {}
            }
        }
        Ok(())
    }
}

/// Learnable parameters of one block.
#[derive(Clone, Debug)]
pub enum BlockParams {
    Free { attention: Mlp, basis: ParamId },
    FixedContinuous { basis: ParamId },
    FixedDiscrete { table: ParamId },
    /// `table` is `[m·d, d_ψ]`, rows `m·d .. (m+1)·d` belonging to label `m`.
    LabelDependentFree { attention: Mlp, table: ParamId },
}

/// Graph values produced by one evaluation of `f`.
#[derive(Clone, Debug)]
pub struct AttributeEval {
    /// Concatenated attributes `[n, total_dim]`.
    pub psi: Var,
    /// Per-block slices of `psi`.
    pub blocks: Vec<Var>,
    /// Attention weights for `α`-driven blocks.
    pub alphas: Vec<Option<Var>>,
}

/// How one block's prior sample is drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockDraw {
    /// `α` coordinates pushed through the block's basis.
    Alpha(Tensor),
    /// Rows of the block's reference attributes.
    Rows(Vec<usize>),
}

/// All randomness consumed by one prior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorDraw {
    pub blocks: Vec<BlockDraw>,
}

/// The attribute function: spec plus parameter handles.
#[derive(Clone, Debug)]
pub struct AttributeFunction {
    pub spec: AttributeSpec,
    pub params: Vec<BlockParams>,
    input_dim: usize,
}

impl AttributeFunction {
    /// Registers the parameters of every block. `input_dim` is the flattened
    /// input size the attention networks read.
    pub fn new(spec: AttributeSpec, input_dim: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let group = ParamGroup::Attribute;
        let params = spec
            .blocks
            .iter()
            .enumerate()
            .map(|(i, block)| {
                let name = format!("attr.{i}");
                let std = 1.0 / (block.d_psi() as f64).sqrt();
                let attention = |store: &mut ParamStore, rng: &mut _, extra: usize, hidden: &[usize], d: usize| {
                    let mut widths = vec![input_dim + extra];
                    widths.extend_from_slice(hidden);
                    widths.push(d);
                    Mlp::new(
                        store,
                        &format!("{name}.attention"),
                        group,
                        &widths,
                        Activation::LeakyRelu,
                        Activation::Sigmoid,
                        rng,
                    )
                };
                match block {
                    AttributeBlock::Free {
                        d,
                        d_psi,
                        attention_hidden,
                        ..
                    } => {
                        let att = attention(store, rng, 0, attention_hidden, *d);
                        let basis = store.add(format!("{name}.basis"), group, normal_init(*d, *d_psi, std, rng));
                        BlockParams::Free { attention: att, basis }
                    }
                    AttributeBlock::FixedContinuous { m, d_psi, .. } => BlockParams::FixedContinuous {
                        basis: store.add(format!("{name}.basis"), group, normal_init(*m, *d_psi, std, rng)),
                    },
                    AttributeBlock::FixedDiscrete { m, d_psi, .. } => BlockParams::FixedDiscrete {
                        table: store.add(format!("{name}.table"), group, normal_init(*m, *d_psi, std, rng)),
                    },
                    AttributeBlock::LabelDependentFree {
                        m,
                        d,
                        d_psi,
                        attention_hidden,
                        ..
                    } => {
                        let att = attention(store, rng, *m, attention_hidden, *d);
                        let table = store.add(format!("{name}.table"), group, normal_init(m * d, *d_psi, std, rng));
                        BlockParams::LabelDependentFree { attention: att, table }
                    }
                }
            })
            .collect();
        Self { spec, params, input_dim }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn one_hot(g: &mut Graph, labels: &[usize], m: usize) -> Var {
        let mut t = Tensor::zeros(labels.len(), m);
        for (i, &l) in labels.iter().enumerate() {
            t.set(i, l, 1.0);
        }
        g.constant(t)
    }

    /// Attention weights `α(x, m)` for an `α`-driven block.
    fn attention(&self, g: &mut Graph, bind: &Bind<'_>, idx: usize, x: Var, meta: &Metadata) -> Option<Var> {
        match (&self.params[idx], &self.spec.blocks[idx]) {
            (BlockParams::Free { attention, .. }, _) => Some(attention.forward(g, bind, x)),
            (BlockParams::LabelDependentFree { attention, .. }, AttributeBlock::LabelDependentFree { m, field, .. }) => {
                let oh = Self::one_hot(g, &meta.labels[*field], *m);
                let inp = g.concat_cols(&[x, oh]);
                Some(attention.forward(g, bind, inp))
            }
            _ => None,
        }
    }

    /// Block output from explicit attention weights (`α`-driven blocks only).
    /// `labels` is required for label-dependent blocks.
    pub fn block_from_alpha(&self, g: &mut Graph, bind: &Bind<'_>, idx: usize, alpha: Var, labels: Option<&[usize]>) -> Result<Var> {
        match (&self.params[idx], &self.spec.blocks[idx]) {
            (BlockParams::Free { basis, .. }, _) => {
                let v = bind.var(g, *basis);
                Ok(g.matmul(alpha, v))
            }
            (BlockParams::LabelDependentFree { table, .. }, AttributeBlock::LabelDependentFree { m, .. }) => {
                let labels = labels.ok_or_else(|| VarNetError::Metadata {
                    block: idx,
                    kind: "label_dependent_free",
                    reason: "labels are required to place attention weights".into(),
                })?;
                let spread = g.scatter_groups(alpha, labels, *m);
                let e = bind.var(g, *table);
                Ok(g.matmul(spread, e))
            }
            _ => Err(VarNetError::Spec(format!("block {idx} is not driven by attention weights"))),
        }
    }

    /// Evaluates `ψ = f(x, m)` on the graph.
    pub fn forward(&self, g: &mut Graph, bind: &Bind<'_>, x: Var, meta: &Metadata) -> Result<AttributeEval> {
        let n = g.shape(x).0;
        if g.shape(x).1 != self.input_dim {
            return Err(VarNetError::Shape(format!(
                "attribute function expects {} input features, got {}",
                self.input_dim,
                g.shape(x).1
            )));
        }
        self.spec.validate_metadata(meta, n)?;
        let mut blocks = Vec::with_capacity(self.params.len());
        let mut alphas = Vec::with_capacity(self.params.len());
        for (idx, (params, block)) in self.params.iter().zip(&self.spec.blocks).enumerate() {
            let (out, alpha) = match (params, block) {
                (BlockParams::Free { .. }, _) => {
                    let a = self.attention(g, bind, idx, x, meta).expect("free block has attention");
                    (self.block_from_alpha(g, bind, idx, a, None)?, Some(a))
                }
                (BlockParams::LabelDependentFree { .. }, AttributeBlock::LabelDependentFree { field, .. }) => {
                    let a = self.attention(g, bind, idx, x, meta).expect("label-dependent block has attention");
                    let labels = meta.labels[*field].clone();
                    (self.block_from_alpha(g, bind, idx, a, Some(&labels))?, Some(a))
                }
                (BlockParams::FixedContinuous { basis }, AttributeBlock::FixedContinuous { m, offset, .. }) => {
                    let c = meta.continuous.as_ref().expect("validated").slice_cols(*offset, *m);
                    let c = g.constant(c);
                    let v = bind.var(g, *basis);
                    (g.matmul(c, v), None)
                }
                (BlockParams::FixedDiscrete { table }, AttributeBlock::FixedDiscrete { field, .. }) => {
                    let e = bind.var(g, *table);
                    (g.gather_rows(e, &meta.labels[*field]), None)
                }
                _ => unreachable!("block params built from the same spec"),
            };
            blocks.push(out);
            alphas.push(alpha);
        }
        let psi = match blocks.len() {
            0 => g.constant(Tensor::zeros(n, 0)),
            1 => blocks[0],
            _ => g.concat_cols(&blocks),
        };
        Ok(AttributeEval { psi, blocks, alphas })
    }

    /// Draws the randomness for `n` prior samples. `reference_rows` is the
    /// number of reference attributes available to fixed blocks.
    pub fn draw_prior(&self, n: usize, reference_rows: Option<usize>, rng: &mut impl Rng) -> Result<PriorDraw> {
        let mut blocks = Vec::with_capacity(self.spec.blocks.len());
        for (i, block) in self.spec.blocks.iter().enumerate() {
            match block {
                AttributeBlock::Free { d, nu_alpha, .. } => {
                    let data = (0..n * d).map(|_| nu_alpha.sample(rng)).collect();
                    blocks.push(BlockDraw::Alpha(Tensor::from_vec(n, *d, data)?));
                }
                _ => {
                    let k = match reference_rows {
                        Some(k) if k > 0 => k,
                        _ => {
                            return Err(VarNetError::Prior(format!(
                                "block {i} ({}) draws its prior from reference attributes, but none were given",
                                block.kind()
                            )))
                        }
                    };
                    blocks.push(BlockDraw::Rows(permutation_rows(n, k, rng)));
                }
            }
        }
        Ok(PriorDraw { blocks })
    }

    /// Builds prior attributes from a draw. `reference` holds, per block, the
    /// reference attributes that `Rows` draws index into.
    pub fn apply_prior(&self, g: &mut Graph, bind: &Bind<'_>, draw: &PriorDraw, reference: Option<&[Var]>) -> Result<Var> {
        let mut parts = Vec::with_capacity(draw.blocks.len());
        let mut n = 0;
        for (idx, d) in draw.blocks.iter().enumerate() {
            let part = match d {
                BlockDraw::Alpha(alpha) => {
                    n = alpha.rows();
                    let a = g.constant(alpha.clone());
                    self.block_from_alpha(g, bind, idx, a, None)?
                }
                BlockDraw::Rows(rows) => {
                    n = rows.len();
                    let src = reference
                        .and_then(|r| r.get(idx))
                        .ok_or_else(|| VarNetError::Prior(format!("block {idx} has no reference attributes")))?;
                    g.gather_rows(*src, rows)
                }
            };
            parts.push(part);
        }
        Ok(match parts.len() {
            0 => g.constant(Tensor::zeros(n, 0)),
            1 => parts[0],
            _ => g.concat_cols(&parts),
        })
    }

    /// `ψ = f(x, m)` evaluated outside any training graph.
    pub fn eval(&self, store: &ParamStore, x: &Tensor, meta: &Metadata) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &Bind::frozen(store), xv, meta)?;
        Ok(g.value(out.psi).clone())
    }

    /// Attention weights of every `α`-driven block (None for others).
    pub fn eval_alphas(&self, store: &ParamStore, x: &Tensor, meta: &Metadata) -> Result<Vec<Option<Tensor>>> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &Bind::frozen(store), xv, meta)?;
        Ok(out.alphas.iter().map(|a| a.map(|a| g.value(a).clone())).collect())
    }

    /// `n` samples from `p(ψ)`. Fixed blocks permute `f` evaluated on
    /// `reference`; each block draws its own permutation.
    pub fn sample_prior(
        &self,
        store: &ParamStore,
        reference: Option<(&Tensor, &Metadata)>,
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let mut g = Graph::new();
        let bind = Bind::frozen(store);
        let (ref_blocks, rows) = match reference {
            Some((x, meta)) if x.rows() > 0 => {
                let xv = g.constant(x.clone());
                let eval = self.forward(&mut g, &bind, xv, meta)?;
                (Some(eval.blocks), Some(x.rows()))
            }
            _ => (None, None),
        };
        let draw = self.draw_prior(n, rows, rng)?;
        let psi = self.apply_prior(&mut g, &bind, &draw, ref_blocks.as_deref())?;
        Ok(g.value(psi).clone())
    }

    /// Prior samples from cached per-block reference attributes (one tensor per
    /// block; free blocks may pass an empty tensor).
    pub fn sample_prior_from_bank(&self, store: &ParamStore, bank: &[Tensor], n: usize, rng: &mut impl Rng) -> Result<Tensor> {
        let mut g = Graph::new();
        let bind = Bind::frozen(store);
        let needs = self.spec.blocks.iter().any(AttributeBlock::needs_reference);
        let rows = bank
            .iter()
            .zip(&self.spec.blocks)
            .filter(|(_, b)| b.needs_reference())
            .map(|(t, _)| t.rows())
            .min();
        if needs && bank.len() != self.spec.blocks.len() {
            return Err(VarNetError::Prior("no cached reference attributes for the fixed blocks".into()));
        }
        let draw = self.draw_prior(n, rows, rng)?;
        let refs: Vec<Var> = bank.iter().map(|t| g.constant(t.clone())).collect();
        let psi = self.apply_prior(&mut g, &bind, &draw, Some(&refs))?;
        Ok(g.value(psi).clone())
    }

    /// Parameters read by the prior and by `f`.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for p in &self.params {
            match p {
                BlockParams::Free { attention, basis } => {
                    ids.extend(attention.layers.iter().flat_map(|l| [l.weight, l.bias]));
                    ids.push(*basis);
                }
                BlockParams::FixedContinuous { basis } => ids.push(*basis),
                BlockParams::FixedDiscrete { table } => ids.push(*table),
                BlockParams::LabelDependentFree { attention, table } => {
                    ids.extend(attention.layers.iter().flat_map(|l| [l.weight, l.bias]));
                    ids.push(*table);
                }
            }
        }
        ids
    }
}

/// `n` indices into `0..k`: a uniform permutation when `n == k`, otherwise
/// consecutive independent permutations truncated to `n`.
pub fn permutation_rows(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        let take = (n - out.len()).min(k);
        out.extend_from_slice(&perm[..take]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free(d: usize, d_psi: usize) -> AttributeBlock {
        AttributeBlock::Free {
            d,
            d_psi,
            attention_hidden: vec![8],
            nu_alpha: AlphaPrior::Uniform,
        }
    }

    fn discrete(m: usize, d_psi: usize) -> AttributeBlock {
        AttributeBlock::FixedDiscrete {
            m,
            d_psi,
            field: 0,
            vocabulary: None,
        }
    }

    fn build(blocks: Vec<AttributeBlock>, input_dim: usize) -> (AttributeFunction, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = AttributeFunction::new(AttributeSpec::new(blocks).unwrap(), input_dim, &mut store, &mut rng);
        (f, store)
    }

    #[test]
    fn free_block_with_forced_attention_orthonormal_basis() {
        let (f, mut store) = build(vec![free(2, 2)], 3);
        let BlockParams::Free { basis, .. } = f.params[0] else { unreachable!() };
        *store.value_mut(basis) = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut g = Graph::new();
        let a = g.constant(Tensor::row_vector(vec![0.3, 0.7]));
        let psi = f.block_from_alpha(&mut g, &Bind::frozen(&store), 0, a, None).unwrap();
        assert_eq!(g.value(psi).data(), &[0.3, 0.7]);
    }

    #[test]
    fn discrete_block_is_table_lookup() {
        let (f, store) = build(vec![discrete(5, 3)], 4);
        let x = Tensor::zeros(1, 4);
        let psi = f.eval(&store, &x, &Metadata::with_labels(vec![3])).unwrap();
        let BlockParams::FixedDiscrete { table } = f.params[0] else { unreachable!() };
        assert_eq!(psi.data(), store.value(table).row(3));
    }

    #[test]
    fn concat_dims_add() {
        let (f, store) = build(vec![free(2, 4), discrete(10, 3)], 6);
        assert_eq!(f.spec.total_dim(), 7);
        let x = Tensor::filled(2, 6, 0.5);
        let psi = f.eval(&store, &x, &Metadata::with_labels(vec![1, 9])).unwrap();
        assert_eq!(psi.shape(), (2, 7));
    }

    #[test]
    fn missing_or_bad_metadata_names_block() {
        let (f, store) = build(vec![free(1, 2), discrete(3, 2)], 2);
        let x = Tensor::zeros(1, 2);
        match f.eval(&store, &x, &Metadata::none()) {
            Err(VarNetError::Metadata { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected metadata error, got {other:?}"),
        }
        match f.eval(&store, &x, &Metadata::with_labels(vec![3])) {
            Err(VarNetError::Metadata { block, reason, .. }) => {
                assert_eq!(block, 1);
                assert!(reason.contains("out of range"));
            }
            other => panic!("expected metadata error, got {other:?}"),
        }
    }

    #[test]
    fn continuous_metadata_range_checked() {
        let block = AttributeBlock::FixedContinuous {
            m: 2,
            d_psi: 3,
            offset: 0,
        };
        let (f, store) = build(vec![block], 2);
        let x = Tensor::zeros(1, 2);
        let meta = Metadata {
            labels: vec![],
            continuous: Some(Tensor::row_vector(vec![0.5, 1.5])),
        };
        assert!(matches!(f.eval(&store, &x, &meta), Err(VarNetError::Metadata { .. })));
        let ok = Metadata {
            labels: vec![],
            continuous: Some(Tensor::row_vector(vec![0.5, 1.0])),
        };
        let psi = f.eval(&store, &x, &ok).unwrap();
        assert_eq!(psi.shape(), (1, 3));
    }

    #[test]
    fn label_dependent_uses_label_basis() {
        let block = AttributeBlock::LabelDependentFree {
            m: 3,
            d: 2,
            d_psi: 2,
            field: 0,
            attention_hidden: vec![4],
            nu_alpha: AlphaPrior::Uniform,
        };
        let (f, store) = build(vec![block], 2);
        let BlockParams::LabelDependentFree { table, .. } = f.params[0] else { unreachable!() };
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let psi = f
            .block_from_alpha(&mut g, &Bind::frozen(&store), 0, a, Some(&[2, 1]))
            .unwrap();
        let t = store.value(table);
        assert_eq!(g.value(psi).row(0), t.row(4));
        assert_eq!(g.value(psi).row(1), t.row(3));
    }

    #[test]
    fn fixed_prior_requires_reference() {
        let (f, store) = build(vec![discrete(3, 2)], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            f.sample_prior(&store, None, 4, &mut rng),
            Err(VarNetError::Prior(_))
        ));
    }

    #[test]
    fn empty_spec_rejected_by_new() {
        assert!(AttributeSpec::new(vec![]).is_err());
        assert_eq!(AttributeSpec::empty().total_dim(), 0);
    }

    #[test]
    fn spec_serde_roundtrip() {
        let spec = AttributeSpec::new(vec![free(2, 4), discrete(10, 3)]).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: AttributeSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<AttributeSpec>(r#"[{"kind":"free","d":0,"d_psi":2}]"#).is_err());
        assert!(serde_json::from_str::<AttributeSpec>(r#"[{"kind":"free","d":1,"d_psi":2,"typo":1}]"#).is_err());
    }

    #[test]
    fn permutation_rows_cover_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = permutation_rows(5, 5, &mut rng);
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
        assert_eq!(permutation_rows(7, 3, &mut rng).len(), 7);
    }
}
