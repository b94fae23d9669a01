//! Generation from a trained model: unconditional samples, samples with given
//! attributes, variations of an input, interpolation and variation grids.
//! Everything here reads the model and never mutates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeBlock, BlockParams};
use crate::autograd::Graph;
use crate::data::Metadata;
use crate::error::{Result, VarNetError};
use crate::gaussian::{reparam_sample, standard_normal};
use crate::model::VarNet;
use crate::nn::Bind;
use crate::tensor::Tensor;

/// How a template is taken from `q(z|x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    #[default]
    Mean,
    Sample,
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_psi(model: &VarNet, psi: &Tensor) -> Result<()> {
    if psi.cols() != model.d_psi() {
        return Err(VarNetError::Spec(format!(
            "attribute has length {}, the model's attribute space has {}",
            psi.cols(),
            model.d_psi()
        )));
    }
    Ok(())
}

/// The `(z, ψ)` pairs [`sample_unconditional`] decodes.
pub fn unconditional_draw(model: &VarNet, n: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = rng_for(seed);
    let z = standard_normal(n, model.d_z(), &mut rng);
    let psi = model.sample_prior(n, &mut rng)?;
    Ok((z, psi))
}

/// `z ~ N(0, I)`, `ψ ~ p(ψ)`, decoded means.
pub fn sample_unconditional(model: &VarNet, n: usize, seed: u64) -> Result<Tensor> {
    let (z, psi) = unconditional_draw(model, n, seed)?;
    if n == 0 {
        return Ok(Tensor::zeros(0, model.input_dim()));
    }
    Ok(model.decode(&z, &psi)?.mu)
}

/// `z ~ N(0, I)` with a fixed attribute (one row, repeated).
pub fn sample_with_attributes(model: &VarNet, psi: &[f64], n: usize, seed: u64) -> Result<Tensor> {
    let row = Tensor::row_vector(psi.to_vec());
    check_psi(model, &row)?;
    if n == 0 {
        return Ok(Tensor::zeros(0, model.input_dim()));
    }
    let mut rng = rng_for(seed);
    let z = standard_normal(n, model.d_z(), &mut rng);
    let psi = row.select_rows(&vec![0; n]);
    Ok(model.decode(&z, &psi)?.mu)
}

fn template(model: &VarNet, x: &Tensor, mode: ZMode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let post = model.encode(x)?;
    Ok(match mode {
        ZMode::Mean => post.mu,
        ZMode::Sample => reparam_sample(&post, rng),
    })
}

/// Re-renders inputs with new attributes: `z` from `q(z|x)`, decoded with
/// `psi_new` (one row per input, or one row shared by all).
pub fn vary_input(model: &VarNet, x: &Tensor, psi_new: &Tensor, mode: ZMode, seed: u64) -> Result<Tensor> {
    check_psi(model, psi_new)?;
    let psi = match psi_new.rows() {
        r if r == x.rows() => psi_new.clone(),
        1 => psi_new.select_rows(&vec![0; x.rows()]),
        r => {
            return Err(VarNetError::Shape(format!(
                "{r} attribute rows for {} inputs",
                x.rows()
            )))
        }
    };
    let z = template(model, x, mode, &mut rng_for(seed))?;
    Ok(model.decode(&z, &psi)?.mu)
}

/// `n` variations of one input with attributes drawn from `p(ψ)`.
pub fn vary_input_random(model: &VarNet, x: &Tensor, n: usize, mode: ZMode, seed: u64) -> Result<Tensor> {
    Ok(vary_input_random_with_psi(model, x, n, mode, seed)?.0)
}

/// [`vary_input_random`] also returning the drawn attributes.
pub fn vary_input_random_with_psi(model: &VarNet, x: &Tensor, n: usize, mode: ZMode, seed: u64) -> Result<(Tensor, Tensor)> {
    if x.rows() != 1 {
        return Err(VarNetError::Shape(format!("expected one input, got {}", x.rows())));
    }
    let mut rng = rng_for(seed);
    if n == 0 {
        model.encode(x)?;
        return Ok((Tensor::zeros(0, model.input_dim()), Tensor::zeros(0, model.d_psi())));
    }
    let post = model.encode(x)?;
    let z = match mode {
        ZMode::Mean => post.mu.select_rows(&vec![0; n]),
        ZMode::Sample => reparam_sample(&post.select(&vec![0; n]), &mut rng),
    };
    let psi = model.sample_prior(n, &mut rng)?;
    let images = model.decode(&z, &psi)?.mu;
    Ok((images, psi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationAxis {
    Template,
    Attribute,
}

/// An interpolation path and its decodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolation {
    pub z: Tensor,
    pub psi: Tensor,
    pub images: Tensor,
}

/// Affine path between two encoded endpoints (`z` = posterior mean,
/// `ψ = f(x, m)`) along one coordinate; the other stays at endpoint `a`.
pub fn interpolate(
    model: &VarNet,
    a: (&Tensor, &Metadata),
    b: (&Tensor, &Metadata),
    axis: InterpolationAxis,
    steps: usize,
) -> Result<Interpolation> {
    if steps < 2 {
        return Err(VarNetError::Grid(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let za = model.encode(a.0)?.mu;
    let zb = model.encode(b.0)?.mu;
    let pa = model.attributes_of(a.0, a.1)?;
    let pb = model.attributes_of(b.0, b.1)?;
    if za.rows() != 1 || zb.rows() != 1 {
        return Err(VarNetError::Shape("interpolation endpoints must be single inputs".into()));
    }
    let lerp = |u: &Tensor, v: &Tensor| {
        let rows: Vec<Vec<f64>> = (0..steps)
            .map(|i| {
                let t = i as f64 / (steps - 1) as f64;
                u.data().iter().zip(v.data()).map(|(p, q)| (1.0 - t) * p + t * q).collect()
            })
            .collect();
        Tensor::from_rows(&rows)
    };
    let (z, psi) = match axis {
        InterpolationAxis::Template => (lerp(&za, &zb)?, pa.select_rows(&vec![0; steps])),
        InterpolationAxis::Attribute => (za.select_rows(&vec![0; steps]), lerp(&pa, &pb)?),
    };
    let images = model.decode(&z, &psi)?.mu;
    Ok(Interpolation { z, psi, images })
}

/// Explicit setting for one attribute block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockSetting {
    /// Attention weights of a free block (with a label for label-dependent ones).
    Alpha {
        alpha: Vec<f64>,
        #[serde(default)]
        label: Option<usize>,
    },
    /// Label of a discrete block.
    Label { label: usize },
    /// Metadata values of a continuous block.
    Continuous { values: Vec<f64> },
    /// The block's slice of `ψ` given directly.
    Psi { psi: Vec<f64> },
}

/// Builds one block's slice of `ψ` from an explicit setting.
pub fn block_psi(model: &VarNet, idx: usize, setting: &BlockSetting) -> Result<Tensor> {
    let spec = model.spec();
    let block = spec
        .blocks()
        .get(idx)
        .ok_or_else(|| VarNetError::Spec(format!("no attribute block {idx}")))?;
    let err = |m: String| Err(VarNetError::Spec(format!("block {idx} ({}): {m}", block.kind())));
    let unit = |v: &[f64]| v.iter().all(|a| (0.0..=1.0).contains(a));
    let mut g = Graph::new();
    let bind = Bind::frozen(&model.store);
    let out = match (block, setting) {
        (_, BlockSetting::Psi { psi }) => {
            if psi.len() != block.d_psi() {
                return err(format!("psi has length {}, expected {}", psi.len(), block.d_psi()));
            }
            return Ok(Tensor::row_vector(psi.clone()));
        }
        (AttributeBlock::Free { d, .. }, BlockSetting::Alpha { alpha, .. }) => {
            if alpha.len() != *d || !unit(alpha) {
                return err(format!("needs {d} attention weights in [0, 1]"));
            }
            let a = g.constant(Tensor::row_vector(alpha.clone()));
            model.attributes.block_from_alpha(&mut g, &bind, idx, a, None)?
        }
        (AttributeBlock::LabelDependentFree { d, m, .. }, BlockSetting::Alpha { alpha, label }) => {
            let Some(label) = label.filter(|l| l < m) else {
                return err(format!("needs a label in 0..{m}"));
            };
            if alpha.len() != *d || !unit(alpha) {
                return err(format!("needs {d} attention weights in [0, 1]"));
            }
            let a = g.constant(Tensor::row_vector(alpha.clone()));
            model.attributes.block_from_alpha(&mut g, &bind, idx, a, Some(&[label]))?
        }
        (AttributeBlock::FixedDiscrete { m, .. }, BlockSetting::Label { label }) => {
            if label >= m {
                return err(format!("label {label} out of range 0..{m}"));
            }
            let BlockParams::FixedDiscrete { table } = &model.attributes.params[idx] else {
                unreachable!("params follow the spec")
            };
            let e = bind.var(&mut g, *table);
            g.gather_rows(e, &[*label])
        }
        (AttributeBlock::FixedContinuous { m, .. }, BlockSetting::Continuous { values }) => {
            if values.len() != *m || !unit(values) {
                return err(format!("needs {m} values in [0, 1]"));
            }
            let BlockParams::FixedContinuous { basis } = &model.attributes.params[idx] else {
                unreachable!("params follow the spec")
            };
            let c = g.constant(Tensor::row_vector(values.clone()));
            let v = bind.var(&mut g, *basis);
            g.matmul(c, v)
        }
        _ => return err("setting does not match the block kind".into()),
    };
    Ok(g.value(out).clone())
}

/// Full `ψ` from per-block settings; blocks without a setting take the
/// source's own attributes (`source_psi`), which is then required.
pub fn compose_psi(model: &VarNet, settings: &[Option<BlockSetting>], source_psi: Option<&Tensor>) -> Result<Tensor> {
    let spec = model.spec();
    if settings.len() > spec.blocks().len() {
        return Err(VarNetError::Spec(format!(
            "{} block settings for {} blocks",
            settings.len(),
            spec.blocks().len()
        )));
    }
    let offsets = spec.offsets();
    let mut parts = Vec::with_capacity(spec.blocks().len());
    for (i, block) in spec.blocks().iter().enumerate() {
        let part = match settings.get(i).and_then(Option::as_ref) {
            Some(s) => block_psi(model, i, s)?,
            None => match source_psi {
                Some(p) => p.slice_cols(offsets[i], block.d_psi()),
                None => {
                    return Err(VarNetError::Spec(format!(
                        "block {i} has no setting and there is no source input to take it from"
                    )))
                }
            },
        };
        parts.push(part);
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(1, 0));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_cols(&refs)
}

/// One swept axis of a variation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub block: usize,
    /// Attention (or metadata) coordinate; ignored for discrete blocks.
    #[serde(default)]
    pub coord: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationRequest {
    /// One input and its metadata.
    pub source: Tensor,
    pub meta: Metadata,
    /// Optional per-block settings applied before sweeping.
    pub overrides: Vec<Option<BlockSetting>>,
    pub axes: Vec<GridAxis>,
    pub z_mode: ZMode,
    pub seed: u64,
}

/// Per-cell record: grid index and the value swept on each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: Vec<usize>,
    pub values: Vec<f64>,
    pub psi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationGrid {
    pub steps: Vec<usize>,
    /// Decoded means, one row per cell in row-major order over `steps`.
    pub images: Tensor,
    pub cells: Vec<GridCell>,
    /// Reconstruction of the source at its own attributes.
    pub source_echo: Tensor,
}

/// Values an axis of `k` steps takes: `0, 1/(k−1), …, 1`, or the source's
/// own value when `k == 1`.
pub fn axis_values(k: usize) -> Vec<f64> {
    match k {
        0 | 1 => vec![],
        _ => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
    }
}

enum AxisKind {
    Alpha { base: Vec<f64>, label: Option<usize> },
    Label { m: usize },
    Continuous { base: Vec<f64> },
}

pub fn variation_grid(model: &VarNet, req: &VariationRequest) -> Result<VariationGrid> {
    if req.source.rows() != 1 {
        return Err(VarNetError::Grid("a grid needs exactly one source input".into()));
    }
    let spec = model.spec();
    let mut rng = rng_for(req.seed);
    let z = template(model, &req.source, req.z_mode, &mut rng)?;
    let own_psi = model.attributes_of(&req.source, &req.meta)?;
    let source_echo = model.decode(&z, &own_psi)?.mu;
    let base_psi = compose_psi(model, &req.overrides, Some(&own_psi))?;
    let alphas = model.attributes.eval_alphas(&model.store, &req.source, &req.meta)?;

    let mut kinds = Vec::with_capacity(req.axes.len());
    for (a, axis) in req.axes.iter().enumerate() {
        if axis.steps == 0 {
            return Err(VarNetError::Grid(format!("axis {a} has zero steps")));
        }
        let block = spec
            .blocks()
            .get(axis.block)
            .ok_or_else(|| VarNetError::Grid(format!("axis {a} addresses missing block {}", axis.block)))?;
        if req.axes[..a].iter().any(|o| o.block == axis.block && o.coord == axis.coord) {
            return Err(VarNetError::Grid(format!("axis {a} repeats an earlier axis")));
        }
        let kind = match block {
            AttributeBlock::Free { d, .. } | AttributeBlock::LabelDependentFree { d, .. } => {
                if axis.coord >= *d {
                    return Err(VarNetError::Grid(format!("axis {a}: coordinate {} out of 0..{d}", axis.coord)));
                }
                let base = match req.overrides.get(axis.block).and_then(Option::as_ref) {
                    Some(BlockSetting::Alpha { alpha, .. }) => alpha.clone(),
                    _ => alphas[axis.block].as_ref().expect("alpha block").row(0).to_vec(),
                };
                let label = block.label_field().map(|(f, _)| match req.overrides.get(axis.block).and_then(Option::as_ref) {
                    Some(BlockSetting::Alpha { label: Some(l), .. }) => *l,
                    _ => req.meta.labels[f][0],
                });
                AxisKind::Alpha { base, label }
            }
            AttributeBlock::FixedDiscrete { m, .. } => {
                if axis.steps > 1 && (m - 1) % (axis.steps - 1) != 0 {
                    return Err(VarNetError::Grid(format!(
                        "axis {a}: {} evenly spaced steps over labels 0..{} land on non-integer labels",
                        axis.steps,
                        m - 1
                    )));
                }
                AxisKind::Label { m: *m }
            }
            AttributeBlock::FixedContinuous { m, offset, .. } => {
                if axis.coord >= *m {
                    return Err(VarNetError::Grid(format!("axis {a}: coordinate {} out of 0..{m}", axis.coord)));
                }
                let base = match req.overrides.get(axis.block).and_then(Option::as_ref) {
                    Some(BlockSetting::Continuous { values }) => values.clone(),
                    _ => req
                        .meta
                        .continuous
                        .as_ref()
                        .ok_or_else(|| VarNetError::Grid("source has no continuous metadata".into()))?
                        .row(0)[*offset..offset + m]
                        .to_vec(),
                };
                AxisKind::Continuous { base }
            }
        };
        kinds.push(kind);
    }

    let steps: Vec<usize> = req.axes.iter().map(|a| a.steps).collect();
    let total: usize = steps.iter().product();
    let offsets = spec.offsets();
    let mut cells = Vec::with_capacity(total);
    let mut psis = Vec::with_capacity(total);
    for flat in 0..total {
        let mut index = vec![0; steps.len()];
        let mut rem = flat;
        for (slot, &k) in index.iter_mut().zip(&steps).rev() {
            *slot = rem % k;
            rem /= k;
        }
        let mut psi = base_psi.clone();
        let mut values = Vec::with_capacity(steps.len());
        // Settings per block accumulate across axes that share a block.
        let mut alpha_state: Vec<Option<(Vec<f64>, Option<usize>)>> = vec![None; spec.blocks().len()];
        let mut cont_state: Vec<Option<Vec<f64>>> = vec![None; spec.blocks().len()];
        let mut label_state: Vec<Option<usize>> = vec![None; spec.blocks().len()];
        for ((axis, kind), &i) in req.axes.iter().zip(&kinds).zip(&index) {
            let grid = axis_values(axis.steps);
            match kind {
                AxisKind::Alpha { base, label } => {
                    let st = alpha_state[axis.block].get_or_insert_with(|| (base.clone(), *label));
                    let v = grid.get(i).copied().unwrap_or(base[axis.coord]);
                    st.0[axis.coord] = v;
                    values.push(v);
                }
                AxisKind::Label { m } => {
                    let l = match grid.get(i) {
                        Some(t) => (t * (m - 1) as f64).round() as usize,
                        None => {
                            let (f, _) = spec.blocks()[axis.block].label_field().unwrap();
                            match req.overrides.get(axis.block).and_then(Option::as_ref) {
                                Some(BlockSetting::Label { label }) => *label,
                                _ => req.meta.labels[f][0],
                            }
                        }
                    };
                    label_state[axis.block] = Some(l);
                    values.push(l as f64);
                }
                AxisKind::Continuous { base } => {
                    let st = cont_state[axis.block].get_or_insert_with(|| base.clone());
                    let v = grid.get(i).copied().unwrap_or(base[axis.coord]);
                    st[axis.coord] = v;
                    values.push(v);
                }
            }
        }
        for b in 0..spec.blocks().len() {
            let setting = if let Some((alpha, label)) = alpha_state[b].take() {
                Some(BlockSetting::Alpha { alpha, label })
            } else if let Some(values) = cont_state[b].take() {
                Some(BlockSetting::Continuous { values })
            } else {
                label_state[b].map(|label| BlockSetting::Label { label })
            };
            if let Some(s) = setting {
                let part = block_psi(model, b, &s)?;
                psi.row_mut(0)[offsets[b]..offsets[b] + part.cols()].copy_from_slice(part.data());
            }
        }
        cells.push(GridCell {
            index,
            values,
            psi: psi.data().to_vec(),
        });
        psis.push(psi);
    }
    let refs: Vec<&Tensor> = psis.iter().collect();
    let psi_all = Tensor::concat_rows(&refs)?;
    let z_all = z.select_rows(&vec![0; total]);
    let images = model.decode(&z_all, &psi_all)?.mu;
    Ok(VariationGrid {
        steps,
        images,
        cells,
        source_echo,
    })
}
