use std::cell::OnceCell;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::{json, Value};
use varnet::attributes::AttributeBlock;
use varnet::checkpoint::{fingerprint, load_checkpoint, Checkpoint};
use varnet::data::{load_dataset, Dataset, Metadata, Split};
use varnet::image::{decode_png, tile, Raster};
use varnet::model::VarNet;
use varnet::sampling::{self, BlockSetting, GridAxis, InterpolationAxis, VariationRequest, ZMode};
use varnet::Tensor;

#[derive(Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    ckpt: PathBuf,
    /// Output directory for images and `cells.json`.
    #[arg(long, default_value = "generated")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First-stage checkpoint used to render a two-stage model's outputs.
    #[arg(long)]
    stage1: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ZArg::Mean)]
    z: ZArg,
    /// Test examples loaded for `--index`.
    #[arg(long, default_value_t = 2000)]
    eval: usize,
}

#[derive(Args)]
struct Source {
    /// Test-split example of the checkpoint's dataset.
    #[arg(long, conflicts_with = "image")]
    index: Option<usize>,
    /// PNG file with the model's input shape.
    #[arg(long)]
    image: Option<PathBuf>,
    /// One label per label field, overriding the example's own.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    continuous: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZArg {
    Mean,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Template,
    Attribute,
}

#[derive(Subcommand)]
enum Mode {
    /// Random samples with `z` and attributes drawn from their priors.
    Unconditional {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Random templates rendered with fixed attributes.
    WithAttr {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// One setting per block, e.g. `0=label:3` or `1=alpha:0.2,0.9`.
        #[arg(long = "set", required = true)]
        sets: Vec<String>,
    },
    /// One input re-rendered with some blocks changed.
    Vary {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long = "set", required = true)]
        sets: Vec<String>,
    },
    /// One input re-rendered with attributes drawn from the prior.
    VaryRandom {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Linear path between two test examples in `z` or in attribute space.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, value_enum, default_value_t = AxisArg::Attribute)]
        axis: AxisArg,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Sweep attribute coordinates over [0, 1] with the template held fixed.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// `block:steps` or `block:coord:steps`; give one per grid axis.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Settings applied before sweeping.
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long, default_value_t = 2)]
        pad: usize,
    },
}

/// Parses `block=kind:values`, with an optional `@label` for alpha settings.
fn parse_setting(s: &str) -> anyhow::Result<(usize, BlockSetting)> {
    let (block, rest) = s.split_once('=').with_context(|| format!("`{s}`: expected block=kind:values"))?;
    let block = block.trim().parse().with_context(|| format!("`{s}`: bad block index"))?;
    let (kind, values) = rest.split_once(':').with_context(|| format!("`{s}`: expected kind:values"))?;
    let floats = |v: &str| -> anyhow::Result<Vec<f64>> {
        v.split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("`{s}`: bad number `{t}`")))
            .collect()
    };
    let setting = match kind.trim() {
        "label" => BlockSetting::Label {
            label: values.trim().parse().with_context(|| format!("`{s}`: bad label"))?,
        },
        "alpha" => {
            let (v, label) = match values.split_once('@') {
                Some((v, l)) => (v, Some(l.trim().parse().with_context(|| format!("`{s}`: bad label"))?)),
                None => (values, None),
            };
            BlockSetting::Alpha { alpha: floats(v)?, label }
        }
        "continuous" => BlockSetting::Continuous { values: floats(values)? },
        "psi" => BlockSetting::Psi { psi: floats(values)? },
        other => bail!("`{s}`: unknown setting kind `{other}` (label, alpha, continuous, psi)"),
    };
    Ok((block, setting))
}

fn parse_settings(sets: &[String], blocks: usize) -> anyhow::Result<Vec<Option<BlockSetting>>> {
    let mut out = vec![None; blocks];
    for s in sets {
        let (b, setting) = parse_setting(s)?;
        ensure!(b < blocks, "`{s}`: the model has {blocks} attribute blocks");
        ensure!(out[b].is_none(), "block {b} is set twice");
        out[b] = Some(setting);
    }
    Ok(out)
}

fn parse_axis(s: &str) -> anyhow::Result<GridAxis> {
    let parts = s
        .split(':')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("`{s}`: expected block:steps or block:coord:steps"))?;
    match parts[..] {
        [block, steps] => Ok(GridAxis { block, coord: 0, steps }),
        [block, coord, steps] => Ok(GridAxis { block, coord, steps }),
        _ => bail!("`{s}`: expected block:steps or block:coord:steps"),
    }
}

struct Ctx {
    ck: Checkpoint,
    stage1: Option<VarNet>,
    data_id: Option<String>,
    eval: usize,
    data: OnceCell<Dataset>,
    z: ZMode,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn open(c: &Common) -> anyhow::Result<Self> {
        let ck = load_checkpoint(&c.ckpt).with_context(|| format!("loading {}", c.ckpt.display()))?;
        let stage1 = match &c.stage1 {
            Some(p) => {
                let s = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
                if let Some(l) = &ck.linkage {
                    ensure!(
                        fingerprint(&s.state.model.store) == l.stage1_fingerprint,
                        "{} is not the first stage this model was trained on",
                        p.display()
                    );
                }
                Some(s.state.model)
            }
            None => {
                if ck.model().config.two_stage {
                    log::warn!("two-stage checkpoint without --stage1: writing representation vectors");
                }
                None
            }
        };
        let data_id = match &ck.linkage {
            Some(l) => Some(l.dataset.clone()),
            None => ck.dataset.clone(),
        };
        Ok(Self {
            ck,
            stage1,
            data_id,
            eval: c.eval,
            data: OnceCell::new(),
            z: match c.z {
                ZArg::Mean => ZMode::Mean,
                ZArg::Sample => ZMode::Sample,
            },
            seed: c.seed,
            out: c.out.clone(),
        })
    }

    fn model(&self) -> &VarNet {
        self.ck.model()
    }

    fn dataset(&self) -> anyhow::Result<&Dataset> {
        if let Some(d) = self.data.get() {
            return Ok(d);
        }
        let id = self.data_id.as_deref().context("the checkpoint names no dataset; use --image")?;
        let d = load_dataset(id, Split::Test, Some(self.eval), self.ck.state.seed)?;
        Ok(self.data.get_or_init(|| d))
    }

    /// Shape of raw inputs, before any first-stage encoding.
    fn raw_shape(&self) -> [usize; 3] {
        match &self.stage1 {
            Some(s) => s.config.input_shape,
            None => self.model().config.input_shape,
        }
    }

    fn image_shape(&self) -> [usize; 3] {
        match self.raw_shape() {
            [c, h, w] if c == 1 || c == 3 => [c, h, w],
            [c, h, w] => [1, c * h, w],
        }
    }

    fn example(&self, index: usize) -> anyhow::Result<(Tensor, Metadata)> {
        let d = self.dataset()?;
        ensure!(index < d.len(), "index {index} out of range 0..{}", d.len());
        let one = d.select(&[index]);
        self.to_model_space(one.x, one.meta)
    }

    fn input(&self, src: &Source) -> anyhow::Result<(Tensor, Metadata)> {
        let (x, mut meta) = match (src.index, &src.image) {
            (Some(i), None) => self.example(i)?,
            (None, Some(path)) => {
                let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let (values, shape) = decode_png(&bytes)?;
                ensure!(shape == self.raw_shape(), "{} is {shape:?}, expected {:?}", path.display(), self.raw_shape());
                self.to_model_space(Tensor::row_vector(values), Metadata::none())?
            }
            _ => bail!("give one of --index or --image"),
        };
        if !src.labels.is_empty() {
            meta.labels = src.labels.iter().map(|&l| vec![l]).collect();
        }
        if !src.continuous.is_empty() {
            meta.continuous = Some(Tensor::row_vector(src.continuous.clone()));
        }
        Ok((x, meta))
    }

    fn to_model_space(&self, x: Tensor, meta: Metadata) -> anyhow::Result<(Tensor, Metadata)> {
        match &self.stage1 {
            Some(s) => Ok((s.encode(&x)?.mu, meta)),
            None if self.model().config.two_stage => bail!("this model reads first-stage latents; pass --stage1"),
            None => Ok((x, meta)),
        }
    }

    fn render(&self, t: &Tensor) -> anyhow::Result<Tensor> {
        Ok(match &self.stage1 {
            Some(s) => s.decode(t, &Tensor::zeros(t.rows(), 0))?.mu,
            None => t.clone(),
        })
    }

    fn out_path(&self, name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    /// Writes each row as `{prefix}_{i:03}.png`, returning the file names.
    fn save_rows(&self, prefix: &str, t: &Tensor) -> anyhow::Result<Vec<String>> {
        let images = self.render(t)?;
        (0..images.rows())
            .map(|r| {
                let name = format!("{prefix}_{r:03}.png");
                Raster::from_planar(images.row(r), self.image_shape())?.save_png(&self.out_path(&name)?)?;
                Ok(name)
            })
            .collect()
    }

    fn sidecar(&self, mode: &str, extra: Value, cells: Vec<Value>) -> anyhow::Result<()> {
        let mut record = json!({
            "mode": mode,
            "step": self.ck.state.step,
            "fingerprint": fingerprint(&self.model().store),
            "seed": self.seed,
            "z_mode": self.z,
            "cells": cells,
        });
        if let (Value::Object(r), Value::Object(e)) = (&mut record, extra) {
            r.extend(e);
        }
        let path = self.out_path("cells.json")?;
        std::fs::write(&path, serde_json::to_string_pretty(&record)?)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn psi_cells(files: Vec<String>, psi: &Tensor) -> Vec<Value> {
    files
        .into_iter()
        .enumerate()
        .map(|(r, file)| json!({"file": file, "psi": psi.row(r)}))
        .collect()
}

/// Per-axis record of what one grid cell set: attention weight, metadata
/// value or label (discrete axes already carry the label as their value).
fn axis_record(model: &VarNet, axis: &GridAxis, value: f64) -> Value {
    match &model.spec().blocks()[axis.block] {
        AttributeBlock::FixedDiscrete { .. } => json!({"block": axis.block, "label": value as usize}),
        AttributeBlock::FixedContinuous { .. } => json!({"block": axis.block, "coord": axis.coord, "value": value}),
        _ => json!({"block": axis.block, "coord": axis.coord, "alpha": value}),
    }
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    match &args.mode {
        Mode::Unconditional { common, n } => {
            let ctx = Ctx::open(common)?;
            let (z, psi) = sampling::unconditional_draw(ctx.model(), *n, ctx.seed)?;
            let images = if *n == 0 { Tensor::zeros(0, ctx.model().input_dim()) } else { ctx.model().decode(&z, &psi)?.mu };
            let files = ctx.save_rows("sample", &images)?;
            ctx.sidecar("unconditional", json!({}), psi_cells(files, &psi))
        }
        Mode::WithAttr { common, n, sets } => {
            let ctx = Ctx::open(common)?;
            let settings = parse_settings(sets, ctx.model().spec().blocks().len())?;
            ensure!(settings.iter().all(Option::is_some), "with-attr needs a --set for every attribute block");
            let psi = sampling::compose_psi(ctx.model(), &settings, None)?;
            let images = sampling::sample_with_attributes(ctx.model(), psi.data(), *n, ctx.seed)?;
            let files = ctx.save_rows("sample", &images)?;
            let cells = files.into_iter().map(|f| json!({"file": f, "settings": settings})).collect();
            ctx.sidecar("with-attr", json!({"psi": psi.data()}), cells)
        }
        Mode::Vary { common, source, sets } => {
            let ctx = Ctx::open(common)?;
            let (x, meta) = ctx.input(source)?;
            let settings = parse_settings(sets, ctx.model().spec().blocks().len())?;
            let own = ctx.model().attributes_of(&x, &meta)?;
            let psi = sampling::compose_psi(ctx.model(), &settings, Some(&own))?;
            let out = sampling::vary_input(ctx.model(), &x, &psi, ctx.z, ctx.seed)?;
            let echo = sampling::vary_input(ctx.model(), &x, &own, ZMode::Mean, 0)?;
            let files = ctx.save_rows("vary", &out)?;
            ctx.save_rows("source", &echo)?;
            let cells = vec![json!({"file": files[0], "settings": settings, "psi": psi.data()})];
            ctx.sidecar("vary", json!({"source_psi": own.data(), "source": "source_000.png"}), cells)
        }
        Mode::VaryRandom { common, source, n } => {
            let ctx = Ctx::open(common)?;
            let (x, _) = ctx.input(source)?;
            let (images, psi) = sampling::vary_input_random_with_psi(ctx.model(), &x, *n, ctx.z, ctx.seed)?;
            let files = ctx.save_rows("vary", &images)?;
            ctx.sidecar("vary-random", json!({}), psi_cells(files, &psi))
        }
        Mode::Interpolate {
            common,
            from,
            to,
            axis,
            steps,
        } => {
            let ctx = Ctx::open(common)?;
            let (xa, ma) = ctx.example(*from)?;
            let (xb, mb) = ctx.example(*to)?;
            let axis = match axis {
                AxisArg::Template => InterpolationAxis::Template,
                AxisArg::Attribute => InterpolationAxis::Attribute,
            };
            let path = sampling::interpolate(ctx.model(), (&xa, &ma), (&xb, &mb), axis, *steps)?;
            let files = ctx.save_rows("step", &path.images)?;
            let rendered = ctx.render(&path.images)?;
            let tiles: Vec<Option<&[f64]>> = (0..rendered.rows()).map(|r| Some(rendered.row(r))).collect();
            tile(&tiles, 1, *steps, ctx.image_shape(), 2)?.save_png(&ctx.out_path("strip.png")?)?;
            let cells = files
                .into_iter()
                .enumerate()
                .map(|(i, f)| {
                    json!({"file": f, "t": i as f64 / (*steps - 1) as f64, "z": path.z.row(i), "psi": path.psi.row(i)})
                })
                .collect();
            ctx.sidecar("interpolate", json!({"from": from, "to": to, "axis": axis, "strip": "strip.png"}), cells)
        }
        Mode::Grid {
            common,
            source,
            axes,
            sets,
            pad,
        } => {
            let ctx = Ctx::open(common)?;
            let (x, meta) = ctx.input(source)?;
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<anyhow::Result<Vec<_>>>()?;
            let overrides = parse_settings(sets, ctx.model().spec().blocks().len())?;
            let g = sampling::variation_grid(
                ctx.model(),
                &VariationRequest {
                    source: x,
                    meta,
                    overrides: overrides.clone(),
                    axes: axes.clone(),
                    z_mode: ctx.z,
                    seed: ctx.seed,
                },
            )?;
            let files = ctx.save_rows("cell", &g.images)?;
            ctx.save_rows("source", &g.source_echo)?;
            let cols = g.steps.last().copied().unwrap_or(1);
            let rows = g.cells.len() / cols.max(1);
            let rendered = ctx.render(&g.images)?;
            let echo = ctx.render(&g.source_echo)?;
            let mut tiles: Vec<Option<&[f64]>> = vec![None; (rows + 1) * cols];
            for (r, t) in tiles.iter_mut().take(rendered.rows()).enumerate() {
                *t = Some(rendered.row(r));
            }
            tiles[rows * cols] = Some(echo.data());
            tile(&tiles, rows + 1, cols, ctx.image_shape(), *pad)?.save_png(&ctx.out_path("grid.png")?)?;
            let cells = files
                .into_iter()
                .zip(&g.cells)
                .map(|(f, c)| {
                    let set: Vec<Value> = axes
                        .iter()
                        .zip(&c.values)
                        .map(|(a, v)| axis_record(ctx.model(), a, *v))
                        .collect();
                    json!({"file": f, "index": c.index, "axes": set, "psi": c.psi})
                })
                .collect();
            let extra = json!({
                "grid": "grid.png",
                "rows": rows,
                "cols": cols,
                "steps": g.steps,
                "overrides": overrides,
                "source": "source_000.png",
            });
            ctx.sidecar("grid", extra, cells)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_parse() {
        assert_eq!(parse_setting("1=label:3").unwrap(), (1, BlockSetting::Label { label: 3 }));
        assert_eq!(
            parse_setting("0=alpha:0.25, 1@2").unwrap(),
            (
                0,
                BlockSetting::Alpha {
                    alpha: vec![0.25, 1.0],
                    label: Some(2)
                }
            )
        );
        for bad in ["label:3", "x=label:3", "0=hue:1", "0=alpha:a"] {
            assert!(parse_setting(bad).is_err(), "{bad}");
        }
        assert!(parse_settings(&["0=label:1".into(), "0=label:2".into()], 2).is_err());
        assert!(parse_settings(&["2=label:1".into()], 2).is_err());
    }

    #[test]
    fn axes_parse() {
        assert_eq!(parse_axis("1:5").unwrap(), GridAxis { block: 1, coord: 0, steps: 5 });
        assert_eq!(parse_axis("0:2:3").unwrap(), GridAxis { block: 0, coord: 2, steps: 3 });
        assert!(parse_axis("1").is_err());
        assert!(parse_axis("a:1").is_err());
    }
}
