use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use varnet::attributes::AttributeSpec;
use varnet::checkpoint::load_checkpoint;
use varnet::config::{ExperimentConfig, StageOneConfig};
use varnet::data::{load_dataset, Dataset, Split};
use varnet::metrics::{read_metrics_file, summarize, sweep_table, RunDir, RunSummary};
use varnet::model::ModelConfig;
use varnet::training::{fit, stage_two_inputs, HyperParams, Linkage, TrainState};

#[derive(Args, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<u64>,
    /// Train a plain autoencoder first and the model on its posterior means.
    #[arg(long)]
    pub two_stage: bool,
    /// Continue from the checkpoint already in the run directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub gammas: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<u64>,
}

const STAGE_ONE_D_Z: usize = 10;

fn prepare(args: &TrainArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(b) = args.beta {
        cfg.train.beta = b;
    }
    if let Some(g) = args.gamma {
        cfg.train.gamma = g;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.iters {
        cfg.train.iters = n;
        if let Some(s1) = cfg.stage1.as_mut() {
            s1.train.iters = n;
        }
    }
    if args.two_stage && cfg.stage1.is_none() {
        let shape = cfg.model.input_shape;
        cfg.stage1 = Some(StageOneConfig {
            model: ModelConfig::mlp(STAGE_ONE_D_Z, shape, 256),
            train: HyperParams {
                gamma: 0.0,
                iters: cfg.train.iters,
                ..HyperParams::default()
            },
        });
        cfg.model.input_shape = [1, 1, STAGE_ONE_D_Z];
        cfg.model.two_stage = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains one configuration and returns the final (second-stage) summary.
pub fn train(args: &TrainArgs) -> anyhow::Result<RunSummary> {
    let cfg = prepare(args)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .context("no run directory: pass --out or set output_dir")?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;

    let data = load_dataset(&cfg.dataset.id, Split::Train, Some(cfg.dataset.train), cfg.seed)?;
    log::info!("{}: {} training examples", data.id, data.len());
    let dir = match &cfg.stage1 {
        None => {
            run_stage(&out, cfg.model.clone(), cfg.attributes.clone(), &cfg.train, &data, cfg.seed, None, args.resume)?;
            out.clone()
        }
        Some(s1) => {
            let first = run_stage(
                &out.join("stage1"),
                s1.model.clone(),
                AttributeSpec::empty(),
                &s1.train,
                &data,
                cfg.seed,
                None,
                args.resume,
            )?;
            let (latent, linkage) = stage_two_inputs(&first.model, &data)?;
            let dir = out.join("stage2");
            run_stage(
                &dir,
                cfg.model.clone(),
                cfg.attributes.clone(),
                &cfg.train,
                &latent,
                cfg.seed,
                Some(linkage),
                args.resume,
            )?;
            dir
        }
    };
    let name = out.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
    let summary = summarize(name, &read_metrics_file(&dir.join(RunDir::METRICS))?)
        .context("the run logged no metrics")?;
    print!("{}", sweep_table(std::slice::from_ref(&summary)));
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    dir: &Path,
    model: ModelConfig,
    spec: AttributeSpec,
    hp: &HyperParams,
    data: &Dataset,
    seed: u64,
    linkage: Option<Linkage>,
    resume: bool,
) -> anyhow::Result<TrainState> {
    let ckpt = dir.join(RunDir::CHECKPOINT);
    let mut state = if ckpt.exists() {
        if !resume {
            bail!("{} already holds a run; pass --resume to continue it", dir.display());
        }
        let ck = load_checkpoint(&ckpt)?;
        if ck.state.model.config != model || ck.state.model.spec() != &spec {
            bail!("{} was trained with a different model configuration", ckpt.display());
        }
        truncate_metrics(&dir.join(RunDir::METRICS), ck.state.step)?;
        log::info!("resuming {} at step {}", dir.display(), ck.state.step);
        ck.state
    } else {
        TrainState::init(model, spec, hp, seed)?
    };
    let mut run = RunDir::create(dir, hp.clone(), Some(data.id.clone()))?;
    run.linkage = linkage;
    fit(&mut state, data, hp, &mut run)?;
    Ok(state)
}

/// Drops records logged after the checkpoint a run resumes from.
fn truncate_metrics(path: &Path, step: u64) -> anyhow::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut text = String::new();
    for r in read_metrics_file(path)?.into_iter().filter(|r| r.step <= step) {
        text.push_str(&serde_json::to_string(&r)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let mut summaries = Vec::new();
    for &beta in &args.betas {
        for &gamma in &args.gammas {
            let run = TrainArgs {
                config: args.config.clone(),
                out: Some(args.out.join(format!("beta{beta}_gamma{gamma}"))),
                beta: Some(beta),
                gamma: Some(gamma),
                seed: args.seed,
                iters: args.iters,
                two_stage: false,
                resume: false,
            };
            log::info!("sweep run beta = {beta}, gamma = {gamma}");
            summaries.push(train(&run)?);
        }
    }
    let table = sweep_table(&summaries);
    std::fs::write(args.out.join("sweep.txt"), &table)?;
    println!("\n{table}");
    Ok(())
}

pub fn report(runs: &[PathBuf]) -> anyhow::Result<()> {
    let mut summaries = Vec::new();
    for path in runs {
        let file = if path.is_dir() { path.join(RunDir::METRICS) } else { path.clone() };
        let name = path.display().to_string();
        match summarize(name, &read_metrics_file(&file)?) {
            Some(s) => summaries.push(s),
            None => log::warn!("{} has no records", file.display()),
        }
    }
    print!("{}", sweep_table(&summaries));
    Ok(())
}
