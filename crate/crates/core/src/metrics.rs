//! Line-delimited JSON metrics and a small sweep reporter.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, VarNetError};
use crate::training::{LossReport, Observer};

/// Appends one JSON object per report, flushing after every line.
pub struct MetricsWriter<W: Write> {
    sink: W,
    last_step: Option<u64>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Self {
        Self { sink, last_step: None }
    }

    pub fn log(&mut self, report: &LossReport) -> std::io::Result<()> {
        if let Some(prev) = self.last_step {
            assert!(report.step > prev, "metrics steps must increase ({prev} then {})", report.step);
        }
        serde_json::to_writer(&mut self.sink, report)?;
        self.sink.write_all(b"\n")?;
        self.sink.flush()?;
        self.last_step = Some(report.step);
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

impl MetricsWriter<File> {
    pub fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| VarNetError::io(path, e))?;
        Ok(Self::new(f))
    }
}

/// Parses a metrics stream; blank lines are skipped.
pub fn read_metrics(reader: impl BufRead) -> Result<Vec<LossReport>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| VarNetError::Format(format!("metrics line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: LossReport =
            serde_json::from_str(&line).map_err(|e| VarNetError::Format(format!("metrics line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<LossReport>> {
    let f = File::open(path).map_err(|e| VarNetError::io(path, e))?;
    read_metrics(BufReader::new(f))
}

/// Final values of one run in a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub steps: u64,
    pub final_report: LossReport,
    /// Mean of each term over the last quarter of logged records.
    pub tail_mean: LossReport,
}

pub fn summarize(name: impl Into<String>, reports: &[LossReport]) -> Option<RunSummary> {
    let last = *reports.last()?;
    let tail = &reports[reports.len() - reports.len().div_ceil(4)..];
    let k = tail.len() as f64;
    let mean = |f: fn(&LossReport) -> f64| tail.iter().map(f).sum::<f64>() / k;
    Some(RunSummary {
        name: name.into(),
        steps: last.step,
        final_report: last,
        tail_mean: LossReport {
            step: last.step,
            re_n: mean(|r| r.re_n),
            kl_n: mean(|r| r.kl_n),
            r_disc_n: mean(|r| r.r_disc_n),
            l_disc_n: mean(|r| r.l_disc_n),
            total: mean(|r| r.total),
        },
    })
}

/// Fixed-width table of run summaries.
pub fn sweep_table(runs: &[RunSummary]) -> String {
    let mut s = format!(
        "{:<24} {:>7} {:>12} {:>10} {:>10} {:>10} {:>12}\n",
        "run", "step", "re", "kl", "r_disc", "l_disc", "total"
    );
    for r in runs {
        let t = &r.tail_mean;
        s.push_str(&format!(
            "{:<24} {:>7} {:>12.3} {:>10.3} {:>10.4} {:>10.4} {:>12.3}\n",
            r.name, r.steps, t.re_n, t.kl_n, t.r_disc_n, t.l_disc_n, t.total
        ));
    }
    s
}

/// Observer writing metrics and checkpoints into a run directory.
pub struct RunDir {
    pub dir: PathBuf,
    pub hyper: crate::training::HyperParams,
    pub dataset: Option<String>,
    pub linkage: Option<crate::training::Linkage>,
    metrics: MetricsWriter<File>,
}

impl RunDir {
    pub const METRICS: &'static str = "metrics.jsonl";
    pub const CHECKPOINT: &'static str = "model.ckpt";

    pub fn create(dir: &Path, hyper: crate::training::HyperParams, dataset: Option<String>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| VarNetError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hyper,
            dataset,
            linkage: None,
            metrics: MetricsWriter::append(&dir.join(Self::METRICS))?,
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join(Self::CHECKPOINT)
    }
}

impl Observer for RunDir {
    fn report(&mut self, report: &LossReport) -> Result<()> {
        log::info!(
            "step {} re {:.3} kl {:.3} r_disc {:.4} l_disc {:.4} total {:.3}",
            report.step,
            report.re_n,
            report.kl_n,
            report.r_disc_n,
            report.l_disc_n,
            report.total
        );
        self.metrics
            .log(report)
            .map_err(|e| VarNetError::io(self.dir.join(Self::METRICS), e))
    }

    fn checkpoint(&mut self, state: &crate::training::TrainState) -> Result<()> {
        let mut ck = crate::checkpoint::Checkpoint::new(state.clone(), self.hyper.clone());
        ck.dataset = self.dataset.clone();
        ck.linkage = self.linkage.clone();
        crate::checkpoint::save_checkpoint(&ck, &self.checkpoint_path())
    }
}
