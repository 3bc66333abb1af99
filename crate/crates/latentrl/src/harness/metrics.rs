//! CSV metrics stream with a fixed, documented column set.
//!
//! Everything in `metrics.csv` is a deterministic function of (config, seed);
//! wall-clock timings go to a `timing.csv` sidecar so that reproducibility
//! checks can compare the metrics file bitwise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{HarnessError, Result};

pub const METRICS_COLUMNS: &[&str] = &[
    "env_step",
    "episode_return",
    "eval_return_mean",
    "eval_return_std",
    "loss_encoder_model",
    "loss_policy",
    "loss_classifier",
    "loss_q",
    "loss_reward",
    "intrinsic_reward_mean",
    "classifier_accuracy",
    "grad_norm_encoder_model",
    "grad_norm_policy",
    "grad_norm_classifier",
    "grad_norm_q",
    "grad_norm_reward",
];

#[derive(Clone, Copy, Debug, Default)]
pub struct MetricsRow {
    pub env_step: u64,
    pub episode_return: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub loss_encoder_model: f64,
    pub loss_policy: f64,
    pub loss_classifier: f64,
    pub loss_q: f64,
    pub loss_reward: f64,
    pub intrinsic_reward_mean: f64,
    pub classifier_accuracy: f64,
    pub grad_norm_encoder_model: f64,
    pub grad_norm_policy: f64,
    pub grad_norm_classifier: f64,
    pub grad_norm_q: f64,
    pub grad_norm_reward: f64,
    /// Written to the timing sidecar, not the metrics file.
    pub wall_clock_s: f64,
}

pub struct MetricsWriter {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(metrics, "{}", METRICS_COLUMNS.join(","))?;
        let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
        writeln!(timing, "env_step,wall_clock_s")?;
        Ok(MetricsWriter {
            metrics,
            timing,
            last_step: None,
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        if let Some(last) = self.last_step {
            if row.env_step <= last {
                return Err(HarnessError::Invalid(format!(
                    "metrics env_step must increase: {} after {last}",
                    row.env_step
                )));
            }
        }
        self.last_step = Some(row.env_step);
        writeln!(
            self.metrics,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.env_step,
            fmt(row.episode_return),
            fmt(row.eval_return_mean),
            fmt(row.eval_return_std),
            fmt(row.loss_encoder_model),
            fmt(row.loss_policy),
            fmt(row.loss_classifier),
            fmt(row.loss_q),
            fmt(row.loss_reward),
            fmt(row.intrinsic_reward_mean),
            fmt(row.classifier_accuracy),
            fmt(row.grad_norm_encoder_model),
            fmt(row.grad_norm_policy),
            fmt(row.grad_norm_classifier),
            fmt(row.grad_norm_q),
            fmt(row.grad_norm_reward),
        )?;
        writeln!(self.timing, "{},{:.3}", row.env_step, row.wall_clock_s)?;
        self.metrics.flush()?;
        self.timing.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.timing.flush()?;
        Ok(())
    }
}

/// Shortest round-trip float formatting keeps the file diffable and exact.
fn fmt(v: f64) -> String {
    format!("{v}")
}
