//! CSV and text output. Floats use 17 significant digits so reruns can be
//! compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adpsgd_core::engine::RunRecord;

use crate::config::RunConfig;
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Accumulates CSV text with a fixed header.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_resolved_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::write(dir.join(RESOLVED_CONFIG), cfg.to_toml())?;
    Ok(())
}

/// `run.csv`: epoch, heldout_loss, lr, train_loss.
pub fn run_csv(record: &RunRecord) -> Csv {
    let mut csv = Csv::new(&["epoch", "heldout_loss", "lr", "train_loss"]);
    for e in &record.epochs {
        csv.row(&[
            e.epoch.to_string(),
            fmt_f64(e.heldout_loss),
            fmt_f64(e.lr),
            fmt_f64(e.train_loss),
        ]);
    }
    csv
}

/// `consensus.csv`: k, distance.
pub fn consensus_csv(record: &RunRecord) -> Csv {
    let mut csv = Csv::new(&["k", "distance"]);
    for i in &record.iterations {
        csv.row(&[i.k.to_string(), fmt_f64(i.consensus_distance)]);
    }
    csv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    NotConverged,
    Diverged,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "CONVERGED",
            Self::NotConverged => "NOT_CONVERGED",
            Self::Diverged => "DIVERGED",
        }
    }
}

pub fn run_status(record: &RunRecord, optimum: Option<&[f64]>, tolerance: Option<f64>) -> RunStatus {
    if record.diverged() {
        return RunStatus::Diverged;
    }
    let ok = match (optimum, tolerance) {
        (Some(w), Some(tol)) => record.distance_to(w) < tol,
        _ => record.final_heldout_loss() < record.initial_heldout_loss,
    };
    if ok {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    }
}

/// `summary.txt`: one `key = value` pair per line.
pub fn summary_text(record: &RunRecord, status: RunStatus, optimum: Option<&[f64]>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "status = {}", status.as_str());
    let _ = writeln!(s, "strategy = {}", record.strategy);
    let _ = writeln!(s, "learners = {}", record.learners);
    let _ = writeln!(s, "iterations_per_epoch = {}", record.iterations_per_epoch);
    let _ = writeln!(s, "iterations = {}", record.iterations.len());
    let _ = writeln!(s, "epochs_completed = {}", record.epochs.len());
    let _ = writeln!(s, "initial_heldout_loss = {}", fmt_f64(record.initial_heldout_loss));
    let _ = writeln!(s, "final_heldout_loss = {}", fmt_f64(record.final_heldout_loss()));
    if let Some(w) = optimum {
        let _ = writeln!(s, "distance_to_optimum = {}", fmt_f64(record.distance_to(w)));
    }
    let _ = writeln!(s, "diverged = {}", record.diverged());
    if let Some(d) = &record.divergence {
        let _ = writeln!(s, "divergence_epoch = {}", d.epoch);
        let _ = writeln!(s, "divergence_iteration = {}", d.iteration);
        let _ = writeln!(s, "divergence_reason = {}", d.reason);
    }
    s
}

pub fn write_run(dir: &Path, record: &RunRecord, status: RunStatus, optimum: Option<&[f64]>) -> Result<(), CliError> {
    prepare_dir(dir)?;
    run_csv(record).write(&dir.join("run.csv"))?;
    consensus_csv(record).write(&dir.join("consensus.csv"))?;
    fs::write(dir.join("summary.txt"), summary_text(record, status, optimum))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_rows_follow_header() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), fmt_f64(2.0)]);
        assert_eq!(c.as_str(), "a,b\n1,2.0000000000000000e0\n");
    }
}
