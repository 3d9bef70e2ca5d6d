use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputConfig;
use super::fit::LogLogFit;
use super::run::{
    fit_means, CalibrationRecord, EigenExperimentResult, EigenIndexSummary, ExperimentResult, PerNSummary,
    TrialRecord,
};
use crate::error::{Error, Result};

/// Contents of the summary JSON. Holds nothing time-dependent so reruns
/// are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub per_n: Vec<PerNSummary>,
    pub fit: Option<LogLogFit>,
    pub calibration: CalibrationRecord,
    pub failed_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub config_hash: String,
    pub indices: Vec<EigenIndexSummary>,
    pub calibration: CalibrationRecord,
    pub failed_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

impl OutputPaths {
    pub fn resolve(dir: &Path, cfg: &OutputConfig) -> Self {
        Self {
            csv: dir.join(&cfg.csv),
            summary: dir.join(&cfg.summary),
            plot: dir.join(&cfg.plot),
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot-style columns `n mean std fit`.
pub fn write_plot_data(path: &Path, per_n: &[PerNSummary], fit: Option<&LogLogFit>) -> Result<()> {
    create_parent(path)?;
    let mut f = fs::File::create(path)?;
    match fit {
        Some(fit) => writeln!(
            f,
            "# slope {} intercept {} r2 {}",
            fit.slope, fit.intercept, fit.r2
        )?,
        None => writeln!(f, "# no fit")?,
    }
    writeln!(f, "# n mean_error std fitted")?;
    for s in per_n {
        let fitted = fit.map_or(f64::NAN, |fit| fit.predict(s.n as f64));
        writeln!(f, "{} {} {} {}", s.n, s.mean, s.std, fitted)?;
    }
    Ok(())
}

impl ExperimentResult {
    pub fn summary(&self) -> Summary {
        Summary {
            config_hash: self.config_hash.clone(),
            per_n: self.per_n.clone(),
            fit: self.fit,
            calibration: self.calibration.clone(),
            failed_trials: self.failed_trials,
            quadrature_residual: self.quadrature_residual,
        }
    }

    /// Writes the per-trial CSV, the summary JSON and the plot data.
    pub fn write_outputs(&self, dir: &Path, cfg: &OutputConfig) -> Result<OutputPaths> {
        let paths = OutputPaths::resolve(dir, cfg);
        write_csv(&paths.csv, &self.records)?;
        write_json(&paths.summary, &self.summary())?;
        write_plot_data(&paths.plot, &self.per_n, self.fit.as_ref())?;
        Ok(paths)
    }
}

impl EigenExperimentResult {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            config_hash: self.config_hash.clone(),
            indices: self.indices.clone(),
            calibration: self.calibration.clone(),
            failed_trials: self.failed_trials,
        }
    }

    /// CSV of all records, summary JSON, and eigenvalue-error plot data of
    /// the first tracked nonzero index.
    pub fn write_outputs(&self, dir: &Path, cfg: &OutputConfig) -> Result<OutputPaths> {
        let paths = OutputPaths::resolve(dir, cfg);
        write_csv(&paths.csv, &self.records)?;
        write_json(&paths.summary, &self.summary())?;
        let shown = self
            .indices
            .iter()
            .find(|s| s.eigenvalue > 0.0)
            .or(self.indices.first());
        match shown {
            Some(s) => write_plot_data(&paths.plot, &s.eigenvalue_per_n, s.eigenvalue_fit.as_ref())?,
            None => write_plot_data(&paths.plot, &[], None)?,
        }
        Ok(paths)
    }
}

/// Reads a `n,trial,seed,error` CSV.
pub fn read_trial_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Per-n summaries and fit recomputed from a trial CSV.
pub fn fit_trial_csv(path: &Path) -> Result<(Vec<PerNSummary>, Option<LogLogFit>)> {
    let records = read_trial_csv(path)?;
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let per_n: Vec<PerNSummary> = ns
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = records.iter().filter(|r| r.n == n).filter_map(|r| r.error).collect();
            let (mean, std) = super::fit::mean_std(&v);
            PerNSummary {
                n,
                mean,
                std,
                trials_ok: v.len(),
            }
        })
        .collect();
    let fit = fit_means(&per_n);
    Ok((per_n, fit))
}
