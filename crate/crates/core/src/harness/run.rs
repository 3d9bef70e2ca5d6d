use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CalibrationMode, ExperimentConfig, SolverMethod, Truncation};
use super::fit::{loglog_fit, mean_std, LogLogFit};
use crate::error::{Error, Result};
use crate::graph::{
    build_laplacian_with, calibration_constant, scale_parameter, KernelScheme, LaplacianOperator,
    DENSE_CACHE_MAX_POINTS,
};
use crate::manifolds::{continuum_eigenpairs, multiplicity_groups, sample_uniform, ManifoldModel, PointCloud};
use crate::network::{forward_continuum, forward_discrete, mnn_error, ContinuumOptions, FeatureField};
use crate::seed::derive_seed;
use crate::spectral::{
    align_to_continuum, dense_eigenpairs, eigen_errors, project_eigenfunctions, smallest_eigenpairs, EigenSystem,
    LanczosOptions,
};

/// Mean errors below this are roundoff; no rate is fitted to them.
pub const FIT_FLOOR: f64 = 1e-10;

/// Abort when more than this fraction of trials fail to converge.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

const CALIBRATION_TAG: u64 = 0xca1b;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Rough cap on memory held by concurrently running trials.
    pub memory_budget_bytes: usize,
    /// Print one line per finished `n` to stderr.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            memory_budget_bytes: 2 << 30,
            progress: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// `analytic` or `empirical`.
    pub path: String,
    pub mode: CalibrationMode,
    pub constant: f64,
    pub analytic_constant: f64,
    /// `λ^n / λ` of the first nonzero group under the analytic constant,
    /// when measured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the eigensolver failed.
    pub error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerNSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub trials_ok: usize,
}

impl PerNSummary {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.trials_ok as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub records: Vec<TrialRecord>,
    pub per_n: Vec<PerNSummary>,
    pub fit: Option<LogLogFit>,
    pub calibration: CalibrationRecord,
    pub failed_trials: usize,
    /// Largest hidden-layer re-expansion residual seen, if any.
    pub quadrature_residual: Option<f64>,
    pub wall_clock: Duration,
}

fn eigensolve(op: &LaplacianOperator, k: usize, cfg: &ExperimentConfig, seed: u64) -> Result<EigenSystem> {
    match cfg.solver.method {
        SolverMethod::Dense => dense_eigenpairs(op, k),
        SolverMethod::Lanczos => {
            let opts = LanczosOptions {
                tol: cfg.solver.tol,
                seed,
                max_iterations: cfg.solver.max_iterations,
            };
            smallest_eigenpairs(op, k, &opts)
        }
    }
}

fn kernel_scheme(cfg: &ExperimentConfig, model: &ManifoldModel, n: usize, calibration: f64) -> Result<KernelScheme> {
    let d = model.intrinsic_dim;
    let t = scale_parameter(n, d, cfg.scheme.bandwidth_constant());
    let scheme = KernelScheme::new(cfg.scheme.kind, d, t, calibration)?;
    Ok(match cfg.scheme.cutoff {
        Some(c) => scheme.with_cutoff(c),
        None => scheme,
    })
}

fn sample_and_build(
    cfg: &ExperimentConfig,
    model: &ManifoldModel,
    n: usize,
    seed: u64,
    calibration: f64,
) -> Result<(PointCloud, LaplacianOperator)> {
    let cloud = sample_uniform(model, n, seed)?;
    let op = build_laplacian_with(&cloud, kernel_scheme(cfg, model, n, calibration)?, cfg.scheme.storage)?;
    Ok((cloud, op))
}

/// Resolves the calibration constant according to the configured mode.
pub fn resolve_calibration(cfg: &ExperimentConfig) -> Result<CalibrationRecord> {
    let model = cfg.manifold_model();
    let analytic = calibration_constant(cfg.scheme.kind, model.intrinsic_dim, model.volume)?;
    let mut record = CalibrationRecord {
        path: "analytic".into(),
        mode: cfg.scheme.calibration,
        constant: analytic,
        analytic_constant: analytic,
        measured_ratio: None,
    };
    if cfg.scheme.calibration == CalibrationMode::Analytic {
        return Ok(record);
    }
    // First nonzero group of the continuum spectrum.
    let pairs = continuum_eigenpairs(&model, model.complete_group_count(2))?;
    let group = multiplicity_groups(&pairs)[1].clone();
    let n = cfg.scheme.calibration_points;
    let seed = derive_seed(&[cfg.seed, CALIBRATION_TAG, n as u64]);
    let (_, op) = sample_and_build(cfg, &model, n, seed, analytic)?;
    let eig = eigensolve(&op, group.end, cfg, seed)?;
    let measured = eig.eigenvalues[group.clone()].iter().sum::<f64>() / group.len() as f64;
    let ratio = measured / pairs[group.start].eigenvalue;
    record.measured_ratio = Some(ratio);
    let use_empirical = match cfg.scheme.calibration {
        CalibrationMode::Empirical => true,
        CalibrationMode::Checked => (ratio - 1.0).abs() > 0.2,
        CalibrationMode::Analytic => false,
    };
    if use_empirical {
        record.path = "empirical".into();
        record.constant = analytic / ratio;
    }
    Ok(record)
}

struct TrialOutcome {
    error: f64,
    quadrature_residual: Option<f64>,
}

fn network_trial(
    cfg: &ExperimentConfig,
    model: &ManifoldModel,
    n: usize,
    seed: u64,
    calibration: f64,
) -> Result<TrialOutcome> {
    let net = cfg.network.build()?;
    let signals = cfg.signal.signals();
    let (cloud, op) = sample_and_build(cfg, model, n, seed, calibration)?;
    let eig = eigensolve(&op, cfg.truncation.modes(n), cfg, seed)?;
    drop(op);
    let x0 = FeatureField::from_signals(&signals, model, &cloud)?;
    let discrete = forward_discrete(&net, &eig, &x0)?;
    let opts = ContinuumOptions {
        expansion_modes: cfg.expansion_modes,
        ..ContinuumOptions::default()
    };
    let continuum = forward_continuum(&net, model, &signals, &cloud, &opts)?;
    Ok(TrialOutcome {
        error: mnn_error(&discrete, &continuum.field)?,
        quadrature_residual: continuum.quadrature_residual,
    })
}

fn trial_bytes(n: usize, k: usize, cfg: &ExperimentConfig) -> usize {
    let dense = match cfg.scheme.storage {
        crate::graph::StorageMode::Auto => n <= DENSE_CACHE_MAX_POINTS,
        crate::graph::StorageMode::CachedDense => true,
        crate::graph::StorageMode::OnTheFly => false,
    } || cfg.solver.method == SolverMethod::Dense;
    let matrix = if dense { n * n * 8 } else { 0 };
    let dense_solver = if cfg.solver.method == SolverMethod::Dense { 2 * n * n * 8 } else { 0 };
    let krylov = (40 * k + 2).min(n + 1) * n * 8;
    matrix + dense_solver + krylov
}

/// Runs `trial` for every `(n, t)` with bounded concurrency, in order.
fn run_trials<T: Send>(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    truncation: Truncation,
    mut on_n: impl FnMut(usize, &[(u64, Result<T>)]),
    trial: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<(usize, usize, u64, Result<T>)>> {
    let grid = cfg.n_grid.values()?;
    let mut out = Vec::with_capacity(grid.len() * cfg.trials);
    for &n in &grid {
        let batch = (opts.memory_budget_bytes / trial_bytes(n, truncation.modes(n), cfg).max(1)).max(1);
        let seeds: Vec<u64> = (0..cfg.trials)
            .map(|t| derive_seed(&[cfg.seed, n as u64, t as u64]))
            .collect();
        let mut results: Vec<(u64, Result<T>)> = Vec::with_capacity(cfg.trials);
        for chunk in seeds.chunks(batch) {
            let part: Vec<(u64, Result<T>)> = chunk.par_iter().map(|&s| (s, trial(n, s))).collect();
            results.extend(part);
        }
        on_n(n, &results);
        out.extend(results.into_iter().enumerate().map(|(t, (s, r))| (n, t, s, r)));
    }
    Ok(out)
}

/// Splits off convergence failures; any other error aborts.
fn classify<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ConvergenceFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

fn summarize(n: usize, values: &[f64]) -> PerNSummary {
    let (mean, std) = mean_std(values);
    PerNSummary {
        n,
        mean,
        std,
        trials_ok: values.len(),
    }
}

/// Fit over sizes with successful trials, or `None` when the errors are at
/// roundoff level or fewer than three sizes are usable.
pub fn fit_means(per_n: &[PerNSummary]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = per_n
        .iter()
        .filter(|s| s.trials_ok > 0 && s.mean > 0.0)
        .map(|s| (s.n as f64, s.mean))
        .collect();
    if pts.len() < 3 || pts.iter().all(|(_, e)| *e < FIT_FLOOR) {
        return None;
    }
    loglog_fit(&pts).ok()
}

pub fn run_convergence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_convergence_experiment_with(cfg, &RunOptions::default())
}

/// Monte Carlo comparison of the discrete and continuum networks.
///
/// Every trial resamples the points with seed `derive_seed([master, n,
/// trial])`; the signal and the filters stay fixed.
pub fn run_convergence_experiment_with(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.manifold_model();
    let calibration = resolve_calibration(cfg)?;
    let constant = calibration.constant;

    let raw = run_trials(
        cfg,
        opts,
        cfg.truncation,
        |n, results: &[(u64, Result<TrialOutcome>)]| {
            if opts.progress {
                let ok: Vec<f64> = results.iter().filter_map(|(_, r)| r.as_ref().ok().map(|o| o.error)).collect();
                let (mean, std) = mean_std(&ok);
                eprintln!("n = {n:>6}: mean error {mean:.4e} (std {std:.2e}, {} ok)", ok.len());
            }
        },
        |n, seed| network_trial(cfg, &model, n, seed, constant),
    )?;

    let total = raw.len();
    let mut records = Vec::with_capacity(total);
    let mut residual: Option<f64> = None;
    for (n, trial, seed, r) in raw {
        let outcome = classify(r)?;
        if let Some(q) = outcome.as_ref().and_then(|o| o.quadrature_residual) {
            residual = Some(residual.map_or(q, |r| r.max(q)));
        }
        records.push(TrialRecord {
            n,
            trial,
            seed,
            error: outcome.map(|o| o.error),
        });
    }
    let failed = records.iter().filter(|r| r.error.is_none()).count();
    check_failures(failed, total)?;

    let per_n: Vec<PerNSummary> = cfg
        .n_grid
        .values()?
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = records.iter().filter(|r| r.n == n).filter_map(|r| r.error).collect();
            summarize(n, &v)
        })
        .collect();
    Ok(ExperimentResult {
        config_hash: cfg.hash(),
        fit: fit_means(&per_n),
        records,
        per_n,
        calibration,
        failed_trials: failed,
        quadrature_residual: residual,
        wall_clock: start.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub index: usize,
    pub eigenvalue_error: Option<f64>,
    pub eigenvector_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenIndexSummary {
    pub index: usize,
    pub eigenvalue: f64,
    pub eigenvalue_per_n: Vec<PerNSummary>,
    pub eigenvector_per_n: Vec<PerNSummary>,
    pub eigenvalue_fit: Option<LogLogFit>,
    pub eigenvector_fit: Option<LogLogFit>,
}

#[derive(Clone, Debug)]
pub struct EigenExperimentResult {
    pub config_hash: String,
    pub records: Vec<EigenRecord>,
    pub indices: Vec<EigenIndexSummary>,
    pub calibration: CalibrationRecord,
    pub failed_trials: usize,
    pub wall_clock: Duration,
}

impl EigenExperimentResult {
    pub fn index(&self, i: usize) -> Option<&EigenIndexSummary> {
        self.indices.iter().find(|s| s.index == i)
    }
}

pub fn eigen_convergence_experiment(cfg: &ExperimentConfig) -> Result<EigenExperimentResult> {
    eigen_convergence_experiment_with(cfg, &RunOptions::default())
}

/// Eigenvalue and aligned eigenvector errors of the graph Laplacian against
/// the closed-form spectrum, per `n` and trial.
pub fn eigen_convergence_experiment_with(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<EigenExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.manifold_model();
    let calibration = resolve_calibration(cfg)?;
    let constant = calibration.constant;
    let Truncation::Modes(requested) = cfg.truncation else {
        return Err(Error::Config("eigen experiments need a numeric truncation".into()));
    };
    let k = model.complete_group_count(requested);
    let pairs = continuum_eigenpairs(&model, k)?;
    let groups = multiplicity_groups(&pairs);
    let indices: Vec<usize> = cfg
        .eigen_indices
        .clone()
        .unwrap_or_else(|| (0..requested).collect());
    if k > cfg.n_grid.values()?[0] {
        return Err(Error::Config(format!("{k} eigenpairs exceed the smallest n")));
    }

    let raw = run_trials(
        cfg,
        opts,
        Truncation::Modes(k),
        |n, results| {
            if opts.progress {
                let ok = results.iter().filter(|(_, r)| r.is_ok()).count();
                eprintln!("n = {n:>6}: {ok} trials ok");
            }
        },
        |n, seed| {
            let (cloud, op) = sample_and_build(cfg, &model, n, seed, constant)?;
            let eig = eigensolve(&op, k, cfg, seed)?;
            drop(op);
            let projected = project_eigenfunctions(&model, &cloud, k);
            let aligned = align_to_continuum(&eig, &projected, &groups)?;
            Ok(eigen_errors(&aligned, &pairs, &model, &cloud))
        },
    )?;

    let total = raw.len();
    let mut records = Vec::with_capacity(total * indices.len());
    let mut failed = 0;
    for (n, trial, seed, r) in raw {
        let errs = classify(r)?;
        failed += errs.is_none() as usize;
        for &index in &indices {
            let e = errs.as_ref().map(|e| e[index]);
            records.push(EigenRecord {
                n,
                trial,
                seed,
                index,
                eigenvalue_error: e.map(|e| e.eigenvalue),
                eigenvector_error: e.map(|e| e.eigenvector),
            });
        }
    }
    check_failures(failed, total)?;

    let grid = cfg.n_grid.values()?;
    let summaries = indices
        .iter()
        .map(|&index| {
            let column = |pick: fn(&EigenRecord) -> Option<f64>| -> Vec<PerNSummary> {
                grid.iter()
                    .map(|&n| {
                        let v: Vec<f64> = records
                            .iter()
                            .filter(|r| r.n == n && r.index == index)
                            .filter_map(pick)
                            .collect();
                        summarize(n, &v)
                    })
                    .collect()
            };
            let eigenvalue_per_n = column(|r| r.eigenvalue_error);
            let eigenvector_per_n = column(|r| r.eigenvector_error);
            EigenIndexSummary {
                index,
                eigenvalue: pairs[index].eigenvalue,
                eigenvalue_fit: fit_means(&eigenvalue_per_n),
                eigenvector_fit: fit_means(&eigenvector_per_n),
                eigenvalue_per_n,
                eigenvector_per_n,
            }
        })
        .collect();

    Ok(EigenExperimentResult {
        config_hash: cfg.hash(),
        records,
        indices: summaries,
        calibration,
        failed_trials: failed,
        wall_clock: start.elapsed(),
    })
}
