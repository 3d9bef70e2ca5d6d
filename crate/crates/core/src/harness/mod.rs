//! Seeded Monte Carlo experiments, result files and log-log rate fits.

mod config;
mod fit;
mod output;
mod run;

pub use config::{
    CalibrationMode, ExperimentConfig, NGrid, NetworkConfig, OutputConfig, SchemeConfig, SignalConfig, SolverConfig,
    SolverMethod, FullSpectrum, Truncation, DEFAULT_GAUSSIAN_BANDWIDTH, DEFAULT_HEAT_BANDWIDTH,
};
pub use fit::{loglog_fit, mean_std, LogLogFit};
pub use output::{fit_trial_csv, read_trial_csv, write_plot_data, EigenSummary, OutputPaths, Summary};
pub use run::{
    eigen_convergence_experiment, eigen_convergence_experiment_with, fit_means, resolve_calibration,
    run_convergence_experiment, run_convergence_experiment_with, CalibrationRecord, EigenExperimentResult,
    EigenIndexSummary, EigenRecord, ExperimentResult, PerNSummary, RunOptions, TrialRecord, FIT_FLOOR,
    MAX_FAILURE_FRACTION,
};
