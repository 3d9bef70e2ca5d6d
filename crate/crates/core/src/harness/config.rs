use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::SpectralFilter;
use crate::graph::{SchemeKind, StorageMode};
use crate::manifolds::{BandlimitedSignal, ManifoldKind, ManifoldModel};
use crate::network::{NetworkSpec, Nonlinearity};

/// Bandwidth constant picked by a grid search on the circle for the
/// gaussian scheme.
pub const DEFAULT_GAUSSIAN_BANDWIDTH: f64 = 2.0;
pub const DEFAULT_HEAT_BANDWIDTH: f64 = 1.0;

/// One experiment, as read from a JSON document. Unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: ManifoldKind,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    /// Eigenpairs kept by the discrete network (and by eigen experiments,
    /// rounded up to whole multiplicity groups).
    #[serde(default)]
    pub truncation: Truncation,
    pub n_grid: NGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Modes used to re-expand hidden continuum features.
    #[serde(default = "default_expansion")]
    pub expansion_modes: usize,
    /// Indices tracked by eigen experiments; all of `0..truncation` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_indices: Option<Vec<usize>>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Number of eigenpairs `K`, or `"all"` for the full spectrum at every `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truncation {
    Modes(usize),
    Full(FullSpectrum),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullSpectrum {
    All,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Modes(9)
    }
}

impl Truncation {
    pub fn modes(self, n: usize) -> usize {
        match self {
            Truncation::Modes(k) => k,
            Truncation::Full(_) => n,
        }
    }
}

fn default_trials() -> usize {
    20
}

fn default_expansion() -> usize {
    64
}

/// Input coefficients: one list per input feature, or a single list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalConfig {
    Single(Vec<f64>),
    Multi(Vec<Vec<f64>>),
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig::Single(vec![1.0; 9])
    }
}

impl SignalConfig {
    pub fn signals(&self) -> Vec<BandlimitedSignal> {
        match self {
            SignalConfig::Single(c) => vec![BandlimitedSignal::new(c.clone())],
            SignalConfig::Multi(cs) => cs.iter().cloned().map(BandlimitedSignal::new).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    /// Same filter for every `(ℓ, p, q)`; ignored when `filters` is given.
    #[serde(default = "SpectralFilter::exponential")]
    pub filter: SpectralFilter,
    /// Full bank indexed `[layer][output][input]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<Vec<Vec<SpectralFilter>>>>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

fn default_widths() -> Vec<usize> {
    vec![1, 1]
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            widths: default_widths(),
            filter: SpectralFilter::exponential(),
            filters: None,
            nonlinearity: Nonlinearity::Abs,
        }
    }
}

impl NetworkConfig {
    pub fn build(&self) -> Result<NetworkSpec> {
        match &self.filters {
            Some(bank) => NetworkSpec::new(self.widths.clone(), bank.clone(), self.nonlinearity),
            None => NetworkSpec::uniform(self.widths.clone(), self.filter.clone(), self.nonlinearity),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    /// Closed-form constant.
    #[default]
    Analytic,
    /// Measured from the first nonzero eigenvalue group at
    /// `calibration_points` samples.
    Empirical,
    /// Closed form, replaced by the measured constant if they disagree by
    /// more than 20%.
    Checked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "default_scheme")]
    pub kind: SchemeKind,
    /// `c` in `t = c · n^{-2/(d+6)}`; per-scheme default if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_constant: Option<f64>,
    #[serde(default)]
    pub calibration: CalibrationMode,
    #[serde(default = "default_calibration_points")]
    pub calibration_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub storage: StorageMode,
}

fn default_scheme() -> SchemeKind {
    SchemeKind::Gaussian
}

fn default_calibration_points() -> usize {
    4096
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: default_scheme(),
            bandwidth_constant: None,
            calibration: CalibrationMode::Analytic,
            calibration_points: default_calibration_points(),
            cutoff: None,
            storage: StorageMode::Auto,
        }
    }
}

impl SchemeConfig {
    pub fn bandwidth_constant(&self) -> f64 {
        self.bandwidth_constant.unwrap_or(match self.kind {
            SchemeKind::Gaussian => DEFAULT_GAUSSIAN_BANDWIDTH,
            SchemeKind::Heat => DEFAULT_HEAT_BANDWIDTH,
        })
    }
}

/// Sample sizes, listed or log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NGrid {
    List(Vec<usize>),
    LogSpaced { min: usize, max: usize, count: usize },
}

impl NGrid {
    pub fn log_spaced(min: usize, max: usize, count: usize) -> Self {
        NGrid::LogSpaced { min, max, count }
    }

    pub fn values(&self) -> Result<Vec<usize>> {
        let values = match self {
            NGrid::List(v) => v.clone(),
            NGrid::LogSpaced { min, max, count } => {
                if *count < 2 || *min < 2 || max <= min {
                    return Err(Error::Config(
                        "log-spaced grid needs 2 ≤ min < max and count ≥ 2".into(),
                    ));
                }
                let ratio = *max as f64 / *min as f64;
                (0..*count)
                    .map(|k| (*min as f64 * ratio.powf(k as f64 / (*count - 1) as f64)).round() as usize)
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(Error::Config("n grid is empty".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n grid must be strictly increasing".into()));
        }
        if values[0] < 2 {
            return Err(Error::Config("every n must be at least 2".into()));
        }
        Ok(values)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    #[default]
    Lanczos,
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: SolverMethod,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

fn default_tol() -> f64 {
    1e-8
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Lanczos,
            tol: default_tol(),
            max_iterations: None,
        }
    }
}

/// Output file names, relative to the run's output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    #[serde(default = "default_summary")]
    pub summary: PathBuf,
    #[serde(default = "default_plot")]
    pub plot: PathBuf,
}

fn default_csv() -> PathBuf {
    "errors.csv".into()
}

fn default_summary() -> PathBuf {
    "summary.json".into()
}

fn default_plot() -> PathBuf {
    "fit.dat".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            summary: default_summary(),
            plot: default_plot(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The reference sphere run: nine unit coefficients, one `e^{-λ}`
    /// filter, absolute value, gaussian kernel.
    pub fn sphere_reference(n_grid: NGrid, trials: usize, seed: u64) -> Self {
        Self {
            manifold: ManifoldKind::Sphere2,
            signal: SignalConfig::default(),
            network: NetworkConfig::default(),
            scheme: SchemeConfig::default(),
            truncation: Truncation::default(),
            n_grid,
            trials,
            seed,
            solver: SolverConfig::default(),
            expansion_modes: default_expansion(),
            eigen_indices: None,
            output: OutputConfig::default(),
        }
    }

    /// Scale used for full-size runs: 10 log-spaced sizes from 2^10 to 2^14,
    /// 100 trials.
    pub fn into_full_scale(mut self) -> Self {
        self.n_grid = NGrid::log_spaced(1 << 10, 1 << 14, 10);
        self.trials = 100;
        self
    }

    pub fn manifold_model(&self) -> ManifoldModel {
        ManifoldModel::new(self.manifold)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.n_grid.values()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let model = self.manifold_model();
        if let Truncation::Modes(k) = self.truncation {
            if k == 0 {
                return Err(Error::Config("truncation must be at least 1".into()));
            }
            if k > model.max_modes() {
                return Err(Error::Config(format!(
                    "truncation {k} exceeds the {} available modes",
                    model.max_modes()
                )));
            }
            let smallest = self.n_grid.values()?[0];
            if k > smallest {
                return Err(Error::Config(format!("truncation {k} exceeds the smallest n ({smallest})")));
            }
        }
        let net = self.network.build().map_err(config)?;
        let signals = self.signal.signals();
        if signals.len() != net.widths()[0] {
            return Err(Error::Config(format!(
                "{} input signals for a network with {} input features",
                signals.len(),
                net.widths()[0]
            )));
        }
        if signals.iter().any(|s| s.coefficients.len() > model.max_modes()) {
            return Err(Error::Config("signal has more coefficients than available modes".into()));
        }
        if signals.iter().flat_map(|s| &s.coefficients).any(|c| !c.is_finite()) {
            return Err(Error::Config("signal coefficients must be finite".into()));
        }
        if !(self.scheme.bandwidth_constant() > 0.0) {
            return Err(Error::Config("bandwidth constant must be positive".into()));
        }
        if self.scheme.calibration != CalibrationMode::Analytic && self.scheme.calibration_points < 16 {
            return Err(Error::Config("calibration_points must be at least 16".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if let Some(idx) = &self.eigen_indices {
            let Truncation::Modes(k) = self.truncation else {
                return Err(Error::Config("eigen experiments need a numeric truncation".into()));
            };
            if idx.iter().any(|&i| i >= k) {
                return Err(Error::Config("eigen_indices must be below truncation".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output paths excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
