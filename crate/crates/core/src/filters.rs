//! Spectral filters `ĥ: [0, ∞) → ℝ` and grid checks of their properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A frequency response. Parsed from config as `{"family": "...", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectralFilter {
    /// `amplitude · exp(-rate · λ)`
    Exponential {
        #[serde(default = "one")]
        rate: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `ĥ ≡ value`
    Constant { value: f64 },
    /// `ĥ ≡ 1`
    Identity,
    /// `height · max(0, 1 − |λ − center| / half_width)`
    Tent {
        center: f64,
        #[serde(default = "one")]
        half_width: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `Σ c_k λ^k` (degree ≤ 3), clipped to `[-1, 1]`.
    Polynomial { coefficients: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl SpectralFilter {
    pub fn exponential() -> Self {
        SpectralFilter::Exponential {
            rate: 1.0,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralFilter::Exponential { rate, amplitude } => {
                if *rate < 0.0 || !rate.is_finite() || !amplitude.is_finite() {
                    return Err(Error::invalid("exponential filter needs a finite nonnegative rate"));
                }
            }
            SpectralFilter::Constant { value } if !value.is_finite() => {
                return Err(Error::invalid("constant filter value must be finite"));
            }
            SpectralFilter::Tent { half_width, center, height } => {
                if !(*half_width > 0.0) || !center.is_finite() || !height.is_finite() {
                    return Err(Error::invalid("tent filter needs a positive half width"));
                }
            }
            SpectralFilter::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.len() > 4 {
                    return Err(Error::invalid("polynomial filters have degree 0 to 3"));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("polynomial coefficients must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `ĥ(λ)` for `λ ≥ 0`.
    pub fn evaluate(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("filters are defined on [0, ∞), got λ = {lambda}")));
        }
        Ok(self.response(lambda))
    }

    /// Unchecked evaluation; tiny negative eigenvalues from roundoff are
    /// clamped to zero.
    pub fn response(&self, lambda: f64) -> f64 {
        let lambda = lambda.max(0.0);
        match self {
            SpectralFilter::Exponential { rate, amplitude } => amplitude * (-rate * lambda).exp(),
            SpectralFilter::Constant { value } => *value,
            SpectralFilter::Identity => 1.0,
            SpectralFilter::Tent {
                center,
                half_width,
                height,
            } => height * (1.0 - (lambda - center).abs() / half_width).max(0.0),
            SpectralFilter::Polynomial { coefficients } => {
                let v = coefficients.iter().rev().fold(0.0, |acc, c| acc * lambda + c);
                v.clamp(-1.0, 1.0)
            }
        }
    }

    /// Declared `sup |ĥ|` over `[0, ∞)`, where known in closed form.
    pub fn declared_sup(&self) -> Option<f64> {
        match self {
            SpectralFilter::Exponential { amplitude, .. } => Some(amplitude.abs()),
            SpectralFilter::Constant { value } => Some(value.abs()),
            SpectralFilter::Identity => Some(1.0),
            SpectralFilter::Tent { height, .. } => Some(height.abs()),
            SpectralFilter::Polynomial { .. } => None,
        }
    }

    /// Declared Lipschitz constant, where known in closed form.
    pub fn declared_lipschitz(&self) -> Option<f64> {
        match self {
            SpectralFilter::Exponential { rate, amplitude } => Some(rate * amplitude.abs()),
            SpectralFilter::Constant { .. } | SpectralFilter::Identity => Some(0.0),
            SpectralFilter::Tent { half_width, height, .. } => Some(height.abs() / half_width),
            SpectralFilter::Polynomial { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonAmplifyingReport {
    pub non_amplifying: bool,
    pub measured_sup: f64,
}

fn grid(lambda_max: f64, grid_size: usize) -> impl Iterator<Item = f64> {
    let step = lambda_max / (grid_size - 1) as f64;
    (0..grid_size).map(move |i| i as f64 * step)
}

/// Grid check of `sup |ĥ| ≤ 1` on `[0, λ_max]`.
pub fn check_nonamplifying(h: &SpectralFilter, lambda_max: f64, grid_size: usize) -> Result<NonAmplifyingReport> {
    if grid_size < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let sup = grid(lambda_max, grid_size)
        .map(|l| h.response(l).abs())
        .fold(0.0, f64::max);
    Ok(NonAmplifyingReport {
        non_amplifying: sup <= 1.0 + 1e-12,
        measured_sup: sup,
    })
}

/// Largest difference quotient between adjacent grid points. A lower bound
/// on the true Lipschitz constant.
pub fn estimate_lipschitz(h: &SpectralFilter, lambda_max: f64, grid_size: usize) -> Result<f64> {
    if grid_size < 3 {
        return Err(Error::invalid("grid needs at least three points"));
    }
    let pts: Vec<f64> = grid(lambda_max, grid_size).collect();
    Ok(pts
        .windows(2)
        .map(|w| (h.response(w[1]) - h.response(w[0])).abs() / (w[1] - w[0]))
        .fold(0.0, f64::max))
}
