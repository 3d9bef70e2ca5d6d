//! Closed-form rate expressions for the discrete-vs-continuum network error.
//!
//! The big-O constants are not known, so they are explicit inputs. These
//! calculators are for comparing curve *shapes* against measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `2/(d+6)` of the guaranteed `n^{-2/(d+6)}` rate.
pub fn theoretical_rate_exponent(intrinsic_dim: usize) -> f64 {
    2.0 / (intrinsic_dim as f64 + 6.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorVariant {
    /// `Σ_{k=1}^{L} Π_{j=L−k}^{L} F_j`, summed over output features.
    Theorem,
    /// `Σ_{k=1}^{L} Π_{j=L−k}^{L−1} F_j`, per output feature.
    Appendix,
}

/// Width-dependent amplification factor of the error bound.
///
/// `widths` holds `F_0, …, F_L`.
pub fn filter_count_factor(widths: &[usize], variant: FactorVariant) -> Result<u128> {
    if widths.len() < 2 {
        return Err(Error::invalid("need at least F_0 and F_1"));
    }
    if widths.contains(&0) {
        return Err(Error::invalid("widths must be positive"));
    }
    let depth = widths.len() - 1;
    let top = match variant {
        FactorVariant::Theorem => depth,
        FactorVariant::Appendix => depth - 1,
    };
    let mut total: u128 = 0;
    for k in 1..=depth {
        let product: u128 = widths[depth - k..=top].iter().map(|&f| f as u128).product();
        total += product;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Filter Lipschitz constant `C`; the bound uses `max(C, 1)`.
    pub lipschitz: f64,
    pub intrinsic_dim: usize,
    pub n: usize,
    /// `max_{ℓ,q} ‖f_ℓ^q‖_{L²}`
    pub max_l2_norm: f64,
    /// `max_{ℓ,q} ‖f_ℓ^q‖_∞`
    pub max_sup_norm: f64,
}

impl BoundInputs {
    pub fn lipschitz_tilde(&self) -> f64 {
        self.lipschitz.max(1.0)
    }
}

/// Per-layer error increment `δ_n`. Nonincreasing in `n` for `n ≥ 8`.
///
/// For `d ≥ 2`:
/// `C̃ (c₁ √ln n / n^{2/(d+6)} ‖f‖ + c₂ (ln n)^{3/4} / n^{1/4+2/(d+6)} ‖f‖_∞)`;
/// for `d = 1`:
/// `C̃ (c₁ √ln n / n^{2/7} ‖f‖ + c₂ √ln n / n^{1/2} ‖f‖_∞)`.
///
/// The headline theorem writes `(ln n)^{1/4}` on the sup-norm term for
/// `d ≥ 2`; the per-layer derivation gives `3/4`, which is what we use.
pub fn delta_n(inputs: &BoundInputs, c1: f64, c2: f64) -> Result<f64> {
    if inputs.n < 2 {
        return Err(Error::invalid("δ_n needs n ≥ 2"));
    }
    if inputs.intrinsic_dim == 0 {
        return Err(Error::invalid("intrinsic dimension must be positive"));
    }
    let n = inputs.n as f64;
    let ln = n.ln();
    let ct = inputs.lipschitz_tilde();
    let r = theoretical_rate_exponent(inputs.intrinsic_dim);
    let (l2_rate, sup_rate) = if inputs.intrinsic_dim >= 2 {
        (ln.sqrt() / n.powf(r), ln.powf(0.75) / n.powf(0.25 + r))
    } else {
        (ln.sqrt() / n.powf(r), ln.sqrt() / n.sqrt())
    };
    Ok(ct * c1 * l2_rate * inputs.max_l2_norm + ct * c2 * sup_rate * inputs.max_sup_norm)
}

/// Iterates `ε_ℓ = F_{ℓ−1} (ε_{ℓ−1} + δ)` for `ℓ = 1..=L`.
pub fn error_recurrence(delta: f64, eps0: f64, widths: &[usize]) -> Result<Vec<f64>> {
    if delta < 0.0 || eps0 < 0.0 {
        return Err(Error::invalid("δ and ε₀ must be nonnegative"));
    }
    if widths.len() < 2 {
        return Err(Error::invalid("need at least F_0 and F_1"));
    }
    let mut eps = eps0;
    Ok(widths[..widths.len() - 1]
        .iter()
        .map(|&f| {
            eps = f as f64 * (eps + delta);
            eps
        })
        .collect())
}

/// `√(18 ln n / n) · sup_fg`.
pub fn hoeffding_bound(n: usize, sup_fg: f64) -> f64 {
    let n = n as f64;
    (18.0 * n.ln() / n).sqrt() * sup_fg
}

/// `(n, bound)` pairs of the full bound `δ_n · factor` on a grid.
pub fn bound_curve(
    ns: &[usize],
    template: &BoundInputs,
    widths: &[usize],
    c1: f64,
    c2: f64,
) -> Result<Vec<(usize, f64)>> {
    let factor = filter_count_factor(widths, FactorVariant::Theorem)? as f64;
    ns.iter()
        .map(|&n| {
            let inputs = BoundInputs { n, ..template.clone() };
            Ok((n, delta_n(&inputs, c1, c2)? * factor))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(d: usize, n: usize) -> BoundInputs {
        BoundInputs {
            lipschitz: 1.0,
            intrinsic_dim: d,
            n,
            max_l2_norm: 1.5,
            max_sup_norm: 3.0,
        }
    }

    #[test]
    fn exponents() {
        assert_eq!(theoretical_rate_exponent(2), 0.25);
        assert!((theoretical_rate_exponent(1) - 2.0 / 7.0).abs() < 1e-15);
        assert!((theoretical_rate_exponent(1) - 0.2857).abs() < 1e-4);
        assert_eq!(theoretical_rate_exponent(10), 0.125);
    }

    #[test]
    fn filter_factors() {
        assert_eq!(filter_count_factor(&[1, 1], FactorVariant::Theorem).unwrap(), 1);
        assert_eq!(filter_count_factor(&[2, 2, 2], FactorVariant::Theorem).unwrap(), 12);
        assert_eq!(filter_count_factor(&[2, 2, 2], FactorVariant::Appendix).unwrap(), 6);
        // constant width: leading term F^{L+1}
        let f = 10usize;
        let theorem = filter_count_factor(&[f; 5], FactorVariant::Theorem).unwrap() as f64;
        let lead = (f as f64).powi(5);
        assert!(theorem >= lead && theorem < 1.2 * lead);
        assert!(filter_count_factor(&[1], FactorVariant::Theorem).is_err());
        assert!(filter_count_factor(&[1, 0], FactorVariant::Theorem).is_err());
    }

    #[test]
    fn delta_special_cases() {
        assert_eq!(delta_n(&inputs(2, 1000), 0.0, 0.0).unwrap(), 0.0);
        let base = delta_n(&inputs(2, 1000), 1.0, 1.0).unwrap();
        let doubled = delta_n(&BoundInputs { lipschitz: 2.0, ..inputs(2, 1000) }, 1.0, 1.0).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-15);
        // below one the Lipschitz constant is clamped
        let clamped = delta_n(&BoundInputs { lipschitz: 0.3, ..inputs(2, 1000) }, 1.0, 1.0).unwrap();
        assert_eq!(clamped, base);
    }

    #[test]
    fn delta_quadrupling_ratio() {
        let n = 1000usize;
        let a = delta_n(&inputs(2, n), 1.0, 0.0).unwrap();
        let b = delta_n(&inputs(2, 4 * n), 1.0, 0.0).unwrap();
        let want = ((4.0 * n as f64).ln() / (n as f64).ln()).sqrt() * 4f64.powf(-0.25);
        assert!((b / a - want).abs() < 1e-12);
    }

    #[test]
    fn delta_nonincreasing_in_n() {
        for d in [1, 2] {
            let mut prev = f64::INFINITY;
            // √ln n outgrows the power for n < e²
            for n in 8..2000 {
                let v = delta_n(&inputs(d, n), 1.0, 1.0).unwrap();
                assert!(v <= prev + 1e-15, "d={d} n={n}");
                prev = v;
            }
        }
    }

    #[test]
    fn recurrence_examples() {
        assert_eq!(error_recurrence(0.3, 0.0, &[1, 1]).unwrap(), vec![0.3]);
        let eps = error_recurrence(0.5, 0.0, &[1, 1, 1, 1, 1]).unwrap();
        for (l, e) in eps.iter().enumerate() {
            assert!((e - 0.5 * (l + 1) as f64).abs() < 1e-15);
        }
        let eps = error_recurrence(0.1, 0.0, &[2, 3, 4]).unwrap();
        assert!((eps[0] - 0.2).abs() < 1e-15);
        assert!((eps[1] - 0.9).abs() < 1e-15);
        let closed = 0.1 * filter_count_factor(&[2, 3, 4], FactorVariant::Appendix).unwrap() as f64;
        assert!((eps[1] - closed).abs() < 1e-15);
        assert!(error_recurrence(-1.0, 0.0, &[1, 1]).is_err());
    }

    #[test]
    fn hoeffding_values() {
        assert_eq!(hoeffding_bound(100, 0.0), 0.0);
        assert!((hoeffding_bound(4096, 1.0) - 0.19119).abs() < 1e-4);
        for n in [2usize, 10, 1000, 100_000] {
            let ratio = hoeffding_bound(4 * n, 1.0) / hoeffding_bound(n, 1.0);
            let want = ((4.0 * n as f64).ln() / (4.0 * (n as f64).ln())).sqrt();
            assert!((ratio - want).abs() < 1e-12);
            assert!(ratio < 1.0);
        }
    }

    #[test]
    fn curve_is_decreasing() {
        let curve = bound_curve(&[1024, 2048, 4096], &inputs(2, 2), &[1, 1], 1.0, 1.0).unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 < w[0].1));
    }

    proptest! {
        #[test]
        fn recurrence_matches_closed_form(
            delta in 0.0f64..10.0,
            widths in proptest::collection::vec(1usize..6, 2..8),
        ) {
            let eps = error_recurrence(delta, 0.0, &widths).unwrap();
            let closed = delta * filter_count_factor(&widths, FactorVariant::Appendix).unwrap() as f64;
            let last = *eps.last().unwrap();
            prop_assert!((last - closed).abs() <= 1e-12 * closed.max(1e-300));
        }

        #[test]
        fn theorem_is_top_width_times_appendix(widths in proptest::collection::vec(1usize..9, 2..8)) {
            let t = filter_count_factor(&widths, FactorVariant::Theorem).unwrap();
            let a = filter_count_factor(&widths, FactorVariant::Appendix).unwrap();
            prop_assert_eq!(t, *widths.last().unwrap() as u128 * a);
        }
    }
}
