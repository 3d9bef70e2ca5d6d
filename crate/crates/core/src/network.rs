//! Manifold neural network forward passes, discrete and continuum.
//!
//! Layer `ℓ` maps features `x_{ℓ−1}^q` to
//! `x_ℓ^p = σ(Σ_q h_ℓ^{pq} x_{ℓ−1}^q)` where each `h` acts spectrally: on the
//! graph through the eigenpairs of `L_n`, on the manifold through the
//! Laplace–Beltrami eigenpairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::SpectralFilter;
use crate::manifolds::{evaluate_signal, BandlimitedSignal, ManifoldModel, PointCloud, Quadrature};
use crate::spectral::{EigenSystem, GnVector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Abs,
    Relu,
    Identity,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Abs => v.abs(),
            Nonlinearity::Relu => v.max(0.0),
            Nonlinearity::Identity => v,
        }
    }
}

/// Depth, widths `F_0..F_L`, and the filter bank `h_ℓ^{pq}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    widths: Vec<usize>,
    /// `bank[ℓ][p][q]` is the filter of layer `ℓ + 1`.
    bank: Vec<Vec<Vec<SpectralFilter>>>,
    pub nonlinearity: Nonlinearity,
}

impl NetworkSpec {
    pub fn new(
        widths: Vec<usize>,
        bank: Vec<Vec<Vec<SpectralFilter>>>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if bank.len() != widths.len() - 1 {
            return Err(Error::invalid(format!(
                "filter bank has {} layers, widths describe {}",
                bank.len(),
                widths.len() - 1
            )));
        }
        for (l, layer) in bank.iter().enumerate() {
            if layer.len() != widths[l + 1] || layer.iter().any(|row| row.len() != widths[l]) {
                return Err(Error::invalid(format!(
                    "layer {} needs a {}×{} filter bank",
                    l + 1,
                    widths[l + 1],
                    widths[l]
                )));
            }
            for h in layer.iter().flatten() {
                h.validate()?;
            }
        }
        Ok(Self {
            widths,
            bank,
            nonlinearity,
        })
    }

    /// One layer, one input and one output feature.
    pub fn single(filter: SpectralFilter, nonlinearity: Nonlinearity) -> Self {
        Self {
            widths: vec![1, 1],
            bank: vec![vec![vec![filter]]],
            nonlinearity,
        }
    }

    /// Every `h_ℓ^{pq}` set to the same filter.
    pub fn uniform(widths: Vec<usize>, filter: SpectralFilter, nonlinearity: Nonlinearity) -> Result<Self> {
        let bank = widths
            .windows(2)
            .map(|w| vec![vec![filter.clone(); w[0]]; w[1]])
            .collect();
        Self::new(widths, bank, nonlinearity)
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Filter of layer `layer` (1-based), output `p`, input `q`.
    pub fn filter(&self, layer: usize, p: usize, q: usize) -> &SpectralFilter {
        &self.bank[layer - 1][p][q]
    }

    pub fn filters(&self) -> impl Iterator<Item = &SpectralFilter> {
        self.bank.iter().flatten().flatten()
    }
}

/// Features of one layer as values at the sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    pub layer: usize,
    pub features: Vec<GnVector>,
}

impl FeatureField {
    pub fn new(layer: usize, features: Vec<GnVector>) -> Self {
        Self { layer, features }
    }

    /// Layer-0 field holding `P_n f` for each input signal.
    pub fn from_signals(
        signals: &[BandlimitedSignal],
        manifold: &ManifoldModel,
        points: &PointCloud,
    ) -> Result<Self> {
        let features = signals
            .iter()
            .map(|f| evaluate_signal(f, manifold, points).map(GnVector::new))
            .collect::<Result<_>>()?;
        Ok(Self { layer: 0, features })
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }
}

fn spectral_coefficients(eig: &EigenSystem, x: &GnVector) -> Vec<f64> {
    eig.eigenvectors.iter().map(|phi| x.inner(phi)).collect()
}

/// `Σ_{i<K} ĥ(λ_i^n) ⟨x, φ_i^n⟩_{G_n} φ_i^n`.
pub fn filter_apply_discrete(h: &SpectralFilter, eig: &EigenSystem, x: &GnVector) -> Result<GnVector> {
    if x.len() != eig.dim() {
        return Err(Error::invalid(format!(
            "signal has {} entries, eigenvectors have {}",
            x.len(),
            eig.dim()
        )));
    }
    let coefs = spectral_coefficients(eig, x);
    let mut out = GnVector::zeros(x.len());
    for ((c, lambda), phi) in coefs.iter().zip(&eig.eigenvalues).zip(&eig.eigenvectors) {
        out.axpy(h.response(*lambda) * c, phi);
    }
    Ok(out)
}

/// Discrete network on the graph eigenbasis.
pub fn forward_discrete(net: &NetworkSpec, eig: &EigenSystem, x0: &FeatureField) -> Result<FeatureField> {
    if x0.width() != net.widths[0] {
        return Err(Error::invalid(format!(
            "input has {} features, network expects {}",
            x0.width(),
            net.widths[0]
        )));
    }
    let n = eig.dim();
    if x0.features.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("input features and eigenvectors differ in length"));
    }
    let mut current = x0.features.clone();
    for layer in 1..=net.depth() {
        let coefs: Vec<Vec<f64>> = current.iter().map(|x| spectral_coefficients(eig, x)).collect();
        let next = (0..net.widths[layer])
            .map(|p| {
                let mut out = GnVector::zeros(n);
                for (i, (lambda, phi)) in eig.eigenvalues.iter().zip(&eig.eigenvectors).enumerate() {
                    let c: f64 = coefs
                        .iter()
                        .enumerate()
                        .map(|(q, cq)| net.filter(layer, p, q).response(*lambda) * cq[i])
                        .sum();
                    out.axpy(c, phi);
                }
                out.values_mut().iter_mut().for_each(|v| *v = net.nonlinearity.apply(*v));
                out
            })
            .collect();
        current = next;
    }
    Ok(FeatureField::new(net.depth(), current))
}

#[derive(Clone, Debug)]
pub struct ContinuumOptions {
    /// Modes kept when re-expanding hidden features (rounded up to a whole
    /// multiplicity group).
    pub expansion_modes: usize,
    /// Relative L² residual of a re-expansion above which a warning is raised.
    pub residual_threshold: f64,
    /// Also measure `‖f_ℓ^q‖_{L²}` and `‖f_ℓ^q‖_∞` for every layer.
    pub collect_norms: bool,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            expansion_modes: 64,
            residual_threshold: 0.05,
            collect_norms: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContinuumOutput {
    /// Output features at the sample points, `P_n Φ(H, 𝓛, f)`.
    pub field: FeatureField,
    /// Largest relative re-expansion residual over hidden layers.
    pub quadrature_residual: Option<f64>,
    pub quadrature_warning: bool,
    /// `max_{ℓ,q} ‖f_ℓ^q‖_{L²}` over layers `0..=L`, when collected.
    pub max_l2_norm: Option<f64>,
    /// `max_{ℓ,q} ‖f_ℓ^q‖_∞` over layers `0..=L`, estimated on quadrature nodes.
    pub max_sup_norm: Option<f64>,
}

/// Pre-activation coefficient tables of layer `layer` from input tables.
fn filter_coefficients(
    net: &NetworkSpec,
    layer: usize,
    inputs: &[Vec<f64>],
    eigenvalues: &[f64],
) -> Vec<Vec<f64>> {
    let width = inputs.iter().map(|c| c.len()).max().unwrap_or(0);
    (0..net.widths[layer])
        .map(|p| {
            (0..width)
                .map(|i| {
                    inputs
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| i < c.len())
                        .map(|(q, c)| net.filter(layer, p, q).response(eigenvalues[i]) * c[i])
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Continuum network evaluated at the sample points.
///
/// The first layer is exact: its pre-activations are bandlimited with
/// coefficients `ĥ(λ_i) α_i`. Later layers act on `σ(·)` of a bandlimited
/// function, which is not bandlimited; those features are re-expanded onto
/// the first `expansion_modes` eigenfunctions by quadrature.
pub fn forward_continuum(
    net: &NetworkSpec,
    manifold: &ManifoldModel,
    inputs: &[BandlimitedSignal],
    points: &PointCloud,
    opts: &ContinuumOptions,
) -> Result<ContinuumOutput> {
    if inputs.len() != net.widths[0] {
        return Err(Error::invalid(format!(
            "{} input signals, network expects {}",
            inputs.len(),
            net.widths[0]
        )));
    }
    let kappa_modes = inputs.iter().map(|f| f.coefficients.len()).max().unwrap_or(0);
    if kappa_modes > manifold.max_modes() {
        return Err(Error::invalid(format!(
            "signal bandwidth {} exceeds the eigenpair table ({} modes)",
            kappa_modes - 1,
            manifold.max_modes()
        )));
    }
    let hidden = net.depth() > 1;
    let expansion = if hidden {
        manifold
            .complete_group_count(opts.expansion_modes.max(kappa_modes))
            .min(manifold.max_modes())
    } else {
        kappa_modes
    };
    let table = expansion.max(kappa_modes);
    let eigenvalues: Vec<f64> = (0..table).map(|i| manifold.eigenvalue(i)).collect();
    let sigma = net.nonlinearity;

    let needs_quadrature = hidden || opts.collect_norms;
    let quadrature = needs_quadrature.then(|| Quadrature::default_for(manifold));

    let mut max_l2: f64 = inputs.iter().map(|f| f.norm_squared().sqrt()).fold(0.0, f64::max);
    let mut max_sup: f64 = 0.0;
    if let (true, Some(q)) = (opts.collect_norms, &quadrature) {
        for f in inputs {
            let sup = q.nodes().map(|x| f.evaluate_at(manifold, x).abs()).fold(0.0, f64::max);
            max_sup = max_sup.max(sup);
        }
    }

    let mut coefs: Vec<Vec<f64>> = inputs.iter().map(|f| f.coefficients.clone()).collect();
    let mut worst_residual: Option<f64> = None;

    for layer in 1..=net.depth() {
        let pre = filter_coefficients(net, layer, &coefs, &eigenvalues);
        let last = layer == net.depth();
        if last && !opts.collect_norms {
            coefs = pre;
            break;
        }
        let q = quadrature.as_ref().expect("quadrature is built whenever it is needed");
        let modes = if last { 0 } else { expansion };
        let basis_len = pre.iter().map(|c| c.len()).max().unwrap_or(0).max(modes);
        let mut buf = vec![0.0; basis_len];
        let mut expanded = vec![vec![0.0; modes]; pre.len()];
        let mut sq = vec![0.0; pre.len()];
        let mut sup = vec![0.0_f64; pre.len()];
        for x in q.nodes() {
            manifold.eval_basis(x, &mut buf);
            for (p, c) in pre.iter().enumerate() {
                let v = sigma.apply(c.iter().zip(&buf).map(|(a, b)| a * b).sum());
                sq[p] += v * v;
                sup[p] = sup[p].max(v.abs());
                for (e, b) in expanded[p].iter_mut().zip(&buf[..modes]) {
                    *e += v * b;
                }
            }
        }
        let w = q.weight();
        for p in 0..pre.len() {
            sq[p] *= w;
            expanded[p].iter_mut().for_each(|e| *e *= w);
            max_l2 = max_l2.max(sq[p].sqrt());
            max_sup = max_sup.max(sup[p]);
            if !last {
                let captured: f64 = expanded[p].iter().map(|e| e * e).sum();
                let rel = if sq[p] > 0.0 {
                    ((sq[p] - captured).max(0.0) / sq[p]).sqrt()
                } else {
                    0.0
                };
                worst_residual = Some(worst_residual.map_or(rel, |r: f64| r.max(rel)));
            }
        }
        coefs = if last { pre } else { expanded };
    }

    // `coefs` now holds the last layer's pre-activation coefficients.
    let features = coefs
        .iter()
        .map(|c| {
            let values = evaluate_signal(&BandlimitedSignal::new(c.clone()), manifold, points)?;
            Ok(GnVector::new(values.into_iter().map(|v| sigma.apply(v)).collect()))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ContinuumOutput {
        field: FeatureField::new(net.depth(), features),
        quadrature_warning: worst_residual.is_some_and(|r| r > opts.residual_threshold),
        quadrature_residual: worst_residual,
        max_l2_norm: opts.collect_norms.then_some(max_l2),
        max_sup_norm: opts.collect_norms.then_some(max_sup),
    })
}

/// `Σ_q ‖x^q − y^q‖_{G_n}`.
pub fn mnn_error(discrete: &FeatureField, continuum: &FeatureField) -> Result<f64> {
    if discrete.width() != continuum.width() {
        return Err(Error::invalid(format!(
            "feature counts differ: {} vs {}",
            discrete.width(),
            continuum.width()
        )));
    }
    let mut total = 0.0;
    for (a, b) in discrete.features.iter().zip(&continuum.features) {
        if a.len() != b.len() {
            return Err(Error::invalid("feature vectors differ in length"));
        }
        total += a.distance(b);
    }
    Ok(total)
}
