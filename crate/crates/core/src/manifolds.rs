//! Analytic model manifolds with closed-form Laplace–Beltrami spectra.
//!
//! Eigenfunctions are orthonormal with respect to the *normalized* volume
//! measure `dV / vol(M)`, so the constant function `1` is the first
//! eigenfunction and `E[φ_i φ_j] = δ_ij` for a uniformly drawn point. The
//! eigenvalues keep their classical unit-radius values (`k²` on the circle,
//! `l(l+1)` on the sphere).

use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest spherical-harmonic degree the eigenpair table supports.
pub const MAX_SPHERE_DEGREE: usize = 48;
/// Largest circle frequency the eigenpair table supports.
pub const MAX_CIRCLE_FREQUENCY: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Circle,
    Sphere2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldModel {
    pub kind: ManifoldKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub volume: f64,
}

impl ManifoldModel {
    pub fn new(kind: ManifoldKind) -> Self {
        match kind {
            ManifoldKind::Circle => Self {
                kind,
                intrinsic_dim: 1,
                ambient_dim: 2,
                volume: 2.0 * PI,
            },
            ManifoldKind::Sphere2 => Self {
                kind,
                intrinsic_dim: 2,
                ambient_dim: 3,
                volume: 4.0 * PI,
            },
        }
    }

    pub fn circle() -> Self {
        Self::new(ManifoldKind::Circle)
    }

    pub fn sphere2() -> Self {
        Self::new(ManifoldKind::Sphere2)
    }

    /// Number of eigenpairs the closed-form table can produce.
    pub fn max_modes(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 2 * MAX_CIRCLE_FREQUENCY + 1,
            ManifoldKind::Sphere2 => (MAX_SPHERE_DEGREE + 1) * (MAX_SPHERE_DEGREE + 1),
        }
    }

    /// Smallest count `>= count` that does not split a multiplicity group.
    pub fn complete_group_count(&self, count: usize) -> usize {
        match self.kind {
            ManifoldKind::Circle => {
                if count <= 1 {
                    count
                } else {
                    // 1 + 2k
                    count + (count + 1) % 2
                }
            }
            ManifoldKind::Sphere2 => {
                let mut l = 0;
                while (l + 1) * (l + 1) < count {
                    l += 1;
                }
                (l + 1) * (l + 1)
            }
        }
    }

    /// Evaluates the first `out.len()` eigenfunctions at the point `x`.
    pub fn eval_basis(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ManifoldKind::Circle => eval_circle_basis(x, out),
            ManifoldKind::Sphere2 => eval_sphere_basis(x, out),
        }
    }

    /// Closed-form eigenvalue of mode `index`.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        let (_, level) = self.mode_level(index);
        match self.kind {
            ManifoldKind::Circle => (level * level) as f64,
            ManifoldKind::Sphere2 => (level * (level + 1)) as f64,
        }
    }

    fn mode_level(&self, index: usize) -> (Mode, usize) {
        match self.kind {
            ManifoldKind::Circle => {
                if index == 0 {
                    (Mode::Constant, 0)
                } else {
                    let k = index.div_ceil(2);
                    let mode = if index % 2 == 1 {
                        Mode::Cos(k)
                    } else {
                        Mode::Sin(k)
                    };
                    (mode, k)
                }
            }
            ManifoldKind::Sphere2 => {
                let mut l = 0;
                while (l + 1) * (l + 1) <= index {
                    l += 1;
                }
                let m = index as i64 - (l * l) as i64 - l as i64;
                (Mode::Harmonic { degree: l, order: m }, l)
            }
        }
    }
}

/// Which analytic eigenfunction a [`ContinuumEigenpair`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Constant,
    /// `√2 cos(kθ)` on the circle.
    Cos(usize),
    /// `√2 sin(kθ)` on the circle.
    Sin(usize),
    /// Real spherical harmonic; negative orders are the sine branch.
    Harmonic { degree: usize, order: i64 },
}

#[derive(Clone, Debug)]
pub struct ContinuumEigenpair {
    pub index: usize,
    pub eigenvalue: f64,
    /// Frequency `k` on the circle or degree `l` on the sphere.
    pub group: usize,
    pub mode: Mode,
    manifold: ManifoldModel,
}

impl ContinuumEigenpair {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.index + 1];
        self.manifold.eval_basis(x, &mut buf);
        buf[self.index]
    }
}

/// The first `count` Laplace–Beltrami eigenpairs, nondecreasing in eigenvalue.
pub fn continuum_eigenpairs(manifold: &ManifoldModel, count: usize) -> Result<Vec<ContinuumEigenpair>> {
    if count == 0 {
        return Err(Error::invalid("eigenpair count must be at least 1"));
    }
    if count > manifold.max_modes() {
        return Err(Error::invalid(format!(
            "requested {count} eigenpairs, table holds {}",
            manifold.max_modes()
        )));
    }
    Ok((0..count)
        .map(|index| {
            let (mode, group) = manifold.mode_level(index);
            ContinuumEigenpair {
                index,
                eigenvalue: manifold.eigenvalue(index),
                group,
                mode,
                manifold: *manifold,
            }
        })
        .collect())
}

/// Index ranges of equal-eigenvalue groups, in order.
pub fn multiplicity_groups(pairs: &[ContinuumEigenpair]) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=pairs.len() {
        if i == pairs.len() || pairs[i].group != pairs[start].group {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// `n` points in ambient coordinates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub manifold: ManifoldKind,
    dim: usize,
    coords: Vec<f64>,
    /// Seed the cloud was drawn with, if it was sampled.
    pub seed: Option<u64>,
}

impl PointCloud {
    /// Points must have unit norm (to 1e-6).
    pub fn from_coords(manifold: ManifoldKind, coords: Vec<f64>) -> Result<Self> {
        let dim = ManifoldModel::new(manifold).ambient_dim;
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "coordinate buffer of length {} is not a nonempty multiple of {dim}",
                coords.len()
            )));
        }
        for (i, x) in coords.chunks_exact(dim).enumerate() {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((r - 1.0).abs() <= 1e-6) {
                return Err(Error::invalid(format!("point {i} has norm {r}, expected 1")));
            }
        }
        Ok(Self {
            manifold,
            dim,
            coords,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Draws `n` i.i.d. points uniform with respect to the Riemannian volume.
pub fn sample_uniform(manifold: &ManifoldModel, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("cannot sample zero points"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * manifold.ambient_dim);
    match manifold.kind {
        ManifoldKind::Circle => {
            for _ in 0..n {
                let theta = rng.random_range(0.0..2.0 * PI);
                coords.push(theta.cos());
                coords.push(theta.sin());
            }
        }
        ManifoldKind::Sphere2 => {
            for _ in 0..n {
                loop {
                    let v: [f64; 3] = [
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ];
                    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if r > 1e-12 {
                        coords.extend(v.iter().map(|c| c / r));
                        break;
                    }
                }
            }
        }
    }
    Ok(PointCloud {
        manifold: manifold.kind,
        dim: manifold.ambient_dim,
        coords,
        seed: Some(seed),
    })
}

/// A κ-bandlimited function `Σ_{i≤κ} α_i φ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandlimitedSignal {
    pub coefficients: Vec<f64>,
}

impl BandlimitedSignal {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    /// κ, the largest index that may carry a nonzero coefficient.
    pub fn bandwidth(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// Squared L² norm under the normalized measure.
    pub fn norm_squared(&self) -> f64 {
        self.coefficients.iter().map(|a| a * a).sum()
    }

    pub fn evaluate_at(&self, manifold: &ManifoldModel, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.coefficients.len()];
        manifold.eval_basis(x, &mut buf);
        buf.iter().zip(&self.coefficients).map(|(p, a)| p * a).sum()
    }
}

/// Values of `f` at every point, i.e. the sampling projection of `f`.
pub fn evaluate_signal(
    f: &BandlimitedSignal,
    manifold: &ManifoldModel,
    points: &PointCloud,
) -> Result<Vec<f64>> {
    let modes = f.coefficients.len();
    if modes > manifold.max_modes() {
        return Err(Error::invalid(format!(
            "signal has {modes} coefficients, eigenpair table holds {}",
            manifold.max_modes()
        )));
    }
    if points.manifold != manifold.kind {
        return Err(Error::invalid("point cloud was sampled from a different manifold"));
    }
    if modes == 0 {
        return Ok(vec![0.0; points.len()]);
    }
    let mut buf = vec![0.0; modes];
    Ok(points
        .iter()
        .map(|x| {
            manifold.eval_basis(x, &mut buf);
            buf.iter().zip(&f.coefficients).map(|(p, a)| p * a).sum()
        })
        .collect())
}

/// Equal-weight quadrature for the normalized measure.
#[derive(Clone, Debug)]
pub struct Quadrature {
    dim: usize,
    nodes: Vec<f64>,
}

impl Quadrature {
    /// Trapezoid rule on the circle (2^17 nodes) or a Fibonacci lattice on
    /// the sphere (2·10^5 nodes).
    pub fn default_for(manifold: &ManifoldModel) -> Self {
        match manifold.kind {
            ManifoldKind::Circle => Self::circle(1 << 17),
            ManifoldKind::Sphere2 => Self::fibonacci_sphere(200_000),
        }
    }

    pub fn circle(nodes: usize) -> Self {
        let coords = (0..nodes)
            .flat_map(|i| {
                let theta = 2.0 * PI * i as f64 / nodes as f64;
                [theta.cos(), theta.sin()]
            })
            .collect();
        Self { dim: 2, nodes: coords }
    }

    pub fn fibonacci_sphere(nodes: usize) -> Self {
        let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let coords = (0..nodes)
            .flat_map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / nodes as f64;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * PI * (i as f64 / golden).fract();
                [s * phi.cos(), s * phi.sin(), z]
            })
            .collect();
        Self { dim: 3, nodes: coords }
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// Mean of `f` over the nodes.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes().map(f).sum::<f64>() * self.weight()
    }

    /// Gram matrix (row-major) of the first `count` eigenfunctions.
    pub fn gram(&self, manifold: &ManifoldModel, count: usize) -> Vec<f64> {
        let mut gram = vec![0.0; count * count];
        let mut buf = vec![0.0; count];
        for x in self.nodes() {
            manifold.eval_basis(x, &mut buf);
            for i in 0..count {
                for j in i..count {
                    gram[i * count + j] += buf[i] * buf[j];
                }
            }
        }
        let w = self.weight();
        for i in 0..count {
            for j in i..count {
                let v = gram[i * count + j] * w;
                gram[i * count + j] = v;
                gram[j * count + i] = v;
            }
        }
        gram
    }
}

fn eval_circle_basis(x: &[f64], out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    let r = x[0].hypot(x[1]);
    let (c1, s1) = if r > 0.0 { (x[0] / r, x[1] / r) } else { (1.0, 0.0) };
    let (mut c, mut s) = (c1, s1);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut i = 1;
    while i < out.len() {
        out[i] = sqrt2 * c;
        if i + 1 < out.len() {
            out[i + 1] = sqrt2 * s;
        }
        // angle addition: (c, s) <- (c, s) * (c1, s1)
        let next_c = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = next_c;
        i += 2;
    }
}

/// Real spherical harmonics, index `l² + l + m`, normalized so that each has
/// unit mean square over the sphere.
fn eval_sphere_basis(x: &[f64], out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let (px, py, z) = if r > 0.0 {
        (x[0] / r, x[1] / r, x[2] / r)
    } else {
        (0.0, 0.0, 1.0)
    };
    let s = px.hypot(py);
    let (cphi, sphi) = if s > 1e-300 { (px / s, py / s) } else { (1.0, 0.0) };

    let mut lmax = 0;
    while (lmax + 1) * (lmax + 1) < out.len() {
        lmax += 1;
    }

    // cos(mφ), sin(mφ)
    let mut cm = vec![1.0; lmax + 1];
    let mut sm = vec![0.0; lmax + 1];
    for m in 1..=lmax {
        cm[m] = cm[m - 1] * cphi - sm[m - 1] * sphi;
        sm[m] = sm[m - 1] * cphi + cm[m - 1] * sphi;
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut put = |l: usize, m: i64, v: f64| {
        let idx = (l * l + l) as i64 + m;
        if (idx as usize) < out.len() {
            out[idx as usize] = v;
        }
    };

    // Fully normalized associated Legendre functions, column by column in m.
    let mut pmm = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let emit = |l: usize, p: f64, put: &mut dyn FnMut(usize, i64, f64)| {
            if m == 0 {
                put(l, 0, p);
            } else {
                put(l, m as i64, sqrt2 * p * cm[m]);
                put(l, -(m as i64), sqrt2 * p * sm[m]);
            }
        };
        emit(m, pmm, &mut put);
        if m == lmax {
            break;
        }
        let mut p_prev = pmm;
        let mut p_cur = ((2 * m + 3) as f64).sqrt() * z * pmm;
        emit(m + 1, p_cur, &mut put);
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p_next = a * (z * p_cur - b * p_prev);
            p_prev = p_cur;
            p_cur = p_next;
            emit(l, p_cur, &mut put);
        }
    }
}
