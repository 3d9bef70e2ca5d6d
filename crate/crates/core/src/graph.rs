//! Kernel graph Laplacians over sampled points.
//!
//! Two constructions are supported:
//!
//! * `heat`: `w_ij = (1/n) · 1/(t (4πt)^{d/2}) · exp(-‖x_i - x_j‖² / 4t)`,
//!   `L = c · (D - W)`;
//! * `gaussian`: `a_ij = t^{-d/2} · exp(-‖x_i - x_j‖² / t)`,
//!   `L = c · (D - A) / (n t)`;
//!
//! where `c` is the calibration constant that maps the limit operator onto the
//! Laplace–Beltrami operator of a manifold with volume `vol(M)` (see
//! [`calibration_constant`]). Both reduce to `L = s · (D_E - E)` with
//! `E_ij = exp(-‖x_i - x_j‖² / w)` and a scalar `s`, which is what the operator
//! stores. Self-weights cancel in `D - A` and are never materialized.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::PointCloud;

/// Above this many points the kernel is recomputed on every product.
pub const DENSE_CACHE_MAX_POINTS: usize = 8192;

const ROW_TILE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Heat,
    Gaussian,
}

/// Bandwidth schedule `t = c · n^{-2/(d+6)}`.
pub fn scale_parameter(n: usize, intrinsic_dim: usize, c: f64) -> f64 {
    debug_assert!(n >= 2 && c > 0.0);
    c * (n as f64).powf(-2.0 / (intrinsic_dim as f64 + 6.0))
}

/// Multiplier that makes the scheme's limit operator equal the
/// Laplace–Beltrami operator when points are uniform on a manifold of the
/// given volume.
///
/// The limit of `L f` is `m₂ / (2 vol) · Δf`, with `m₂` the per-coordinate
/// second moment of the kernel over `ℝ^d` after the scheme's own
/// normalization. Heat: `m₂ = 2` (so `c = vol`). Gaussian:
/// `m₂ = π^{d/2}/2` (so `c = 4 vol / π^{d/2}`).
pub fn calibration_constant(kind: SchemeKind, intrinsic_dim: usize, volume: f64) -> Result<f64> {
    if !(1..=2).contains(&intrinsic_dim) {
        return Err(Error::invalid(format!(
            "calibration is only derived for intrinsic dimension 1 or 2, got {intrinsic_dim}"
        )));
    }
    if !(volume > 0.0) {
        return Err(Error::invalid("manifold volume must be positive"));
    }
    Ok(match kind {
        SchemeKind::Heat => volume,
        SchemeKind::Gaussian => 4.0 * volume / PI.powf(intrinsic_dim as f64 / 2.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelScheme {
    pub kind: SchemeKind,
    pub intrinsic_dim: usize,
    /// Bandwidth `t > 0`.
    pub bandwidth: f64,
    /// Multiplier applied to `L`.
    pub calibration: f64,
    /// Optional distance beyond which weights are zeroed. Off by default.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

impl KernelScheme {
    pub fn new(kind: SchemeKind, intrinsic_dim: usize, bandwidth: f64, calibration: f64) -> Result<Self> {
        let scheme = Self {
            kind,
            intrinsic_dim,
            bandwidth,
            calibration,
            cutoff: None,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.calibration > 0.0) || !self.calibration.is_finite() {
            return Err(Error::invalid(format!(
                "calibration must be positive, got {}",
                self.calibration
            )));
        }
        if self.intrinsic_dim == 0 {
            return Err(Error::invalid("intrinsic dimension must be positive"));
        }
        Ok(())
    }

    /// Denominator `w` in `exp(-r² / w)`.
    fn width(&self) -> f64 {
        match self.kind {
            SchemeKind::Heat => 4.0 * self.bandwidth,
            SchemeKind::Gaussian => self.bandwidth,
        }
    }

    /// Factor in front of the exponential in the adjacency entry.
    pub fn prefactor(&self, n: usize) -> f64 {
        let t = self.bandwidth;
        let d = self.intrinsic_dim as f64;
        match self.kind {
            SchemeKind::Heat => 1.0 / (n as f64 * t * (4.0 * PI * t).powf(d / 2.0)),
            SchemeKind::Gaussian => t.powf(-d / 2.0),
        }
    }

    /// Adjacency entry for two points at squared distance `sqdist`.
    pub fn adjacency(&self, sqdist: f64, n: usize) -> f64 {
        self.prefactor(n) * self.kernel(sqdist)
    }

    /// Scalar `s` with `L = s · (D_E - E)`.
    fn operator_scale(&self, n: usize) -> f64 {
        match self.kind {
            SchemeKind::Heat => self.calibration * self.prefactor(n),
            SchemeKind::Gaussian => self.calibration * self.prefactor(n) / (n as f64 * self.bandwidth),
        }
    }

    #[inline]
    fn kernel(&self, sqdist: f64) -> f64 {
        if let Some(cut) = self.cutoff {
            if sqdist > cut * cut {
                return 0.0;
            }
        }
        (-sqdist / self.width()).exp()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StorageMode {
    /// Dense cache up to [`DENSE_CACHE_MAX_POINTS`], on-the-fly above.
    #[default]
    Auto,
    CachedDense,
    OnTheFly,
}

#[derive(Clone, Debug)]
enum Storage {
    /// Row-major `n × n` kernel values with a zero diagonal.
    Dense(Vec<f64>),
    OnTheFly,
}

/// `L = s · (D_E - E)` as an immutable, matrix-free linear operator.
#[derive(Clone, Debug)]
pub struct LaplacianOperator {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    scheme: KernelScheme,
    scale: f64,
    degrees: Vec<f64>,
    storage: Storage,
}

pub fn build_laplacian(points: &PointCloud, scheme: KernelScheme) -> Result<LaplacianOperator> {
    build_laplacian_with(points, scheme, StorageMode::Auto)
}

pub fn build_laplacian_with(
    points: &PointCloud,
    scheme: KernelScheme,
    mode: StorageMode,
) -> Result<LaplacianOperator> {
    scheme.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("a graph Laplacian needs at least two points"));
    }
    if points.coords().iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("point cloud has non-finite coordinates"));
    }
    let dim = points.dim();
    let coords = points.coords().to_vec();
    let dense = match mode {
        StorageMode::Auto => n <= DENSE_CACHE_MAX_POINTS,
        StorageMode::CachedDense => true,
        StorageMode::OnTheFly => false,
    };

    let row = |i: usize, out: &mut [f64]| -> f64 {
        let xi = &coords[i * dim..(i + 1) * dim];
        let mut degree = 0.0;
        for (j, (o, xj)) in out.iter_mut().zip(coords.chunks_exact(dim)).enumerate() {
            let w = if i == j { 0.0 } else { scheme.kernel(sqdist(xi, xj)) };
            *o = w;
            degree += w;
        }
        degree
    };

    let (degrees, storage) = if dense {
        let mut matrix = vec![0.0; n * n];
        let degrees: Vec<f64> = matrix
            .par_chunks_mut(n)
            .enumerate()
            .map(|(i, out)| row(i, out))
            .collect();
        (degrees, Storage::Dense(matrix))
    } else {
        let degrees: Vec<f64> = (0..n)
            .into_par_iter()
            .map_init(|| vec![0.0; n], |buf, i| row(i, buf))
            .collect();
        (degrees, Storage::OnTheFly)
    };

    Ok(LaplacianOperator {
        n,
        dim,
        coords,
        scheme,
        scale: scheme.operator_scale(n),
        degrees,
        storage,
    })
}

impl LaplacianOperator {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scheme(&self) -> &KernelScheme {
        &self.scheme
    }

    pub fn is_cached(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Weighted degrees `Σ_j L_ij` off the diagonal, i.e. the diagonal of `L`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.degrees.iter().map(|d| self.scale * d).collect()
    }

    /// Gershgorin bound on the largest eigenvalue: `2 · max_i L_ii`.
    pub fn spectral_upper_bound(&self) -> f64 {
        2.0 * self.scale * self.degrees.iter().cloned().fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::invalid(format!(
                "matvec expects vectors of length {}, got {} and {}",
                self.n,
                x.len(),
                y.len()
            )));
        }
        self.apply(x, y);
        Ok(())
    }

    /// Unchecked product; lengths must already match.
    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let dim = self.dim;
        let scale = self.scale;
        match &self.storage {
            Storage::Dense(matrix) => {
                y.par_chunks_mut(ROW_TILE).enumerate().for_each(|(tile, ys)| {
                    let base = tile * ROW_TILE;
                    for (k, yi) in ys.iter_mut().enumerate() {
                        let i = base + k;
                        let off = dot(&matrix[i * n..(i + 1) * n], x);
                        *yi = scale * (self.degrees[i] * x[i] - off);
                    }
                });
            }
            Storage::OnTheFly => {
                let coords = &self.coords;
                y.par_chunks_mut(ROW_TILE).enumerate().for_each(|(tile, ys)| {
                    let base = tile * ROW_TILE;
                    for (k, yi) in ys.iter_mut().enumerate() {
                        let i = base + k;
                        let xi = &coords[i * dim..(i + 1) * dim];
                        let mut off = 0.0;
                        for (j, (xj, vj)) in coords.chunks_exact(dim).zip(x).enumerate() {
                            let w = if i == j { 0.0 } else { self.scheme.kernel(sqdist(xi, xj)) };
                            off += w * vj;
                        }
                        *yi = scale * (self.degrees[i] * x[i] - off);
                    }
                });
            }
        }
    }

    /// Dense row-major copy of `L`. Intended for small `n` (oracles, tests).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let xi = &self.coords[i * self.dim..(i + 1) * self.dim];
            for j in 0..n {
                out[i * n + j] = if i == j {
                    self.scale * self.degrees[i]
                } else {
                    let w = match &self.storage {
                        Storage::Dense(m) => m[i * n + j],
                        Storage::OnTheFly => {
                            self.scheme
                                .kernel(sqdist(xi, &self.coords[j * self.dim..(j + 1) * self.dim]))
                        }
                    };
                    -self.scale * w
                };
            }
        }
        out
    }
}

#[inline]
fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (pa, pb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += pa[k] * pb[k];
        }
    }
    let mut tail = 0.0;
    for (p, q) in ra.iter().zip(rb) {
        tail += p * q;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{sample_uniform, ManifoldKind, ManifoldModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn bandwidth_schedule() {
        assert!((scale_parameter(1024, 2, 1.0) - 2f64.powf(-2.5)).abs() < 1e-15);
        assert!((scale_parameter(1024, 2, 1.0) - 0.1767767).abs() < 1e-7);
        assert!((scale_parameter(128, 1, 1.0) - 0.25).abs() < 1e-15);
        assert!((scale_parameter(4096, 2, 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn calibration_constants() {
        assert_eq!(calibration_constant(SchemeKind::Heat, 2, 1.0).unwrap(), 1.0);
        let circle = calibration_constant(SchemeKind::Gaussian, 1, 2.0 * PI).unwrap();
        assert!((circle - 8.0 * PI.sqrt()).abs() < 1e-12);
        let sphere = calibration_constant(SchemeKind::Gaussian, 2, 4.0 * PI).unwrap();
        assert!((sphere - 16.0).abs() < 1e-12);
        assert!(calibration_constant(SchemeKind::Gaussian, 3, 1.0).is_err());
    }

    #[test]
    fn gaussian_adjacency_entry() {
        let s = KernelScheme::new(SchemeKind::Gaussian, 2, 0.25, 1.0).unwrap();
        let a = s.adjacency(0.25, 10);
        assert!((a - 4.0 * (-1.0f64).exp()).abs() < 1e-14);
        assert!((a - 1.471518).abs() < 1e-6);
    }

    #[test]
    fn heat_prefactor_at_unit_scale() {
        let t = 1.0 / (4.0 * PI);
        let s = KernelScheme::new(SchemeKind::Heat, 2, t, 1.0).unwrap();
        let n = 50;
        assert!((s.prefactor(n) - 4.0 * PI / n as f64).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(KernelScheme::new(SchemeKind::Heat, 2, 0.0, 1.0).is_err());
        assert!(KernelScheme::new(SchemeKind::Heat, 2, -1.0, 1.0).is_err());
        assert!(KernelScheme::new(SchemeKind::Heat, 2, 1.0, 0.0).is_err());
        assert!(PointCloud::from_coords(ManifoldKind::Circle, vec![1.0, 0.0, f64::NAN, 0.0]).is_err());
        assert!(PointCloud::from_coords(ManifoldKind::Circle, vec![1.0, 0.0, 0.5, 0.0]).is_err());
        let s = KernelScheme::new(SchemeKind::Gaussian, 1, 0.1, 1.0).unwrap();
        let single = PointCloud::from_coords(ManifoldKind::Circle, vec![1.0, 0.0]).unwrap();
        assert!(build_laplacian(&single, s).is_err());
    }

    #[test]
    fn matvec_length_mismatch() {
        let cloud = sample_uniform(&ManifoldModel::circle(), 5, 1).unwrap();
        let s = KernelScheme::new(SchemeKind::Gaussian, 1, 0.1, 1.0).unwrap();
        let op = build_laplacian(&cloud, s).unwrap();
        assert!(matches!(op.matvec(&[1.0; 4]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constant_vector_is_in_kernel() {
        for kind in [SchemeKind::Heat, SchemeKind::Gaussian] {
            let cloud = sample_uniform(&ManifoldModel::sphere2(), 200, 4).unwrap();
            let s = KernelScheme::new(kind, 2, 0.2, 16.0).unwrap();
            let op = build_laplacian(&cloud, s).unwrap();
            let y = op.matvec(&vec![1.0; 200]).unwrap();
            let scale = op.diagonal().iter().cloned().fold(0.0, f64::max);
            assert!(y.iter().all(|v| v.abs() <= 1e-10 * scale.max(1.0)));
        }
    }

    #[test]
    fn three_point_product_matches_hand_computed_matrix() {
        let pts = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let cloud = PointCloud::from_coords(ManifoldKind::Circle, pts).unwrap();
        let t = 0.5;
        let s = KernelScheme::new(SchemeKind::Gaussian, 1, t, 1.0).unwrap();
        let op = build_laplacian(&cloud, s).unwrap();
        // squared distances: (0,1)=2, (0,2)=4, (1,2)=2
        let a = |r2: f64| t.powf(-0.5) * (-r2 / t).exp();
        let (a01, a02, a12) = (a(2.0), a(4.0), a(2.0));
        let k = 1.0 / (3.0 * t);
        let first_column = [k * (a01 + a02), -k * a01, -k * a02];
        let y = op.matvec(&[1.0, 0.0, 0.0]).unwrap();
        for (got, want) in y.iter().zip(first_column) {
            assert!((got - want).abs() < 1e-14 * k, "{got} vs {want}");
        }
        let dense = op.to_dense();
        assert!((dense[4] - k * (a01 + a12)).abs() < 1e-14 * k);
    }

    #[test]
    fn cached_and_on_the_fly_agree() {
        let cloud = sample_uniform(&ManifoldModel::sphere2(), 256, 8).unwrap();
        let s = KernelScheme::new(SchemeKind::Gaussian, 2, 0.3, 16.0).unwrap();
        let cached = build_laplacian_with(&cloud, s, StorageMode::CachedDense).unwrap();
        let lazy = build_laplacian_with(&cloud, s, StorageMode::OnTheFly).unwrap();
        assert!(cached.is_cached() && !lazy.is_cached());
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 256);
        let (a, b) = (cached.matvec(&x).unwrap(), lazy.matvec(&x).unwrap());
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        assert!(diff <= 1e-12 * norm, "relative difference {}", diff / norm);
    }

    #[test]
    fn symmetric_and_positive_semidefinite() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for (kind, manifold) in [
            (SchemeKind::Heat, ManifoldModel::circle()),
            (SchemeKind::Gaussian, ManifoldModel::sphere2()),
        ] {
            let cloud = sample_uniform(&manifold, 300, 3).unwrap();
            let s = KernelScheme::new(kind, manifold.intrinsic_dim, 0.1, 1.0).unwrap();
            let op = build_laplacian(&cloud, s).unwrap();
            for _ in 0..20 {
                let x = random_vec(&mut rng, 300);
                let y = random_vec(&mut rng, 300);
                let lx = op.matvec(&x).unwrap();
                let ly = op.matvec(&y).unwrap();
                let a: f64 = lx.iter().zip(&y).map(|(p, q)| p * q).sum();
                let b: f64 = x.iter().zip(&ly).map(|(p, q)| p * q).sum();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
                let quad: f64 = lx.iter().zip(&x).map(|(p, q)| p * q).sum();
                let xx: f64 = x.iter().map(|v| v * v).sum();
                assert!(quad >= -1e-12 * xx);
            }
        }
    }

    #[test]
    fn cutoff_drops_far_weights() {
        let cloud = sample_uniform(&ManifoldModel::circle(), 100, 5).unwrap();
        let s = KernelScheme::new(SchemeKind::Gaussian, 1, 0.1, 1.0).unwrap().with_cutoff(0.3);
        let op = build_laplacian(&cloud, s).unwrap();
        let dense = op.to_dense();
        for i in 0..100 {
            for j in 0..100 {
                if i != j && sqdist(cloud.point(i), cloud.point(j)) > 0.09 {
                    assert_eq!(dense[i * 100 + j], 0.0);
                }
            }
        }
    }

    #[test]
    fn dot_matches_naive_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for len in [0, 1, 7, 8, 9, 100] {
            let a = random_vec(&mut rng, len);
            let b = random_vec(&mut rng, len);
            let naive: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }
}
