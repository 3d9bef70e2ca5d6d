//! Smallest eigenpairs of graph Laplacians and eigen-convergence diagnostics.
//!
//! All discrete inner products use the sample-average weighting
//! `⟨x, y⟩_{G_n} = (1/n) Σ x_i y_i`, the Monte Carlo counterpart of the
//! normalized L² inner product on the manifold. Eigenvectors are normalized
//! in that norm, so `‖φ^n‖_{G_n} = 1` means a Euclidean norm of `√n`.

use std::ops::{Deref, Range};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{dot, LaplacianOperator};
use crate::manifolds::{ContinuumEigenpair, ManifoldModel, PointCloud, Quadrature};
use crate::seed::derive_seed;

/// A symmetric linear operator the eigensolver can drive.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; both slices have length [`dim`](Self::dim).
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Any upper bound on the largest eigenvalue.
    fn spectral_upper_bound(&self) -> f64;

    /// Row-major dense copy, built column by column from products.
    fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                out[i * n + j] = col[i];
            }
        }
        out
    }
}

impl SymmetricOperator for LaplacianOperator {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        LaplacianOperator::apply(self, x, y)
    }

    fn spectral_upper_bound(&self) -> f64 {
        LaplacianOperator::spectral_upper_bound(self)
    }

    fn to_dense(&self) -> Vec<f64> {
        LaplacianOperator::to_dense(self)
    }
}

/// Explicit symmetric matrix, row-major.
#[derive(Clone, Debug)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid("dense matrix buffer has the wrong length"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::invalid("matrix is not symmetric"));
                }
            }
        }
        Ok(Self { n, data })
    }
}

impl SymmetricOperator for DenseSymmetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(&self.data[i * self.n..(i + 1) * self.n], x);
        }
    }

    fn spectral_upper_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn to_dense(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// A vector over the sample points with the `G_n` inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct GnVector(Vec<f64>);

impl GnVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn inner(&self, other: &GnVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        dot(&self.0, &other.0) / self.0.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &GnVector) {
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += a * o;
        }
    }

    pub fn distance(&self, other: &GnVector) -> f64 {
        let n = self.0.len() as f64;
        (self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt()
    }
}

impl Deref for GnVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for GnVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Leading eigenpairs, ascending, with `G_n`-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<GnVector>,
    /// `‖L φ_i − λ_i φ_i‖_{G_n}` as measured after the solve.
    pub residuals: Vec<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of points.
    pub fn dim(&self) -> usize {
        self.eigenvectors.first().map_or(0, |v| v.len())
    }

    pub fn truncated(&self, k: usize) -> EigenSystem {
        let k = k.min(self.len());
        EigenSystem {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    pub seed: u64,
    /// Krylov dimension cap; defaults to `40 · K`.
    pub max_iterations: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            seed: 0,
            max_iterations: None,
        }
    }
}

impl LanczosOptions {
    pub fn new(tol: f64, seed: u64) -> Self {
        Self {
            tol,
            seed,
            max_iterations: None,
        }
    }
}

/// The `k` algebraically smallest eigenpairs of `op`.
///
/// Lanczos with full reorthogonalization runs on the flipped operator
/// `σ I − A`, where `σ` is the operator's Gershgorin bound, so the wanted
/// pairs are the dominant end of the flipped spectrum. Convergence requires
/// every residual `‖A φ − λ φ‖_{G_n} ≤ tol · max(λ_{k−1}, 1)`.
pub fn smallest_eigenpairs<A: SymmetricOperator + ?Sized>(
    op: &A,
    k: usize,
    opts: &LanczosOptions,
) -> Result<EigenSystem> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let cap = opts.max_iterations.unwrap_or(40 * k).clamp(k, n);
    let shift = op.spectral_upper_bound().max(0.0) * 1.01 + f64::MIN_POSITIVE;

    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(&[opts.seed, n as u64, k as u64]));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cap + 1);
    let mut alpha: Vec<f64> = Vec::with_capacity(cap);
    let mut beta: Vec<f64> = Vec::with_capacity(cap);

    let mut q = random_unit(&mut rng, n);
    let mut w = vec![0.0; n];
    let mut next_check = k.max(8);
    let mut last_residuals = Vec::new();

    loop {
        let m = basis.len();
        op.apply(&q, &mut w);
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi = shift * qi - *wi;
        }
        let a = dot(&q, &w);
        basis.push(std::mem::take(&mut q));
        alpha.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            orthogonalize(&mut w, &basis);
        }
        let b = dot(&w, &w).sqrt();
        let m = m + 1;

        let invariant = b <= 1e-13 * shift;
        if m >= next_check || m == cap || invariant {
            let ritz = ritz_pairs(&alpha, &beta, k.min(m));
            let res_scale = if invariant { 0.0 } else { b };
            let wanted = (shift - ritz.values[ritz.values.len() - 1]).max(1.0);
            last_residuals = ritz.last_row.iter().map(|s| (res_scale * s).abs()).collect();
            let converged = ritz.values.len() == k
                && last_residuals.iter().all(|r| *r <= opts.tol * wanted);
            if converged {
                let system = assemble(op, &basis, &ritz, shift);
                let limit = opts.tol * system.eigenvalues[k - 1].max(1.0);
                if system.residuals.iter().all(|r| *r <= limit * 10.0) {
                    return Ok(system);
                }
                last_residuals = system.residuals.clone();
            }
            if m == cap {
                break;
            }
            next_check = m + (m / 10).max(4);
        }

        if invariant {
            // Krylov space is invariant; continue from a fresh direction.
            let mut fresh = random_unit(&mut rng, n);
            for _ in 0..2 {
                orthogonalize(&mut fresh, &basis);
            }
            let norm = dot(&fresh, &fresh).sqrt();
            if norm < 1e-10 {
                break;
            }
            fresh.iter_mut().for_each(|v| *v /= norm);
            beta.push(0.0);
            q = fresh;
        } else {
            beta.push(b);
            q = w.iter().map(|v| v / b).collect();
        }
    }

    let max_residual = last_residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::ConvergenceFailure {
        iterations: basis.len(),
        max_residual,
        residuals: last_residuals,
    })
}

/// Reference solver: dense symmetric eigendecomposition of the materialized operator.
pub fn dense_eigenpairs<A: SymmetricOperator + ?Sized>(op: &A, k: usize) -> Result<EigenSystem> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    let matrix = DMatrix::from_row_slice(n, n, &op.to_dense());
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = (n as f64).sqrt();
    let mut system = EigenSystem {
        eigenvalues: Vec::with_capacity(k),
        eigenvectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
    };
    let mut buf = vec![0.0; n];
    for &idx in order.iter().take(k) {
        let v: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|x| x * scale).collect();
        let lambda = eig.eigenvalues[idx];
        op.apply(&v, &mut buf);
        let res = residual_norm(&buf, &v, lambda);
        system.eigenvalues.push(lambda);
        system.eigenvectors.push(GnVector::new(v));
        system.residuals.push(res);
    }
    Ok(system)
}

struct Ritz {
    /// Largest Ritz values of the flipped operator, descending.
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    /// Last component of each Ritz vector of the tridiagonal matrix.
    last_row: Vec<f64>,
}

fn ritz_pairs(alpha: &[f64], beta: &[f64], k: usize) -> Ritz {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let take = &order[..k];
    Ritz {
        values: take.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: take
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().cloned().collect())
            .collect(),
        last_row: take.iter().map(|&i| eig.eigenvectors[(m - 1, i)]).collect(),
    }
}

fn assemble<A: SymmetricOperator + ?Sized>(op: &A, basis: &[Vec<f64>], ritz: &Ritz, shift: f64) -> EigenSystem {
    let n = op.dim();
    let scale = (n as f64).sqrt();
    let mut pairs: Vec<(f64, Vec<f64>, f64)> = ritz
        .vectors
        .iter()
        .zip(&ritz.values)
        .map(|(s, theta)| {
            let mut v = vec![0.0; n];
            for (coef, q) in s.iter().zip(basis) {
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi += coef * qi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x *= scale / norm);
            let mut av = vec![0.0; n];
            op.apply(&v, &mut av);
            // Rayleigh quotient in G_n normalization
            let lambda = dot(&v, &av) / n as f64;
            let lambda = if lambda.is_finite() { lambda } else { shift - theta };
            let res = residual_norm(&av, &v, lambda);
            (lambda, v, res)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    EigenSystem {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        residuals: pairs.iter().map(|p| p.2).collect(),
        eigenvectors: pairs.into_iter().map(|p| GnVector::new(p.1)).collect(),
    }
}

fn residual_norm(av: &[f64], v: &[f64], lambda: f64) -> f64 {
    let n = v.len() as f64;
    (av.iter().zip(v).map(|(a, x)| (a - lambda * x).powi(2)).sum::<f64>() / n).sqrt()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    let coefs: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
    for (c, q) in coefs.iter().zip(basis) {
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
}

fn random_unit(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Index ranges of consecutive values whose gaps are below
/// `rel · max(1, λ)`.
pub fn group_by_gap(values: &[f64], rel: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= rel * values[i - 1].abs().max(1.0) {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Sampling projections `P_n φ_i` of the first `count` eigenfunctions.
pub fn project_eigenfunctions(manifold: &ManifoldModel, points: &PointCloud, count: usize) -> Vec<GnVector> {
    let n = points.len();
    let mut cols = vec![vec![0.0; n]; count];
    let mut buf = vec![0.0; count];
    for (j, x) in points.iter().enumerate() {
        manifold.eval_basis(x, &mut buf);
        for (c, v) in cols.iter_mut().zip(&buf) {
            c[j] = *v;
        }
    }
    cols.into_iter().map(GnVector::new).collect()
}

fn check_groups(groups: &[Range<usize>], count: usize) -> Result<()> {
    let mut next = 0;
    for g in groups {
        if g.start != next || g.end <= g.start {
            return Err(Error::invalid("multiplicity groups must partition the eigenpair indices"));
        }
        next = g.end;
    }
    if next != count {
        return Err(Error::invalid(format!(
            "multiplicity groups cover {next} indices, expected {count}"
        )));
    }
    Ok(())
}

/// Rotates discrete eigenvectors, group by group, onto the projected
/// continuum eigenfunctions.
///
/// Within each group the orthogonal matrix maximizing
/// `Σ_b ⟨ψ_b, P_n φ_b⟩_{G_n}` is the polar factor `U Vᵀ` of the cross-Gram
/// matrix `M_ab = ⟨φ^n_a, P_n φ_b⟩`. A one-element group reduces to a sign
/// flip. Eigenvalues are carried over unchanged.
pub fn align_to_continuum(
    discrete: &EigenSystem,
    projected: &[GnVector],
    groups: &[Range<usize>],
) -> Result<EigenSystem> {
    let k = discrete.len();
    if projected.len() != k {
        return Err(Error::invalid(format!(
            "{} projected eigenfunctions for {k} discrete eigenvectors",
            projected.len()
        )));
    }
    if projected.iter().any(|p| p.len() != discrete.dim()) {
        return Err(Error::invalid("projected vectors and eigenvectors differ in length"));
    }
    check_groups(groups, k)?;

    let mut out = discrete.clone();
    for g in groups {
        let size = g.len();
        if size == 1 {
            let i = g.start;
            if discrete.eigenvectors[i].inner(&projected[i]) < 0.0 {
                out.eigenvectors[i].values_mut().iter_mut().for_each(|v| *v = -*v);
            }
            continue;
        }
        let cross = DMatrix::from_fn(size, size, |a, b| {
            discrete.eigenvectors[g.start + a].inner(&projected[g.start + b])
        });
        let svd = cross.svd(true, true);
        let rotation = svd.u.unwrap() * svd.v_t.unwrap();
        for b in 0..size {
            let mut v = GnVector::zeros(discrete.dim());
            for a in 0..size {
                v.axpy(rotation[(a, b)], &discrete.eigenvectors[g.start + a]);
            }
            out.eigenvectors[g.start + b] = v;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenError {
    /// `|λ_i − λ_i^n|`
    pub eigenvalue: f64,
    /// `‖P_n φ_i − φ_i^n‖_{G_n}`
    pub eigenvector: f64,
}

/// Per-index eigenvalue and eigenvector errors of an aligned system.
pub fn eigen_errors(
    aligned: &EigenSystem,
    continuum: &[ContinuumEigenpair],
    manifold: &ManifoldModel,
    points: &PointCloud,
) -> Vec<EigenError> {
    let count = aligned.len().min(continuum.len());
    let projected = project_eigenfunctions(manifold, points, count);
    (0..count)
        .map(|i| EigenError {
            eigenvalue: (continuum[i].eigenvalue - aligned.eigenvalues[i]).abs(),
            eigenvector: projected[i].distance(&aligned.eigenvectors[i]),
        })
        .collect()
}

/// Root-sum-square eigenvector error per group.
pub fn group_vector_errors(errors: &[EigenError], groups: &[Range<usize>]) -> Vec<f64> {
    groups
        .iter()
        .filter(|g| g.end <= errors.len())
        .map(|g| errors[g.clone()].iter().map(|e| e.eigenvector.powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// Sine of the largest principal angle between two `G_n`-orthonormal sets
/// spanning equal-dimensional subspaces.
pub fn subspace_sin_angle(a: &[GnVector], b: &[GnVector]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    // residual of projecting each a_i onto span(b)
    let residuals: Vec<GnVector> = a
        .iter()
        .map(|ai| {
            let mut r = ai.clone();
            for bj in b {
                r.axpy(-bj.inner(ai), bj);
            }
            r
        })
        .collect();
    let size = a.len();
    let gram = DMatrix::from_fn(size, size, |i, j| residuals[i].inner(&residuals[j]));
    let top = SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(0.0, f64::max);
    top.max(0.0).sqrt()
}

pub use crate::bounds::hoeffding_bound;

#[derive(Clone, Debug)]
pub struct HoeffdingReport {
    pub violation_rate: f64,
    pub bound: f64,
    /// `⟨f, g⟩_{L²(M)}` by quadrature.
    pub exact_inner: f64,
    pub sup_fg: f64,
    pub max_deviation: f64,
}

/// Fraction of trials in which the empirical inner product of `f` and `g`
/// at `n` uniform points deviates from the manifold inner product by more
/// than the concentration bound.
pub fn hoeffding_check(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    manifold: &ManifoldModel,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<HoeffdingReport> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    if n < 2 {
        return Err(Error::invalid("at least two points are required"));
    }
    let quad = Quadrature::default_for(manifold);
    let exact_inner = quad.integrate(|x| f(x) * g(x));
    let sup_fg = quad.nodes().map(|x| (f(x) * g(x)).abs()).fold(0.0, f64::max);
    let bound = hoeffding_bound(n, sup_fg);

    let mut violations = 0;
    let mut max_deviation: f64 = 0.0;
    for trial in 0..trials {
        let points = crate::manifolds::sample_uniform(manifold, n, derive_seed(&[seed, n as u64, trial as u64]))?;
        let empirical = points.iter().map(|x| f(x) * g(x)).sum::<f64>() / n as f64;
        let dev = (empirical - exact_inner).abs();
        max_deviation = max_deviation.max(dev);
        if dev > bound {
            violations += 1;
        }
    }
    Ok(HoeffdingReport {
        violation_rate: violations as f64 / trials as f64,
        bound,
        exact_inner,
        sup_fg,
        max_deviation,
    })
}
