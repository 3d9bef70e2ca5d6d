//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset by number: `cargo test --test acceptance -- 4 5 7`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use converge_core::bounds::{error_recurrence, filter_count_factor, hoeffding_bound, FactorVariant};
use converge_core::filters::{check_nonamplifying, SpectralFilter};
use converge_core::graph::{
    build_laplacian, calibration_constant, scale_parameter, KernelScheme, LaplacianOperator, SchemeKind,
};
use converge_core::harness::{
    eigen_convergence_experiment, run_convergence_experiment, ExperimentConfig, ExperimentResult, FullSpectrum,
    NGrid, OutputConfig, PerNSummary, SignalConfig, SolverMethod, Truncation,
};
use converge_core::manifolds::{continuum_eigenpairs, multiplicity_groups, sample_uniform, ManifoldKind, ManifoldModel};
use converge_core::network::{filter_apply_discrete, forward_discrete, FeatureField, NetworkSpec, Nonlinearity};
use converge_core::seed::derive_seed;
use converge_core::spectral::{
    dense_eigenpairs, hoeffding_check, smallest_eigenpairs, subspace_sin_angle, GnVector, LanczosOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const MASTER_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_config() -> ExperimentConfig {
    ExperimentConfig::sphere_reference(NGrid::log_spaced(1 << 10, 1 << 13, 8), 20, MASTER_SEED)
}

/// The reference run is shared by criteria 1, 2 and 9.
struct Shared {
    reference: Option<(ExperimentResult, Duration)>,
}

impl Shared {
    fn reference(&mut self) -> &(ExperimentResult, Duration) {
        self.reference.get_or_insert_with(|| {
            let start = Instant::now();
            let res = run_convergence_experiment(&reference_config()).expect("reference run");
            (res, start.elapsed())
        })
    }
}

fn rate_reproduction(shared: &mut Shared) -> Outcome {
    let (res, elapsed) = shared.reference();
    let Some(fit) = res.fit else {
        return outcome(false, "no fit".into());
    };
    let pass = (-0.95..=-0.45).contains(&fit.slope) && fit.slope < -0.25 && elapsed.as_secs() <= 30 * 60;
    outcome(
        pass,
        format!(
            "slope {:.4} (window [-0.95, -0.45], guarantee -0.25), r2 {:.3}, {:.0}s",
            fit.slope,
            fit.r2,
            elapsed.as_secs_f64()
        ),
    )
}

/// Nonincreasing means, tolerating a single rise no larger than one standard
/// error.
fn monotone_with_one_inversion(per_n: &[PerNSummary]) -> (bool, usize) {
    let mut inversions = 0;
    for w in per_n.windows(2) {
        if w[1].mean > w[0].mean {
            let se = w[0].standard_error().max(w[1].standard_error());
            if w[1].mean - w[0].mean > se {
                return (false, inversions + 1);
            }
            inversions += 1;
        }
    }
    (inversions <= 1, inversions)
}

fn rate_consistency(shared: &mut Shared) -> Outcome {
    let (res, _) = shared.reference();
    let (pass, inversions) = monotone_with_one_inversion(&res.per_n);
    let means: Vec<String> = res.per_n.iter().map(|s| format!("{:.3e}", s.mean)).collect();
    outcome(pass, format!("{inversions} inversion(s); means [{}]", means.join(", ")))
}

fn strictly_decreasing(per_n: &[PerNSummary]) -> bool {
    per_n.windows(2).all(|w| w[1].mean < w[0].mean)
}

fn eigen_convergence() -> Outcome {
    let mut cfg = ExperimentConfig::sphere_reference(
        NGrid::List((9..=13).map(|k| 1usize << k).collect()),
        20,
        MASTER_SEED,
    );
    cfg.manifold = ManifoldKind::Circle;
    cfg.signal = SignalConfig::Single(vec![1.0; 3]);
    cfg.truncation = Truncation::Modes(3);
    cfg.eigen_indices = Some(vec![1]);
    let start = Instant::now();
    let res = match eigen_convergence_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("experiment failed: {e}")),
    };
    let elapsed = start.elapsed();
    let s = res.index(1).unwrap();
    let value_slope = s.eigenvalue_fit.map_or(f64::NAN, |f| f.slope);
    let vector_slope = s.eigenvector_fit.map_or(f64::NAN, |f| f.slope);
    let pass = strictly_decreasing(&s.eigenvalue_per_n)
        && value_slope <= -0.15
        && strictly_decreasing(&s.eigenvector_per_n)
        && elapsed.as_secs() <= 10 * 60;
    outcome(
        pass,
        format!(
            "|λ1 - λ1^n| slope {value_slope:.4} (≤ -0.15), eigenvector slope {vector_slope:.4}, \
             decreasing: values {} vectors {}, {:.0}s",
            strictly_decreasing(&s.eigenvalue_per_n),
            strictly_decreasing(&s.eigenvector_per_n),
            elapsed.as_secs_f64()
        ),
    )
}

fn sphere_operator(kind: SchemeKind, n: usize, seed: u64) -> LaplacianOperator {
    let m = ManifoldModel::sphere2();
    let cloud = sample_uniform(&m, n, seed).unwrap();
    let cal = calibration_constant(kind, 2, m.volume).unwrap();
    let c = match kind {
        SchemeKind::Gaussian => 2.0,
        SchemeKind::Heat => 1.0,
    };
    build_laplacian(&cloud, KernelScheme::new(kind, 2, scale_parameter(n, 2, c), cal).unwrap()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let (n, k) = (256, 10);
    let m = ManifoldModel::sphere2();
    let pairs = continuum_eigenpairs(&m, k).unwrap();
    let groups = multiplicity_groups(&pairs);
    let mut worst_value: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    for kind in [SchemeKind::Heat, SchemeKind::Gaussian] {
        let op = sphere_operator(kind, n, MASTER_SEED);
        let lanczos = smallest_eigenpairs(&op, k, &LanczosOptions::new(1e-10, MASTER_SEED)).unwrap();
        let dense = dense_eigenpairs(&op, k).unwrap();
        for (a, b) in lanczos.eigenvalues.iter().zip(&dense.eigenvalues) {
            worst_value = worst_value.max((a - b).abs());
        }
        for g in &groups {
            let angle = subspace_sin_angle(&lanczos.eigenvectors[g.clone()], &dense.eigenvectors[g.clone()]);
            worst_angle = worst_angle.max(angle);
        }
    }
    outcome(
        worst_value <= 1e-8 && worst_angle <= 1e-6,
        format!("max eigenvalue gap {worst_value:.2e} (≤ 1e-8), max group sin-angle {worst_angle:.2e} (≤ 1e-6)"),
    )
}

fn identity_end_to_end() -> Outcome {
    let mut worst: f64 = 0.0;
    for manifold in [ManifoldKind::Sphere2, ManifoldKind::Circle] {
        let mut cfg = ExperimentConfig::sphere_reference(NGrid::List(vec![64, 128]), 5, MASTER_SEED);
        cfg.manifold = manifold;
        if manifold == ManifoldKind::Circle {
            cfg.signal = SignalConfig::Single(vec![1.0; 5]);
        }
        cfg.network.filter = SpectralFilter::Identity;
        cfg.network.nonlinearity = Nonlinearity::Identity;
        cfg.solver.method = SolverMethod::Dense;
        cfg.truncation = Truncation::Full(FullSpectrum::All);
        match run_convergence_experiment(&cfg) {
            Ok(res) => {
                for r in &res.records {
                    worst = worst.max(r.error.unwrap_or(f64::INFINITY));
                }
            }
            Err(e) => return outcome(false, format!("run failed: {e}")),
        }
    }
    outcome(worst <= 1e-7, format!("max mnn_error {worst:.2e} (≤ 1e-7)"))
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER_SEED);
    let mut failures = Vec::new();

    // 20 random operators: symmetry, PSD, zero row sums.
    for i in 0..20 {
        let sphere = rng.random_bool(0.5);
        let kind = if rng.random_bool(0.5) { SchemeKind::Heat } else { SchemeKind::Gaussian };
        let m = if sphere { ManifoldModel::sphere2() } else { ManifoldModel::circle() };
        let n = rng.random_range(32..200);
        let t = rng.random_range(0.05..1.0);
        let cloud = sample_uniform(&m, n, rng.random()).unwrap();
        let op = build_laplacian(&cloud, KernelScheme::new(kind, m.intrinsic_dim, t, 2.0).unwrap()).unwrap();
        let a = op.to_dense();
        let scale = op.spectral_upper_bound();
        let asym = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| (a[r * n + c] - a[c * n + r]).abs())
            .fold(0.0, f64::max);
        let row = (0..n)
            .map(|r| a[r * n..(r + 1) * n].iter().sum::<f64>().abs())
            .fold(0.0, f64::max);
        let lowest = dense_eigenpairs(&op, 1).unwrap().eigenvalues[0];
        let quad_ok = (0..20).all(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lx = op.matvec(&x).unwrap();
            x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>() >= -1e-10 * scale
        });
        if asym > 0.0 || row > 1e-10 * scale || lowest < -1e-10 * scale || !quad_ok {
            failures.push(format!("operator {i}"));
        }
    }

    // Non-amplification on 50 random signals.
    let op = sphere_operator(SchemeKind::Gaussian, 300, MASTER_SEED);
    let sys = dense_eigenpairs(&op, 300).unwrap();
    let h = SpectralFilter::exponential();
    if !check_nonamplifying(&h, *sys.eigenvalues.last().unwrap(), 1000).unwrap().non_amplifying {
        failures.push("filter sup".into());
    }
    for _ in 0..50 {
        let x = GnVector::new((0..300).map(|_| rng.random_range(-2.0..2.0)).collect());
        let y = filter_apply_discrete(&h, &sys, &x).unwrap();
        if y.norm() > x.norm() * (1.0 + 1e-12) {
            failures.push("non-amplification".into());
            break;
        }
    }

    // Sign flips of the basis leave the discrete network unchanged.
    let top = sys.truncated(9);
    let cloud = sample_uniform(&ManifoldModel::sphere2(), 300, MASTER_SEED).unwrap();
    let x0 = FeatureField::new(0, vec![GnVector::new(cloud.iter().map(|p| p[0] * p[1] + p[2]).collect())]);
    let net = NetworkSpec::uniform(vec![1, 3, 1], h.clone(), Nonlinearity::Abs).unwrap();
    let base = forward_discrete(&net, &top, &x0).unwrap();
    let mut worst_flip: f64 = 0.0;
    for _ in 0..10 {
        let mut flipped = top.clone();
        for v in &mut flipped.eigenvectors {
            if rng.random_bool(0.5) {
                v.values_mut().iter_mut().for_each(|x| *x = -*x);
            }
        }
        let out = forward_discrete(&net, &flipped, &x0).unwrap();
        worst_flip = worst_flip.max(base.features[0].distance(&out.features[0]));
    }
    if worst_flip > 1e-10 {
        failures.push(format!("sign flip {worst_flip:.1e}"));
    }

    // σ is non-expansive on 10³ random pairs.
    for s in [Nonlinearity::Abs, Nonlinearity::Relu, Nonlinearity::Identity] {
        let ok = (0..1000).all(|_| {
            let (a, b): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            (s.apply(a) - s.apply(b)).abs() <= (a - b).abs()
        });
        if !ok {
            failures.push(format!("{s:?} expansive"));
        }
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("20 operators, 50 signals, sign flips within {worst_flip:.1e}, 3000 σ pairs")
        } else {
            failures.join("; ")
        },
    )
}

fn bound_calculators() -> Outcome {
    let factor = filter_count_factor(&[2, 2, 2], FactorVariant::Theorem).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER_SEED);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let depth = rng.random_range(1..7);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..6)).collect();
        let delta = rng.random_range(1e-4..10.0);
        let eps = *error_recurrence(delta, 0.0, &widths).unwrap().last().unwrap();
        let closed = delta * filter_count_factor(&widths, FactorVariant::Appendix).unwrap() as f64;
        worst_rel = worst_rel.max((eps - closed).abs() / closed);
    }
    let h = hoeffding_bound(4096, 1.0);
    outcome(
        factor == 12 && worst_rel <= 1e-12 && (h - 0.19119).abs() <= 1e-4,
        format!("factor {factor}, recurrence rel. gap {worst_rel:.1e}, hoeffding(4096, 1) = {h:.5}"),
    )
}

fn hoeffding_empirical() -> Outcome {
    let m = ManifoldModel::circle();
    let phi = |x: &[f64]| {
        let mut b = [0.0; 2];
        ManifoldModel::circle().eval_basis(x, &mut b);
        b[1]
    };
    let report = hoeffding_check(&phi, &phi, &m, 4096, 200, derive_seed(&[MASTER_SEED, 8])).unwrap();
    outcome(
        report.violation_rate <= 0.01,
        format!(
            "violation rate {:.3} (≤ 0.01), bound {:.4}, max deviation {:.4}",
            report.violation_rate, report.bound, report.max_deviation
        ),
    )
}

fn determinism(shared: &mut Shared) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (first, _) = shared.reference();
    let a = first.write_outputs(&dir.path().join("a"), &OutputConfig::default()).unwrap();
    let second = match run_convergence_experiment(&reference_config()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("rerun failed: {e}")),
    };
    let b = second.write_outputs(&dir.path().join("b"), &OutputConfig::default()).unwrap();
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    let csv = read(&a.csv) == read(&b.csv);
    let summary = read(&a.summary) == read(&b.summary);
    outcome(csv && summary, format!("csv identical: {csv}, summary identical: {summary}"))
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut shared = Shared { reference: None };
    type Check = fn(&mut Shared) -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("paper-rate reproduction", rate_reproduction),
        ("theoretical-rate consistency", rate_consistency),
        ("eigen-convergence", |_| eigen_convergence()),
        ("oracle equivalence", |_| oracle_equivalence()),
        ("exact-identity end-to-end", |_| identity_end_to_end()),
        ("structural invariants", |_| structural_invariants()),
        ("bound calculators", |_| bound_calculators()),
        ("hoeffding empirical check", |_| hoeffding_empirical()),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !wanted(number) {
            continue;
        }
        let o = check(&mut shared);
        println!(
            "criterion {number} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.pass as usize;
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
