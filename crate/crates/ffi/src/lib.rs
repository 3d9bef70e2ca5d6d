//! C ABI over `converge-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_build`
//! style functions and released with the matching `*_free`. Every fallible
//! call returns a [`ConvergeStatus`]; the message of the most recent failure
//! on the calling thread is available from [`converge_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use converge_core::filters::SpectralFilter;
use converge_core::graph::{
    build_laplacian, calibration_constant, scale_parameter, KernelScheme, LaplacianOperator, SchemeKind,
};
use converge_core::harness::{run_convergence_experiment, ExperimentConfig};
use converge_core::manifolds::{sample_uniform, ManifoldKind, ManifoldModel, PointCloud};
use converge_core::network::filter_apply_discrete;
use converge_core::spectral::{dense_eigenpairs, smallest_eigenpairs, EigenSystem, GnVector, LanczosOptions};
use converge_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConvergenceFailure = 3,
    TooManyFailures = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergeManifold {
    Circle = 0,
    Sphere2 = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergeScheme {
    Heat = 0,
    Gaussian = 1,
}

impl From<ConvergeManifold> for ManifoldKind {
    fn from(m: ConvergeManifold) -> Self {
        match m {
            ConvergeManifold::Circle => ManifoldKind::Circle,
            ConvergeManifold::Sphere2 => ManifoldKind::Sphere2,
        }
    }
}

impl From<ConvergeScheme> for SchemeKind {
    fn from(s: ConvergeScheme) -> Self {
        match s {
            ConvergeScheme::Heat => SchemeKind::Heat,
            ConvergeScheme::Gaussian => SchemeKind::Gaussian,
        }
    }
}

/// Sampled points on a known manifold.
pub struct ConvergePointCloud {
    model: ManifoldModel,
    cloud: PointCloud,
}

/// Graph Laplacian built over a point cloud.
pub struct ConvergeLaplacian(LaplacianOperator);

/// Smallest eigenpairs of a Laplacian; eigenvectors have unit `G_n` norm.
pub struct ConvergeEigenSystem(EigenSystem);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> ConvergeStatus {
    match e {
        Error::InvalidArgument(_) => ConvergeStatus::InvalidArgument,
        Error::ConvergenceFailure { .. } => ConvergeStatus::ConvergenceFailure,
        Error::TooManyFailures { .. } => ConvergeStatus::TooManyFailures,
        Error::Config(_) | Error::Json(_) => ConvergeStatus::Config,
        Error::Io(_) => ConvergeStatus::Io,
    }
}

struct Failure(ConvergeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ConvergeStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ConvergeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConvergeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            ConvergeStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ConvergeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure(
            ConvergeStatus::InvalidArgument,
            format!("buffer holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length plus one. Returns
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn converge_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn converge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Samples `n` uniform points.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_sample(
    manifold: ConvergeManifold,
    n: usize,
    seed: u64,
    out: *mut *mut ConvergePointCloud,
) -> ConvergeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = ManifoldModel::new(manifold.into());
        let cloud = sample_uniform(&model, n, seed)?;
        *out = Box::into_raw(Box::new(ConvergePointCloud { model, cloud }));
        Ok(())
    })
}

/// Wraps caller-provided coordinates (`n` rows of the ambient dimension,
/// row-major). Points must lie on the manifold.
///
/// # Safety
/// `coords` must point to `n · ambient_dim` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_from_coords(
    manifold: ConvergeManifold,
    coords: *const f64,
    n: usize,
    out: *mut *mut ConvergePointCloud,
) -> ConvergeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = ManifoldModel::new(manifold.into());
        let data = slice(coords, n * model.ambient_dim, "coords")?.to_vec();
        let cloud = PointCloud::from_coords(manifold.into(), data)?;
        *out = Box::into_raw(Box::new(ConvergePointCloud { model, cloud }));
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_len(cloud: *const ConvergePointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.cloud.len())
}

/// Ambient dimension, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_dim(cloud: *const ConvergePointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.cloud.dim())
}

/// Copies the row-major coordinates into `out` (`len = n · dim`).
///
/// # Safety
/// `cloud` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_coords(
    cloud: *const ConvergePointCloud,
    out: *mut f64,
    len: usize,
) -> ConvergeStatus {
    guard(|| {
        let c = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        copy_out(c.cloud.coords(), slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn converge_point_cloud_free(cloud: *mut ConvergePointCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Builds the Laplacian with bandwidth `t = c · n^{-2/(d+6)}`. A
/// nonpositive `calibration` selects the closed-form constant.
///
/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn converge_laplacian_build(
    cloud: *const ConvergePointCloud,
    scheme: ConvergeScheme,
    bandwidth_constant: f64,
    calibration: f64,
    out: *mut *mut ConvergeLaplacian,
) -> ConvergeStatus {
    guard(|| {
        let c = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(bandwidth_constant > 0.0) {
            return Err(Failure(
                ConvergeStatus::InvalidArgument,
                "bandwidth constant must be positive".into(),
            ));
        }
        let d = c.model.intrinsic_dim;
        let n = c.cloud.len();
        let calibration = if calibration > 0.0 {
            calibration
        } else {
            calibration_constant(scheme.into(), d, c.model.volume)?
        };
        let t = scale_parameter(n.max(2), d, bandwidth_constant);
        let op = build_laplacian(&c.cloud, KernelScheme::new(scheme.into(), d, t, calibration)?)?;
        *out = Box::into_raw(Box::new(ConvergeLaplacian(op)));
        Ok(())
    })
}

/// Operator size, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn converge_laplacian_len(op: *const ConvergeLaplacian) -> usize {
    op.as_ref().map_or(0, |o| o.0.len())
}

/// `y = L x`, both of length `len`.
///
/// # Safety
/// `op` must be a live handle; `x` and `y` must hold `len` doubles and not
/// overlap.
#[no_mangle]
pub unsafe extern "C" fn converge_laplacian_matvec(
    op: *const ConvergeLaplacian,
    x: *const f64,
    y: *mut f64,
    len: usize,
) -> ConvergeStatus {
    guard(|| {
        let o = op.as_ref().ok_or_else(|| null("op"))?;
        let x = slice(x, len, "x")?;
        let y = slice_mut(y, len, "y")?;
        o.0.matvec_into(x, y)?;
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn converge_laplacian_free(op: *mut ConvergeLaplacian) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// The `k` smallest eigenpairs, by Lanczos or (when `dense` is true) a full
/// dense decomposition.
///
/// # Safety
/// `op` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensolve(
    op: *const ConvergeLaplacian,
    k: usize,
    tol: f64,
    seed: u64,
    dense: bool,
    out: *mut *mut ConvergeEigenSystem,
) -> ConvergeStatus {
    guard(|| {
        let o = op.as_ref().ok_or_else(|| null("op"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sys = if dense {
            dense_eigenpairs(&o.0, k)?
        } else {
            smallest_eigenpairs(&o.0, k, &LanczosOptions::new(tol, seed))?
        };
        *out = Box::into_raw(Box::new(ConvergeEigenSystem(sys)));
        Ok(())
    })
}

/// Number of eigenpairs, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensystem_len(sys: *const ConvergeEigenSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.len())
}

/// Length of each eigenvector, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensystem_dim(sys: *const ConvergeEigenSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.dim())
}

/// Copies the ascending eigenvalues into `out` (`len = k`).
///
/// # Safety
/// `sys` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensystem_values(
    sys: *const ConvergeEigenSystem,
    out: *mut f64,
    len: usize,
) -> ConvergeStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        copy_out(&s.0.eigenvalues, slice_mut(out, len, "out")?)
    })
}

/// Copies eigenvector `index` into `out` (`len = n`).
///
/// # Safety
/// `sys` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensystem_vector(
    sys: *const ConvergeEigenSystem,
    index: usize,
    out: *mut f64,
    len: usize,
) -> ConvergeStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let v = s.0.eigenvectors.get(index).ok_or_else(|| {
            Failure(
                ConvergeStatus::InvalidArgument,
                format!("eigenvector {index} of {}", s.0.len()),
            )
        })?;
        copy_out(v.values(), slice_mut(out, len, "out")?)
    })
}

/// Applies a spectral filter, given as JSON such as
/// `{"family": "exponential", "rate": 1}`, to `x` through the eigenpairs.
///
/// # Safety
/// `sys` must be a live handle; `filter_json` a NUL-terminated string; `x`
/// and `y` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn converge_filter_apply(
    sys: *const ConvergeEigenSystem,
    filter_json: *const c_char,
    x: *const f64,
    y: *mut f64,
    len: usize,
) -> ConvergeStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let h: SpectralFilter = serde_json::from_str(string(filter_json, "filter_json")?)
            .map_err(|e| Failure(ConvergeStatus::Config, e.to_string()))?;
        h.validate()?;
        let x = GnVector::new(slice(x, len, "x")?.to_vec());
        let out = filter_apply_discrete(&h, &s.0, &x)?;
        copy_out(out.values(), slice_mut(y, len, "y")?)
    })
}

/// # Safety
/// `sys` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn converge_eigensystem_free(sys: *mut ConvergeEigenSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Runs the convergence experiment described by `config_json` and writes
/// its CSV, summary and plot files under `out_dir`. When `slope` is not
/// null it receives the fitted log-log slope, or NaN if no fit was made.
///
/// # Safety
/// `config_json` and `out_dir` must be NUL-terminated strings; `slope` must
/// be null or writable.
#[no_mangle]
pub unsafe extern "C" fn converge_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    slope: *mut f64,
) -> ConvergeStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(config_json, "config_json")?)?;
        let dir = string(out_dir, "out_dir")?;
        let res = run_convergence_experiment(&cfg)?;
        res.write_outputs(Path::new(dir), &cfg.output)?;
        if let Some(s) = slope.as_mut() {
            *s = res.fit.map_or(f64::NAN, |f| f.slope);
        }
        Ok(())
    })
}
