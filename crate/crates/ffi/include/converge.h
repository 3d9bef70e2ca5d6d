#ifndef CONVERGE_H
#define CONVERGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConvergeStatus {
  CONVERGE_STATUS_OK = 0,
  CONVERGE_STATUS_NULL_POINTER = 1,
  CONVERGE_STATUS_INVALID_ARGUMENT = 2,
  CONVERGE_STATUS_CONVERGENCE_FAILURE = 3,
  CONVERGE_STATUS_TOO_MANY_FAILURES = 4,
  CONVERGE_STATUS_CONFIG = 5,
  CONVERGE_STATUS_IO = 6,
  CONVERGE_STATUS_PANIC = 7,
} ConvergeStatus;

typedef enum ConvergeManifold {
  CONVERGE_MANIFOLD_CIRCLE = 0,
  CONVERGE_MANIFOLD_SPHERE2 = 1,
} ConvergeManifold;

typedef enum ConvergeScheme {
  CONVERGE_SCHEME_HEAT = 0,
  CONVERGE_SCHEME_GAUSSIAN = 1,
} ConvergeScheme;

// Smallest eigenpairs of a Laplacian; eigenvectors have unit `G_n` norm.
typedef struct ConvergeEigenSystem ConvergeEigenSystem;

// Graph Laplacian built over a point cloud.
typedef struct ConvergeLaplacian ConvergeLaplacian;

// Sampled points on a known manifold.
typedef struct ConvergePointCloud ConvergePointCloud;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`) and returns the full message length plus one. Returns
// 0 when there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t converge_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *converge_version(void);

// Samples `n` uniform points.
//
// # Safety
// `out` must be a valid pointer to write a handle into.
enum ConvergeStatus converge_point_cloud_sample(enum ConvergeManifold manifold,
                                                size_t n,
                                                uint64_t seed,
                                                struct ConvergePointCloud **out);

// Wraps caller-provided coordinates (`n` rows of the ambient dimension,
// row-major). Points must lie on the manifold.
//
// # Safety
// `coords` must point to `n · ambient_dim` readable doubles; `out` must be
// writable.
enum ConvergeStatus converge_point_cloud_from_coords(enum ConvergeManifold manifold,
                                                     const double *coords,
                                                     size_t n,
                                                     struct ConvergePointCloud **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t converge_point_cloud_len(const struct ConvergePointCloud *cloud);

// Ambient dimension, or 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t converge_point_cloud_dim(const struct ConvergePointCloud *cloud);

// Copies the row-major coordinates into `out` (`len = n · dim`).
//
// # Safety
// `cloud` must be a live handle; `out` must hold `len` doubles.
enum ConvergeStatus converge_point_cloud_coords(const struct ConvergePointCloud *cloud,
                                                double *out,
                                                size_t len);

// # Safety
// `cloud` must be null or a handle not yet freed.
void converge_point_cloud_free(struct ConvergePointCloud *cloud);

// Builds the Laplacian with bandwidth `t = c · n^{-2/(d+6)}`. A
// nonpositive `calibration` selects the closed-form constant.
//
// # Safety
// `cloud` must be a live handle; `out` must be writable.
enum ConvergeStatus converge_laplacian_build(const struct ConvergePointCloud *cloud,
                                             enum ConvergeScheme scheme,
                                             double bandwidth_constant,
                                             double calibration,
                                             struct ConvergeLaplacian **out);

// Operator size, or 0 for a null handle.
//
// # Safety
// `op` must be null or a live handle.
size_t converge_laplacian_len(const struct ConvergeLaplacian *op);

// `y = L x`, both of length `len`.
//
// # Safety
// `op` must be a live handle; `x` and `y` must hold `len` doubles and not
// overlap.
enum ConvergeStatus converge_laplacian_matvec(const struct ConvergeLaplacian *op,
                                              const double *x,
                                              double *y,
                                              size_t len);

// # Safety
// `op` must be null or a handle not yet freed.
void converge_laplacian_free(struct ConvergeLaplacian *op);

// The `k` smallest eigenpairs, by Lanczos or (when `dense` is true) a full
// dense decomposition.
//
// # Safety
// `op` must be a live handle; `out` must be writable.
enum ConvergeStatus converge_eigensolve(const struct ConvergeLaplacian *op,
                                        size_t k,
                                        double tol,
                                        uint64_t seed,
                                        bool dense,
                                        struct ConvergeEigenSystem **out);

// Number of eigenpairs, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t converge_eigensystem_len(const struct ConvergeEigenSystem *sys);

// Length of each eigenvector, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t converge_eigensystem_dim(const struct ConvergeEigenSystem *sys);

// Copies the ascending eigenvalues into `out` (`len = k`).
//
// # Safety
// `sys` must be a live handle; `out` must hold `len` doubles.
enum ConvergeStatus converge_eigensystem_values(const struct ConvergeEigenSystem *sys,
                                                double *out,
                                                size_t len);

// Copies eigenvector `index` into `out` (`len = n`).
//
// # Safety
// `sys` must be a live handle; `out` must hold `len` doubles.
enum ConvergeStatus converge_eigensystem_vector(const struct ConvergeEigenSystem *sys,
                                                size_t index,
                                                double *out,
                                                size_t len);

// Applies a spectral filter, given as JSON such as
// `{"family": "exponential", "rate": 1}`, to `x` through the eigenpairs.
//
// # Safety
// `sys` must be a live handle; `filter_json` a NUL-terminated string; `x`
// and `y` must hold `len` doubles.
enum ConvergeStatus converge_filter_apply(const struct ConvergeEigenSystem *sys,
                                          const char *filter_json,
                                          const double *x,
                                          double *y,
                                          size_t len);

// # Safety
// `sys` must be null or a handle not yet freed.
void converge_eigensystem_free(struct ConvergeEigenSystem *sys);

// Runs the convergence experiment described by `config_json` and writes
// its CSV, summary and plot files under `out_dir`. When `slope` is not
// null it receives the fitted log-log slope, or NaN if no fit was made.
//
// # Safety
// `config_json` and `out_dir` must be NUL-terminated strings; `slope` must
// be null or writable.
enum ConvergeStatus converge_run_experiment(const char *config_json,
                                            const char *out_dir,
                                            double *slope);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVERGE_H */
