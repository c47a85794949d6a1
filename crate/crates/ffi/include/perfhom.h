#ifndef PERFHOM_H
#define PERFHOM_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum PerfhomStatus {
  PERFHOM_STATUS_OK = 0,
  PERFHOM_STATUS_NULL_POINTER = 1,
  PERFHOM_STATUS_INVALID_ARGUMENT = 2,
  PERFHOM_STATUS_GEOMETRY = 3,
  PERFHOM_STATUS_MESH = 4,
  PERFHOM_STATUS_RESOLUTION_GATE = 5,
  PERFHOM_STATUS_COEFFICIENT = 6,
  PERFHOM_STATUS_SINGULAR = 7,
  PERFHOM_STATUS_NOT_CONVERGED = 8,
  PERFHOM_STATUS_CONFIG = 9,
  PERFHOM_STATUS_STUDY_FAILED = 10,
  PERFHOM_STATUS_IO = 11,
  PERFHOM_STATUS_PANIC = 12,
  PERFHOM_STATUS_OTHER = 13,
} PerfhomStatus;

// Opaque parsed study configuration.
typedef struct PerfhomConfig PerfhomConfig;

// Opaque cell-problem solution: correctors, `Â`, `θ` and diagnostics.
typedef struct PerfhomCorrectorSet PerfhomCorrectorSet;

// Residual checks of a cell solve.
typedef struct PerfhomCellDiagnostics {
  double chi_residual;
  double chi_mean;
  double b_mean;
  double flux_weak_residual;
  double flux_dual_residual;
  double psi_mean;
} PerfhomCellDiagnostics;

// Error functionals of one `ε`.
typedef struct PerfhomErrorReport {
  double epsilon;
  double h;
  double h1_w;
  double l2_err;
  double lp_err_tau;
  double l4_err;
  double sqfn;
  double normalizer_g;
} PerfhomErrorReport;

// Outcome of a study run.
typedef struct PerfhomRunOutcome {
  // The CLI exit code: 0 all gates pass, 1 a gate fails, 3 a study failed.
  int32_t exit_code;
  size_t gates;
  size_t failed_gates;
  size_t gaps;
} PerfhomRunOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *perfhom_version(void);

// Copies the last error message of this thread into `buf`, truncated and
// NUL-terminated. Returns the full message length without the NUL, or 0
// when the last call succeeded.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t perfhom_last_error_message(char *buf, size_t len);

// Solves the cell problems for disk holes of radius `hole_radius` (0 for
// no holes), Lamé constants `lambda`, `mu` and cell mesh size `h`.
//
// # Safety
// `out` must be null or valid for writing one pointer.
enum PerfhomStatus perfhom_corrector_set_build(double hole_radius,
                                               double lambda,
                                               double mu,
                                               double h,
                                               struct PerfhomCorrectorSet **out);

// Releases a corrector set; null is ignored.
//
// # Safety
// `set` must be null or a handle from [`perfhom_corrector_set_build`] not
// yet freed.
void perfhom_corrector_set_free(struct PerfhomCorrectorSet *set);

// Writes the 16 entries of `Â`, index `((i*2+j)*2+α)*2+β`, to `out`.
//
// # Safety
// `set` must be a live handle and `out` valid for 16 doubles.
enum PerfhomStatus perfhom_corrector_set_effective_tensor(const struct PerfhomCorrectorSet *set,
                                                          double *out);

// Material area fraction `θ` of the cell.
//
// # Safety
// `set` must be a live handle and `out` valid for one double.
enum PerfhomStatus perfhom_corrector_set_theta(const struct PerfhomCorrectorSet *set, double *out);

// # Safety
// `set` must be a live handle and `out` valid for one struct.
enum PerfhomStatus perfhom_corrector_set_diagnostics(const struct PerfhomCorrectorSet *set,
                                                     struct PerfhomCellDiagnostics *out);

// Solves the `ε = 1/n` problem with boundary data only at `h = ε/h_per_eps`
// and reports the error functionals. The set's cell mesh size must be
// `1/h_per_eps`.
//
// # Safety
// `set` must be a live handle and `out` valid for one struct.
enum PerfhomStatus perfhom_error_report(const struct PerfhomCorrectorSet *set,
                                        size_t n,
                                        size_t h_per_eps,
                                        double tau,
                                        struct PerfhomErrorReport *out);

// Parses and validates a TOML study configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` valid for one pointer.
enum PerfhomStatus perfhom_config_parse(const char *toml, struct PerfhomConfig **out);

// # Safety
// `cfg` must be null or a handle from [`perfhom_config_parse`] not yet freed.
void perfhom_config_free(struct PerfhomConfig *cfg);

// Runs the configured studies, writing reports to `out_dir` and using
// `cache_dir` for cell solves. Null directories keep the configured ones.
//
// # Safety
// `cfg` must be a live handle, the directories null or NUL-terminated and
// `out` valid for one struct.
enum PerfhomStatus perfhom_run(const struct PerfhomConfig *cfg,
                               const char *out_dir,
                               const char *cache_dir,
                               struct PerfhomRunOutcome *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERFHOM_H */
