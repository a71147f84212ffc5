#ifndef MSALAB_H
#define MSALAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsalabStatus {
  MSALAB_STATUS_OK = 0,
  MSALAB_STATUS_NULL_POINTER = 1,
  MSALAB_STATUS_INVALID_ARGUMENT = 2,
  MSALAB_STATUS_CONFIG = 3,
  MSALAB_STATUS_PRECONDITION = 4,
  MSALAB_STATUS_BUDGET = 5,
  MSALAB_STATUS_NUMERICAL = 6,
  MSALAB_STATUS_IO = 7,
  MSALAB_STATUS_INVARIANT_FAILED = 8,
  MSALAB_STATUS_PANIC = 9,
} MsalabStatus;

typedef enum MsalabVerdictKind {
  MSALAB_VERDICT_KIND_SUITABLE = 0,
  MSALAB_VERDICT_KIND_SES = 1,
  MSALAB_VERDICT_KIND_REGULAR = 2,
} MsalabVerdictKind;

/**
 * A sampled finite-volume operator.
 */
typedef struct MsalabOperator MsalabOperator;

/**
 * Eigenvalues of an operator, ascending.
 */
typedef struct MsalabSpectrum MsalabSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, or 0 if none.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t msalab_last_error(char *buf, size_t len);

/**
 * Samples disorder with `seed` and assembles the operator on the cube of
 * side `side` centred at `center[0..center_len]`. `params_json` holds the
 * model parameters; fields left out take their defaults.
 *
 * # Safety
 * `params_json` must be a NUL-terminated string, `center` valid for
 * `center_len` doubles, and `out` a valid pointer.
 */
enum MsalabStatus msalab_operator_new(const char *params_json,
                                      const double *center,
                                      size_t center_len,
                                      double side,
                                      uint64_t seed,
                                      struct MsalabOperator **out);

/**
 * # Safety
 * `op` must come from [`msalab_operator_new`] and not be used afterwards.
 */
void msalab_operator_free(struct MsalabOperator *op);

/**
 * Matrix dimension, or 0 for a null handle.
 *
 * # Safety
 * `op` must be a live handle or null.
 */
size_t msalab_operator_dim(const struct MsalabOperator *op);

/**
 * Computes the full spectrum.
 *
 * # Safety
 * `op` must be a live handle and `out` a valid pointer.
 */
enum MsalabStatus msalab_operator_spectrum(const struct MsalabOperator *op,
                                           struct MsalabSpectrum **out);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
size_t msalab_spectrum_len(const struct MsalabSpectrum *s);

/**
 * Borrowed pointer to the eigenvalues, valid until the handle is freed.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
const double *msalab_spectrum_values(const struct MsalabSpectrum *s);

/**
 * # Safety
 * `s` must come from [`msalab_operator_spectrum`] and not be used afterwards.
 */
void msalab_spectrum_free(struct MsalabSpectrum *s);

/**
 * Classifies the box at `energy`. `param` is θ, ζ or m depending on `kind`.
 * Writes 1 or 0 to `outcome` and the log-space margin to `margin`.
 *
 * # Safety
 * `op` must be a live handle; `outcome` and `margin` valid pointers.
 */
enum MsalabStatus msalab_classify(const struct MsalabOperator *op,
                                  enum MsalabVerdictKind kind,
                                  double energy,
                                  double param,
                                  int32_t *outcome,
                                  double *margin);

/**
 * Runs the named experiment from a TOML configuration file, writing its
 * artifacts to the configured output directory. Returns
 * `InvariantFailed` when the run completes but one of its checks fails.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum MsalabStatus msalab_run_experiment(const char *config_path, const char *experiment);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSALAB_H */
