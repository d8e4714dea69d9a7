#ifndef CORONA_LAB_H
#define CORONA_LAB_H

#include <stdint.h>
#include <stddef.h>

/**
 * Result code of every fallible call.
 */
typedef enum CoronaLabStatus {
  CORONA_LAB_STATUS_OK = 0,
  CORONA_LAB_STATUS_NULL_POINTER = 1,
  CORONA_LAB_STATUS_INVALID_ARGUMENT = 2,
  CORONA_LAB_STATUS_PARSE = 3,
  CORONA_LAB_STATUS_COMMON_ATOM = 4,
  CORONA_LAB_STATUS_NOT_CONVERGED = 5,
  CORONA_LAB_STATUS_INTERNAL = 6,
} CoronaLabStatus;

/**
 * Opaque measure handle.
 */
typedef struct CoronaLabMeasure CoronaLabMeasure;

/**
 * Constants of a pair. Infinite values are reported as IEEE infinity.
 */
typedef struct CoronaLabConstants {
  double opnorm;
  double cchi_forward;
  double cchi_backward;
  double cm_forward;
  double cm_backward;
  double q;
  double pq;
  double pivotal_forward;
  double pivotal_backward;
  /**
   * 1 when the operator-norm iteration converged.
   */
  uint8_t converged;
} CoronaLabConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *corona_lab_version(void);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *corona_lab_last_error(void);

/**
 * Builds a measure from `len` positions and weights.
 *
 * # Safety
 * `positions` and `weights` must point to `len` readable doubles; `out` must
 * be writable.
 */
enum CoronaLabStatus corona_lab_measure_new(const double *positions,
                                            const double *weights,
                                            size_t len,
                                            struct CoronaLabMeasure **out);

/**
 * Parses a measure file (`{"label": .., "atoms": [{"x": .., "w": ..}]}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CoronaLabStatus corona_lab_measure_from_json(const char *json, struct CoronaLabMeasure **out);

/**
 * Releases a measure. Null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void corona_lab_measure_free(struct CoronaLabMeasure *m);

/**
 * Number of distinct atoms and total mass.
 *
 * # Safety
 * `m` must be a live handle; `len` and `mass` must be writable or null.
 */
enum CoronaLabStatus corona_lab_measure_info(const struct CoronaLabMeasure *m,
                                             size_t *len,
                                             double *mass);

/**
 * Constants of `(mu, nu)` at the given lattice depth on the unshifted
 * lattice pair. Returns `NotConverged` (with `out` filled) when the
 * operator-norm iteration hit its cap.
 *
 * # Safety
 * `mu`, `nu` must be live handles; `out` must be writable.
 */
enum CoronaLabStatus corona_lab_constants(const struct CoronaLabMeasure *mu,
                                          const struct CoronaLabMeasure *nu,
                                          uint32_t depth,
                                          struct CoronaLabConstants *out);

/**
 * Explorer score of a disjointly supported pair.
 *
 * # Safety
 * `mu`, `nu` must be live handles; `out` must be writable.
 */
enum CoronaLabStatus corona_lab_score(const struct CoronaLabMeasure *mu,
                                      const struct CoronaLabMeasure *nu,
                                      uint32_t depth,
                                      double *out);

/**
 * Full verification report as JSON. `samples` sets the ensemble size of the
 * lemma checks. The string must be released with `corona_lab_string_free`.
 *
 * # Safety
 * `mu`, `nu` must be live handles; `out_json` must be writable.
 */
enum CoronaLabStatus corona_lab_verify_json(const struct CoronaLabMeasure *mu,
                                            const struct CoronaLabMeasure *nu,
                                            uint32_t depth,
                                            size_t samples,
                                            uint64_t seed,
                                            char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void corona_lab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORONA_LAB_H */
