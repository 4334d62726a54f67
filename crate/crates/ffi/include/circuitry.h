#ifndef CIRCUITRY_H
#define CIRCUITRY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CircuitryStatus {
  /*
   Success; for searches, a circuit was found.
   */
  CIRCUITRY_STATUS_OK = 0,
  /*
   The search finished without a circuit. The result handle is still set.
   */
  CIRCUITRY_STATUS_NOT_FOUND = 1,
  CIRCUITRY_STATUS_NULL_POINTER = 2,
  CIRCUITRY_STATUS_INVALID_INPUT = 3,
  CIRCUITRY_STATUS_INFEASIBLE = 4,
  CIRCUITRY_STATUS_NUMERICAL = 5,
  CIRCUITRY_STATUS_NO_SPECTRAL_SPLIT = 6,
  CIRCUITRY_STATUS_PARSE = 7,
  CIRCUITRY_STATUS_IO = 8,
  CIRCUITRY_STATUS_PANIC = 9,
} CircuitryStatus;

/*
 Dense real matrix.
 */
typedef struct CircuitryMatrix CircuitryMatrix;

/*
 Outcome of a search.
 */
typedef struct CircuitryResult CircuitryResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Builds a `rows x cols` matrix from `rows * cols` row-major values.

 # Safety
 `data` must point to `rows * cols` readable doubles; `out` must be
 writable.
 */
enum CircuitryStatus circuitry_matrix_new(uintptr_t rows,
                                          uintptr_t cols,
                                          const double *data,
                                          struct CircuitryMatrix **out);

/*
 Loads a Matrix Market (`.mtx`) or headerless CSV file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CircuitryStatus circuitry_matrix_load(const char *path, struct CircuitryMatrix **out);

/*
 # Safety
 `m` must be NULL or a handle from this library, not yet freed.
 */
void circuitry_matrix_free(struct CircuitryMatrix *m);

/*
 # Safety
 `m` must be a live matrix handle.
 */
uintptr_t circuitry_matrix_rows(const struct CircuitryMatrix *m);

/*
 # Safety
 `m` must be a live matrix handle.
 */
uintptr_t circuitry_matrix_cols(const struct CircuitryMatrix *m);

/*
 Randomized search for a circuit of size at most `max_size`, stopping
 once the miss probability is at most `epsilon`. Returns `Ok` or
 `NotFound` with `*out` set.

 # Safety
 `m` must be a live matrix handle; `out` must be writable.
 */
enum CircuitryStatus circuitry_find(const struct CircuitryMatrix *m,
                                    uintptr_t max_size,
                                    double epsilon,
                                    uint64_t seed,
                                    struct CircuitryResult **out);

/*
 Exhaustive search: `Ok` with a circuit of size at most `max_size`, or
 `NotFound` when none exists.

 # Safety
 `m` must be a live matrix handle; `out` must be writable.
 */
enum CircuitryStatus circuitry_exclude(const struct CircuitryMatrix *m,
                                       uintptr_t max_size,
                                       uint64_t seed,
                                       struct CircuitryResult **out);

/*
 Randomized search for an `epsilon`-near circuit of size at most
 `max_size`, stopping once the miss probability is at most `delta`.

 # Safety
 `m` must be a live matrix handle; `out` must be writable.
 */
enum CircuitryStatus circuitry_near_search(const struct CircuitryMatrix *m,
                                           uintptr_t max_size,
                                           double epsilon,
                                           double delta,
                                           uint64_t seed,
                                           struct CircuitryResult **out);

/*
 # Safety
 `r` must be a live result handle.
 */
bool circuitry_result_found(const struct CircuitryResult *r);

/*
 Number of columns in the circuit (0 when none was found).

 # Safety
 `r` must be a live result handle.
 */
uintptr_t circuitry_result_size(const struct CircuitryResult *r);

/*
 Copies up to `cap` zero-based indices into `buf`; returns the full count.

 # Safety
 `r` must be a live result handle; `buf` must hold `cap` writable values.
 */
uintptr_t circuitry_result_indices(const struct CircuitryResult *r, uintptr_t *buf, uintptr_t cap);

/*
 Copies up to `cap` witness entries (one per matrix column) into `buf`;
 returns the full length.

 # Safety
 `r` must be a live result handle; `buf` must hold `cap` writable values.
 */
uintptr_t circuitry_result_witness(const struct CircuitryResult *r, double *buf, uintptr_t cap);

/*
 # Safety
 `r` must be a live result handle.
 */
double circuitry_result_residual_p(const struct CircuitryResult *r);

/*
 # Safety
 `r` must be a live result handle.
 */
uint64_t circuitry_result_trials(const struct CircuitryResult *r);

/*
 # Safety
 `r` must be a live result handle.
 */
uint64_t circuitry_result_nullspace_evals(const struct CircuitryResult *r);

/*
 # Safety
 `r` must be NULL or a handle from this library, not yet freed.
 */
void circuitry_result_free(struct CircuitryResult *r);

/*
 Single-trial chance of drawing a fixed size-`n` circuit among `cols`
 columns of rank `rank`.

 # Safety
 `out` must be writable.
 */
enum CircuitryStatus circuitry_detection_probability(uintptr_t cols,
                                                     uintptr_t rank,
                                                     uintptr_t n,
                                                     double *out);

/*
 Trials after which a size-`n` circuit escapes with probability at most
 `epsilon` at rank ratio `rho`.

 # Safety
 `out` must be writable.
 */
enum CircuitryStatus circuitry_required_trials(double epsilon,
                                               double rho,
                                               uintptr_t n,
                                               uint64_t *out);

/*
 Message for the last failed call on this thread, or NULL. Valid until
 the next call into this library on the same thread.
 */
const char *circuitry_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIRCUITRY_H */
