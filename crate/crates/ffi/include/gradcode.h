#ifndef GRADCODE_H
#define GRADCODE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_POINTER = 1,
  GC_STATUS_INVALID_UTF8 = 2,
  GC_STATUS_CONFIG = 3,
  GC_STATUS_INFEASIBLE = 4,
  GC_STATUS_CAP_EXCEEDED = 5,
  GC_STATUS_NUMERICAL = 6,
  GC_STATUS_OUT_OF_RANGE = 7,
  GC_STATUS_BUFFER_TOO_SMALL = 8,
  GC_STATUS_INTERNAL = 9,
  GC_STATUS_PANIC = 10,
} GcStatus;

// Opaque encoding matrix.
typedef struct GcMatrix GcMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gc_version(void);

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *gc_last_error_message(void);

// Builds a matrix from descriptor JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum GcStatus gc_matrix_from_descriptor(const char *json, struct GcMatrix **out);

// Builds the fractional repetition code `FRC(n, k, l, r)`.
//
// # Safety
// `out` must be a valid pointer.
enum GcStatus gc_matrix_frc(size_t n, size_t k, size_t l, size_t r, struct GcMatrix **out);

// Builds a catalog BIBD code by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum GcStatus gc_matrix_catalog(const char *name, struct GcMatrix **out);

// Kronecker product `a ⊗ b`.
//
// # Safety
// `a` and `b` must be live handles and `out` a valid pointer.
enum GcStatus gc_matrix_kronecker(const struct GcMatrix *a,
                                  const struct GcMatrix *b,
                                  struct GcMatrix **out);

// Releases a handle. NULL is ignored.
//
// # Safety
// `m` must be NULL or a handle not yet freed.
void gc_matrix_free(struct GcMatrix *m);

// Writes the number of rows `k` and columns `n`.
//
// # Safety
// `m` must be a live handle; `k` and `n` valid pointers.
enum GcStatus gc_matrix_dims(const struct GcMatrix *m, size_t *k, size_t *n);

// Writes entry `(i, j)` as 0 or 1.
//
// # Safety
// `m` must be a live handle and `out` a valid pointer.
enum GcStatus gc_matrix_get(const struct GcMatrix *m, size_t i, size_t j, uint8_t *out);

// Normalized error of the best decoding from the given surviving workers.
//
// # Safety
// `m` must be a live handle, `survivors` must point to `len` indices (or
// be NULL with `len == 0`) and `out` a valid pointer.
enum GcStatus gc_optimal_error(const struct GcMatrix *m,
                               const size_t *survivors,
                               size_t len,
                               double *out);

// Exhaustive worst case over all `s`-straggler sets, visiting at most `cap`
// sets. Writes the normalized error and the `s` straggler indices of the
// lexicographically smallest worst set into `witness` (capacity
// `witness_cap`, may be NULL when `s == 0`).
//
// # Safety
// `m` must be a live handle, `error` a valid pointer and `witness` valid
// for `witness_cap` writes.
enum GcStatus gc_worst_case_exhaustive(const struct GcMatrix *m,
                                       size_t s,
                                       uint64_t cap,
                                       double *error,
                                       size_t *witness,
                                       size_t witness_cap);

// FRC error `(l/k) floor(s/r)` for real `s`.
//
// # Safety
// `out` must be a valid pointer.
enum GcStatus gc_frc_error(size_t l, size_t k, size_t r, double s, double *out);

// Worst-case error of a lambda-uniform code.
//
// # Safety
// `out` must be a valid pointer.
enum GcStatus gc_bibd_error(size_t n, size_t k, size_t l, size_t lambda, size_t s, double *out);

// Upper bound for the product of two lambda-uniform codes, each given as
// `(n, k, l, lambda)` with `r = l n / k`.
//
// # Safety
// `out` must be a valid pointer.
enum GcStatus gc_kron_bibd_bound(size_t n1,
                                 size_t k1,
                                 size_t l1,
                                 size_t lambda1,
                                 size_t n2,
                                 size_t k2,
                                 size_t l2,
                                 size_t lambda2,
                                 size_t s,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADCODE_H */
