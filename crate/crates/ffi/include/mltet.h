#ifndef MLTET_H
#define MLTET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum MltetStatus {
  MLTET_STATUS_OK = 0,
  MLTET_STATUS_NULL_POINTER = 1,
  MLTET_STATUS_INVALID_ARGUMENT = 2,
  MLTET_STATUS_IO = 3,
  MLTET_STATUS_MISSING_DATA = 4,
  MLTET_STATUS_NUMERICAL = 5,
  MLTET_STATUS_BUFFER_TOO_SMALL = 6,
  MLTET_STATUS_PANIC = 7,
} MltetStatus;

/*
 How element stiffness matrices are evaluated; passed as `int32_t`.
 */
typedef enum MltetMode {
  MLTET_MODE_EXACT = 0,
  MLTET_MODE_RULE = 1,
} MltetMode;

/*
 A reference element with its kernel tables.
 */
typedef struct MltetElement MltetElement;

/*
 A symmetric quadrature rule.
 */
typedef struct MltetRule MltetRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mltet_version(void);

/*
 Message of the last failed call on this thread (empty after success).
 Valid until the next call into the library from the same thread.
 */
const char *mltet_last_error(void);

/*
 Builds element `id` (e.g. `"p2n15"`) with its paired stiffness rule.

 # Safety
 `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MltetStatus mltet_element_new(const char *id, struct MltetElement **out);

/*
 Builds element `id` with the given stiffness rule.

 # Safety
 `id` must be a NUL-terminated string, `rule` a live handle and `out` valid.
 */
enum MltetStatus mltet_element_with_rule(const char *id,
                                         const struct MltetRule *rule,
                                         struct MltetElement **out);

/*
 # Safety
 `el` must be null or a handle from this library, not used afterwards.
 */
void mltet_element_free(struct MltetElement *el);

/*
 Number of nodes, or 0 for a null handle.

 # Safety
 `el` must be null or a live handle.
 */
uintptr_t mltet_element_node_count(const struct MltetElement *el);

/*
 Number of stiffness quadrature points, or 0 for a null handle.

 # Safety
 `el` must be null or a live handle.
 */
uintptr_t mltet_element_quad_count(const struct MltetElement *el);

/*
 Copies the reference mass weights into `out[0..len]`.

 # Safety
 `el` must be a live handle and `out` valid for `len` doubles.
 */
enum MltetStatus mltet_element_mass_weights(const struct MltetElement *el,
                                            double *out,
                                            uintptr_t len);

/*
 `out = A u` for the element with vertices `vertices` (4 x 3, row major)
 and constant scalar coefficient `c`.

 # Safety
 `el` must be a live handle, `vertices` valid for 12 doubles, `u` and
 `out` valid for `node_count` doubles.
 */
enum MltetStatus mltet_element_matvec_scalar(const struct MltetElement *el,
                                             const double *vertices,
                                             double c,
                                             int32_t mode,
                                             const double *u,
                                             double *out);

/*
 Largest stable step of the order-`2k` scheme on the periodic honeycomb.

 # Safety
 `el` must be a live handle and `out` valid.
 */
enum MltetStatus mltet_element_dt_max(const struct MltetElement *el,
                                      int32_t mode,
                                      uint32_t k,
                                      double *out);

/*
 Built-in stiffness rule paired with element `id`.

 # Safety
 `id` must be a NUL-terminated string and `out` valid.
 */
enum MltetStatus mltet_rule_builtin(const char *id, struct MltetRule **out);

/*
 Reads a rule file (JSON).

 # Safety
 `path` must be a NUL-terminated string and `out` valid.
 */
enum MltetStatus mltet_rule_load(const char *path, struct MltetRule **out);

/*
 # Safety
 `rule` must be null or a handle from this library, not used afterwards.
 */
void mltet_rule_free(struct MltetRule *rule);

/*
 Number of points, or 0 for a null handle.

 # Safety
 `rule` must be null or a live handle.
 */
uintptr_t mltet_rule_point_count(const struct MltetRule *rule);

/*
 Expanded points (`xyz`, 3 per point) and weights (`w`); `len` is the
 capacity in points.

 # Safety
 `rule` must be a live handle, `xyz` valid for `3 * len` and `w` for `len`
 doubles.
 */
enum MltetStatus mltet_rule_points(const struct MltetRule *rule,
                                   double *xyz,
                                   double *w,
                                   uintptr_t len);

/*
 Checks positivity, exactness and the spurious-mode conditions of `rule`
 for element `id`; `passed` receives 1 or 0.

 # Safety
 `id` must be a NUL-terminated string, `rule` a live handle, `passed` valid.
 */
enum MltetStatus mltet_rule_verify(const char *id, const struct MltetRule *rule, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLTET_H */
