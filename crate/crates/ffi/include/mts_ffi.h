#ifndef MTS_FFI_H
#define MTS_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MtsStatus {
  MtsStatus_Ok = 0,
  MtsStatus_NullPointer = 1,
  MtsStatus_InvalidConfig = 2,
  MtsStatus_IncompatibleSketches = 3,
  MtsStatus_EmptySketch = 4,
  MtsStatus_SampleTooSparse = 5,
  MtsStatus_ExpressionSampleEmpty = 6,
  MtsStatus_CorruptSketch = 7,
  MtsStatus_InvalidExpression = 8,
  MtsStatus_InvalidArgument = 9,
} MtsStatus;

/**
 * Opaque sketch handle.
 */
typedef struct MtsSketchHandle MtsSketchHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *mts_status_message(enum MtsStatus status);

/**
 * Creates a sketch. `buckets >= 16`, `subsample_capacity >= 8`; sketches
 * that will be merged or compared must share both seeds.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MtsStatus mts_sketch_new(uint32_t buckets,
                              uint32_t subsample_capacity,
                              uint64_t value_seed,
                              uint64_t bucket_seed,
                              struct MtsSketchHandle **out);

/**
 * Releases a handle returned by this library. A null pointer is a no-op.
 *
 * # Safety
 * `handle` must have been produced by this library and not freed before.
 */
void mts_sketch_free(struct MtsSketchHandle *handle);

/**
 * Inserts one element occurrence.
 *
 * # Safety
 * `handle` must be a live handle with no concurrent use.
 */
enum MtsStatus mts_sketch_insert(struct MtsSketchHandle *handle, uint64_t element);

/**
 * Inserts an occurrence keyed by a byte string, canonicalized through the
 * seeded ingestion hash.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `handle` as in
 * [`mts_sketch_insert`].
 */
enum MtsStatus mts_sketch_insert_bytes(struct MtsSketchHandle *handle,
                                       const uint8_t *bytes,
                                       uintptr_t len);

/**
 * Number of insertions the sketch has absorbed.
 *
 * # Safety
 * `handle` live; `out` valid.
 */
enum MtsStatus mts_sketch_occurrences(const struct MtsSketchHandle *handle, uint64_t *out);

/**
 * Merges two sketches into a new handle equal to the sketch of the
 * concatenated streams.
 *
 * # Safety
 * `a`, `b` live handles; `out` valid.
 */
enum MtsStatus mts_sketch_merge(const struct MtsSketchHandle *a,
                                const struct MtsSketchHandle *b,
                                struct MtsSketchHandle **out);

/**
 * Serializes a sketch to the `MTS1` byte format. The buffer is allocated
 * by this library and must be released with [`mts_bytes_free`].
 *
 * # Safety
 * `handle` live; `out_ptr` and `out_len` valid.
 */
enum MtsStatus mts_sketch_serialize(const struct MtsSketchHandle *handle,
                                    uint8_t **out_ptr,
                                    uintptr_t *out_len);

/**
 * Releases a buffer returned by [`mts_sketch_serialize`].
 *
 * # Safety
 * `(ptr, len)` must come from `mts_sketch_serialize` and not be freed twice.
 */
void mts_bytes_free(uint8_t *ptr, uintptr_t len);

/**
 * Restores a sketch from `MTS1` bytes.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` valid.
 */
enum MtsStatus mts_sketch_deserialize(const uint8_t *bytes,
                                      uintptr_t len,
                                      struct MtsSketchHandle **out);

/**
 * Full-stream cardinality of the stream behind one sketch.
 *
 * # Safety
 * `handle` live; `out` valid.
 */
enum MtsStatus mts_estimate_single(const struct MtsSketchHandle *handle, double *out);

/**
 * Cardinality of the union of the two streams.
 *
 * # Safety
 * `a`, `b` live handles; `out` valid.
 */
enum MtsStatus mts_estimate_union(const struct MtsSketchHandle *a,
                                  const struct MtsSketchHandle *b,
                                  double *out);

/**
 * Cardinality of the intersection of the two streams.
 *
 * # Safety
 * `a`, `b` live handles; `out` valid.
 */
enum MtsStatus mts_estimate_intersection(const struct MtsSketchHandle *a,
                                         const struct MtsSketchHandle *b,
                                         double *out);

/**
 * Cardinality of the set difference `A \ B`.
 *
 * # Safety
 * `a`, `b` live handles; `out` valid.
 */
enum MtsStatus mts_estimate_difference(const struct MtsSketchHandle *a,
                                       const struct MtsSketchHandle *b,
                                       double *out);

/**
 * Jaccard similarity of the two streams (unclamped).
 *
 * # Safety
 * `a`, `b` live handles; `out` valid.
 */
enum MtsStatus mts_estimate_jaccard(const struct MtsSketchHandle *a,
                                    const struct MtsSketchHandle *b,
                                    double *out);

/**
 * Cardinality of an arbitrary set expression over `count` sketches. The
 * expression uses `|`, `&`, `-` and parentheses; identifiers bind to the
 * handles in first-appearance order. An empty expression subsample yields
 * `ExpressionSampleEmpty` (the estimate would be indistinguishable from
 * zero).
 *
 * # Safety
 * `handles` must point to `count` live handle pointers; `expression` must
 * be a NUL-terminated string; `out` valid.
 */
enum MtsStatus mts_estimate_expression(const struct MtsSketchHandle *const *handles,
                                       uintptr_t count,
                                       const char *expression,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTS_FFI_H */
