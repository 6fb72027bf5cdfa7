#ifndef SKETCHGUARD_H
#define SKETCHGUARD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgMapping {
  SG_MAPPING_DEDICATED = 0,
  SG_MAPPING_DISTRIBUTED = 1,
  SG_MAPPING_REPLICATION = 2,
  SG_MAPPING_CLIQUE = 3,
  SG_MAPPING_IMBALANCED_SPACE = 4,
  SG_MAPPING_SWEET_SPOT = 5,
} SgMapping;

typedef enum SgRecoveryStatus {
  SG_RECOVERY_STATUS_EXACT = 0,
  SG_RECOVERY_STATUS_SEMI = 1,
  SG_RECOVERY_STATUS_UNRECOVERABLE = 2,
} SgRecoveryStatus;

typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_ARGUMENT = 2,
  SG_STATUS_OVERFLOW = 3,
  SG_STATUS_MISMATCH = 4,
  SG_STATUS_UNRECOVERABLE = 5,
  SG_STATUS_BUFFER_TOO_SMALL = 6,
  SG_STATUS_DECODE = 7,
  SG_STATUS_INTERNAL = 8,
} SgStatus;

/**
 * Recovery plan over an unpartitioned mapping.
 */
typedef struct SgRecoveryPlan SgRecoveryPlan;

/**
 * A Count-Min Sketch.
 */
typedef struct SgSketch SgSketch;

/**
 * Decoded fixed share header.
 */
typedef struct SgShareHeader {
  uint8_t version;
  uint32_t cycle;
  uint16_t sender;
  /**
   * 0 full, 1 incremental, 2 alive.
   */
  uint8_t policy;
  uint8_t rep;
  uint16_t partition;
  uint32_t count;
} SgShareHeader;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sg_version(void);

/**
 * Copies the calling thread's last error message into `buf`, truncating
 * and always NUL-terminating. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t sg_last_error(char *buf, size_t cap);

/**
 * Sketch sized from accuracy guarantees.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SgStatus sg_sketch_new(double epsilon, double delta, uint64_t seed, struct SgSketch **out);

/**
 * Sketch with explicit dimensions and counter width (1..=64 bits).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SgStatus sg_sketch_new_dims(size_t d,
                                 size_t w,
                                 uint64_t seed,
                                 uint32_t counter_bits,
                                 struct SgSketch **out);

/**
 * # Safety
 * `s` must be null or a handle from this library, freed at most once.
 */
void sg_sketch_free(struct SgSketch *s);

/**
 * Deep copy.
 *
 * # Safety
 * `s` and `out` must be valid pointers.
 */
enum SgStatus sg_sketch_clone(const struct SgSketch *s, struct SgSketch **out);

/**
 * Adds `count` occurrences of the 64-bit identifier `id`.
 *
 * # Safety
 * `s` must be a valid handle.
 */
enum SgStatus sg_sketch_update(struct SgSketch *s, uint64_t id, uint64_t count);

/**
 * Adds `count` occurrences of a big-endian byte identifier.
 *
 * # Safety
 * `s` must be a valid handle and `id` must point to `len` bytes.
 */
enum SgStatus sg_sketch_update_bytes(struct SgSketch *s,
                                     const uint8_t *id,
                                     size_t len,
                                     uint64_t count);

/**
 * Point query; never below the true count.
 *
 * # Safety
 * `s` and `out` must be valid pointers.
 */
enum SgStatus sg_sketch_query(const struct SgSketch *s, uint64_t id, uint64_t *out);

/**
 * # Safety
 * `s` and `out` must be valid pointers and `id` must point to `len` bytes.
 */
enum SgStatus sg_sketch_query_bytes(const struct SgSketch *s,
                                    const uint8_t *id,
                                    size_t len,
                                    uint64_t *out);

/**
 * Adds `src` into `dst` cell by cell; both must share dimensions and seed.
 *
 * # Safety
 * Both must be valid handles.
 */
enum SgStatus sg_sketch_merge(struct SgSketch *dst, const struct SgSketch *src);

/**
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_sketch_dims(const struct SgSketch *s, size_t *d, size_t *w);

/**
 * Total count added so far.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_sketch_total(const struct SgSketch *s, uint64_t *out);

/**
 * Copies the `d * w` counters, row-major, into `buf`.
 *
 * # Safety
 * `buf` must point to `cap` writable `u64`s.
 */
enum SgStatus sg_sketch_counters(const struct SgSketch *s, uint64_t *buf, size_t cap);

/**
 * Writes the `f x k` redundant matrix row-major into `out`.
 *
 * # Safety
 * `out` must point to `cap` writable `i64`s.
 */
enum SgStatus sg_mr_generate(size_t k, size_t f, int64_t *out, size_t cap);

/**
 * Writes the `k x k` Pascal matrix row-major into `out`.
 *
 * # Safety
 * `out` must point to `cap` writable `i64`s.
 */
enum SgStatus sg_pascal_generate(size_t k, int64_t *out, size_t cap);

/**
 * Whether every `f`-column subset of the `rows x cols` matrix is
 * non-singular. Sets `*out` to 1 or 0.
 *
 * # Safety
 * `m` must point to `rows * cols` `i64`s.
 */
enum SgStatus sg_spans_check(const int64_t *m, size_t rows, size_t cols, size_t f, uint8_t *out);

/**
 * Plans recovery of the `n` failed node ids in `failed` (0-based; ids
 * `>= k` are dedicated redundant nodes). Only mappings over a single
 * partition are supported.
 *
 * # Safety
 * `failed` must point to `n` ids and `out` must be valid.
 */
enum SgStatus sg_plan_new(enum SgMapping mapping,
                          size_t k,
                          size_t f,
                          const size_t *failed,
                          size_t n,
                          struct SgRecoveryPlan **out);

/**
 * # Safety
 * `p` must be null or a handle from this library, freed at most once.
 */
void sg_plan_free(struct SgRecoveryPlan *p);

/**
 * Worst status over all failed data nodes.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_plan_status(const struct SgRecoveryPlan *p, enum SgRecoveryStatus *out);

/**
 * Status of data node `j`; `InvalidArgument` when `j` did not fail.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_plan_node_status(const struct SgRecoveryPlan *p,
                                  size_t j,
                                  enum SgRecoveryStatus *out);

/**
 * Number of redundant vectors of the plan's mapping.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_plan_vector_count(const struct SgRecoveryPlan *p, size_t *out);

/**
 * Writes the exact equation for data node `j` (e.g. `D5 = -R4 + R5`) as a
 * NUL-terminated string. `*needed` receives the length without the NUL.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes; `needed` must be valid.
 */
enum SgStatus sg_plan_equation(const struct SgRecoveryPlan *p,
                               size_t j,
                               char *buf,
                               size_t cap,
                               size_t *needed);

/**
 * Sum-sketch of redundant vector `v` built from all `k` data sketches.
 *
 * # Safety
 * `data` must point to `k` valid handles; `out` must be valid.
 */
enum SgStatus sg_plan_sum(const struct SgRecoveryPlan *p,
                          const struct SgSketch *const *data,
                          size_t v,
                          struct SgSketch **out);

/**
 * Recovers data node `j` from surviving sketches.
 *
 * `data` holds `k` handles and `sums` one per vector; entries of failed
 * nodes may be null. The result has the layout of the first non-null data
 * sketch, or of the first sum-sketch with 32-bit counters.
 *
 * # Safety
 * `data` must point to `k` and `sums` to `vector_count` handle slots.
 */
enum SgStatus sg_plan_recover(const struct SgRecoveryPlan *p,
                              const struct SgSketch *const *data,
                              const struct SgSketch *const *sums,
                              size_t j,
                              struct SgSketch **out);

/**
 * Decodes the fixed header of an encoded share.
 *
 * # Safety
 * `buf` must point to `len` bytes and `out` must be valid.
 */
enum SgStatus sg_share_header_decode(const uint8_t *buf, size_t len, struct SgShareHeader *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SKETCHGUARD_H */
