#ifndef CANOPY_H
#define CANOPY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CanopyStatus {
  CANOPY_STATUS_OK = 0,
  CANOPY_STATUS_INVALID_ARGUMENT = 1,
  CANOPY_STATUS_NULL_POINTER = 2,
  CANOPY_STATUS_IO = 3,
  CANOPY_STATUS_PARSE = 4,
  CANOPY_STATUS_FORMAT = 5,
  CANOPY_STATUS_UNSUPPORTED = 6,
  CANOPY_STATUS_INTERNAL = 7,
} CanopyStatus;

/**
 * Point cloud handle.
 */
typedef struct CanopyCloud CanopyCloud;

/**
 * Sparse voxel grid handle.
 */
typedef struct CanopyGrid CanopyGrid;

/**
 * Detected trees handle.
 */
typedef struct CanopyTrees CanopyTrees;

/**
 * Pipeline settings; start from [`canopy_detect_params_default`].
 */
typedef struct CanopyDetectParams {
  double pmf_cell_size;
  double pmf_max_window;
  double pmf_max_distance;
  double pmf_initial_distance;
  double pmf_slope;
  uint32_t sor_k;
  double sor_sigma_mult;
  /**
   * Voxel edge in metres; the grid covers the cloud.
   */
  double grid_resolution;
  uint32_t ret_thresh;
  uint32_t comp_threshold;
  double aspect_limit;
  /**
   * 6, 18 or 26.
   */
  uint32_t connectivity;
} CanopyDetectParams;

/**
 * One detected tree: stem position, trunk box and voxel count.
 */
typedef struct CanopyTree {
  double stem_x;
  double stem_y;
  double min_x;
  double min_y;
  double min_z;
  double max_x;
  double max_y;
  double max_z;
  size_t size;
} CanopyTree;

typedef struct CanopyReport {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  double precision;
  double recall;
  double f_score;
} CanopyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *canopy_last_error_message(void);

/**
 * Reads a `.las` file or a whitespace-separated text cloud.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CanopyStatus canopy_cloud_read(const char *path, struct CanopyCloud **out);

/**
 * Builds a cloud from `n` interleaved xyz triples. `number_of_returns` may
 * be null (every point then has a single return).
 *
 * # Safety
 * `xyz` must hold `3 * n` values and `number_of_returns`, when not null,
 * `n` values.
 */
enum CanopyStatus canopy_cloud_from_xyz(const double *xyz,
                                        const uint8_t *number_of_returns,
                                        size_t n,
                                        struct CanopyCloud **out);

/**
 * # Safety
 * `cloud` must be a live handle or null.
 */
size_t canopy_cloud_len(const struct CanopyCloud *cloud);

/**
 * # Safety
 * `cloud` must come from this library and not be used afterwards.
 */
void canopy_cloud_free(struct CanopyCloud *cloud);

struct CanopyDetectParams canopy_detect_params_default(void);

/**
 * # Safety
 * `cloud` must be a live handle, `params` null (defaults) or valid, and
 * `out` a valid pointer.
 */
enum CanopyStatus canopy_detect_trees(const struct CanopyCloud *cloud,
                                      const struct CanopyDetectParams *params,
                                      struct CanopyTrees **out);

/**
 * # Safety
 * `trees` must be a live handle or null.
 */
size_t canopy_trees_len(const struct CanopyTrees *trees);

/**
 * # Safety
 * `trees` must be a live handle and `out` a valid pointer.
 */
enum CanopyStatus canopy_trees_get(const struct CanopyTrees *trees,
                                   size_t index,
                                   struct CanopyTree *out);

/**
 * # Safety
 * `trees` must come from this library and not be used afterwards.
 */
void canopy_trees_free(struct CanopyTrees *trees);

/**
 * Voxelizes `cloud` into a grid with minimum corner `origin[3]`, edge
 * `resolution` and `dims[3]` voxels per axis.
 *
 * # Safety
 * `origin` and `dims` must each hold three values; `out` must be valid.
 */
enum CanopyStatus canopy_voxelize(const struct CanopyCloud *cloud,
                                  const double *origin,
                                  double resolution,
                                  const uint32_t *dims,
                                  struct CanopyGrid **out);

/**
 * # Safety
 * `grid` must be a live handle or null.
 */
size_t canopy_grid_occupied_count(const struct CanopyGrid *grid);

/**
 * Points that fell outside the grid.
 *
 * # Safety
 * `grid` must be a live handle or null.
 */
size_t canopy_grid_dropped(const struct CanopyGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle and `out` a valid pointer.
 */
enum CanopyStatus canopy_grid_is_occupied(const struct CanopyGrid *grid,
                                          uint32_t i,
                                          uint32_t j,
                                          uint32_t k,
                                          bool *out);

/**
 * # Safety
 * `grid` must come from this library and not be used afterwards.
 */
void canopy_grid_free(struct CanopyGrid *grid);

/**
 * Precision, recall and F-score; ratios with a zero denominator are 0.
 */
struct CanopyReport canopy_prf(uint64_t tp, uint64_t fp, uint64_t fn_);

/**
 * One-to-one stem matching within `radius`; stems are interleaved xy
 * pairs.
 *
 * # Safety
 * `predicted` must hold `2 * n_predicted` values, `truth` `2 * n_truth`
 * values (either may be null when its count is 0), `out` must be valid.
 */
enum CanopyStatus canopy_match_stems(const double *predicted,
                                     size_t n_predicted,
                                     const double *truth,
                                     size_t n_truth,
                                     double radius,
                                     struct CanopyReport *out);

/**
 * Furthest point sampling of `m` of `n` interleaved xyz points starting at
 * `start`; writes `m` indices to `out_indices`.
 *
 * # Safety
 * `points` must hold `3 * n` values and `out_indices` room for `m`.
 */
enum CanopyStatus canopy_fps(const double *points,
                             size_t n,
                             size_t m,
                             size_t start,
                             size_t *out_indices);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CANOPY_H */
