#ifndef RWRE_H
#define RWRE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RwreStatus {
  RWRE_STATUS_OK = 0,
  RWRE_STATUS_NULL_POINTER = 1,
  RWRE_STATUS_INVALID_UTF8 = 2,
  RWRE_STATUS_CONFIG = 3,
  RWRE_STATUS_USAGE = 4,
  RWRE_STATUS_DIMENSION_MISMATCH = 5,
  RWRE_STATUS_OVERFLOW = 6,
  RWRE_STATUS_CENSORED = 7,
  RWRE_STATUS_ACCEPTANCE = 8,
  RWRE_STATUS_RESOURCE = 9,
  RWRE_STATUS_IO = 10,
  RWRE_STATUS_PANIC = 11,
} RwreStatus;

/**
 * Sampled regeneration blocks.
 */
typedef struct RwreBlocks RwreBlocks;

/**
 * One realization of the environment.
 */
typedef struct RwreEnv RwreEnv;

/**
 * Validated environment model and jump kernel.
 */
typedef struct RwreModel RwreModel;

typedef struct RwreBlock {
  uint64_t seed;
  uint64_t t1;
  /**
   * Spatial displacement; entries past the dimension are 0.
   */
  int64_t disp[3];
  bool censored;
  uint64_t rejections;
} RwreBlock;

/**
 * Speed and diffusion estimates; entries past the dimension are 0.
 */
typedef struct RwreLimits {
  size_t dim;
  double v_hat[3];
  double v_ci_lo[3];
  double v_ci_hi[3];
  /**
   * Row-major d x d in the leading entries of a 3 x 3 array.
   */
  double sigma_hat[9];
  uint64_t n_blocks;
  uint64_t n_censored;
  double mean_t1;
} RwreLimits;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *rwre_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *rwre_version(void);

/**
 * Build a model from TOML config text (same keys as the command-line tool).
 *
 * # Safety
 * `config_toml` is a nul-terminated string; `out` is valid for writes.
 */
enum RwreStatus rwre_model_new(const char *config_toml, struct RwreModel **out);

/**
 * # Safety
 * `model` is null or was returned by [`rwre_model_new`] and not yet freed.
 */
void rwre_model_free(struct RwreModel *model);

/**
 * Spatial dimension of the model.
 *
 * # Safety
 * `model` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_model_dim(const struct RwreModel *model, size_t *out);

/**
 * Realize the environment for `seed`.
 *
 * # Safety
 * `model` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_env_new(const struct RwreModel *model, uint64_t seed, struct RwreEnv **out);

/**
 * # Safety
 * `env` is null or was returned by [`rwre_env_new`] and not yet freed.
 */
void rwre_env_free(struct RwreEnv *env);

/**
 * omega at (x, t); `x` holds `d` spatial coordinates.
 *
 * # Safety
 * `env` is a live handle, `x` is valid for `d` reads, `out` for writes.
 */
enum RwreStatus rwre_env_omega(const struct RwreEnv *env,
                               const int64_t *x,
                               size_t d,
                               int64_t t,
                               uint64_t *out);

/**
 * Regeneration indicator eta at (x, t).
 *
 * # Safety
 * As [`rwre_env_omega`].
 */
enum RwreStatus rwre_env_eta(const struct RwreEnv *env,
                             const int64_t *x,
                             size_t d,
                             int64_t t,
                             bool *out);

/**
 * Minimal number of threatened sites over allowed paths of length J*H from
 * the origin, with traps {eta = 1} of this realization.
 *
 * # Safety
 * `env` and `model` are live handles; `out` is valid for writes.
 */
enum RwreStatus rwre_env_min_threats(const struct RwreModel *model,
                                     const struct RwreEnv *env,
                                     uint64_t j,
                                     uint64_t h,
                                     uint64_t *out);

/**
 * As [`rwre_env_min_threats`] with an explicit trap set: `n_traps` points,
 * each `d` coordinates followed by the time, flattened into `traps`.
 *
 * # Safety
 * `traps` is valid for `n_traps * (d + 1)` reads (or null when `n_traps` is
 * 0); `out` is valid for writes.
 */
enum RwreStatus rwre_min_threats(size_t d,
                                 const int64_t *traps,
                                 size_t n_traps,
                                 uint64_t j,
                                 uint64_t h,
                                 uint32_t range,
                                 uint64_t *out);

/**
 * Sample `n` regeneration blocks. `horizon` 0 selects the model's
 * `experiment.horizon`.
 *
 * # Safety
 * `model` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_sample_blocks(const struct RwreModel *model,
                                   uint64_t n,
                                   uint64_t seed,
                                   uint64_t horizon,
                                   struct RwreBlocks **out);

/**
 * # Safety
 * `blocks` is null or was returned by [`rwre_sample_blocks`] and not yet freed.
 */
void rwre_blocks_free(struct RwreBlocks *blocks);

/**
 * # Safety
 * `blocks` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_blocks_len(const struct RwreBlocks *blocks, size_t *out);

/**
 * # Safety
 * `blocks` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_blocks_get(const struct RwreBlocks *blocks,
                                size_t index,
                                struct RwreBlock *out);

/**
 * Speed and diffusion estimates with `n_boot` bootstrap resamples.
 *
 * # Safety
 * `blocks` is a live handle; `out` is valid for writes.
 */
enum RwreStatus rwre_estimate_limits(const struct RwreBlocks *blocks,
                                     size_t n_boot,
                                     uint64_t seed,
                                     struct RwreLimits *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RWRE_H */
