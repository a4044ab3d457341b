#ifndef SAVNCE_H
#define SAVNCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum SavnceStatus {
  SAVNCE_STATUS_OK = 0,
  SAVNCE_STATUS_NULL_POINTER = 1,
  SAVNCE_STATUS_INVALID_ARGUMENT = 2,
  SAVNCE_STATUS_IO = 3,
  SAVNCE_STATUS_DATASET = 4,
  SAVNCE_STATUS_EPISODE_DONE = 5,
  SAVNCE_STATUS_BUFFER_TOO_SMALL = 6,
  SAVNCE_STATUS_INTERNAL = 7,
} SavnceStatus;

/**
 * How an episode ended; `Running` while it is not over.
 */
typedef enum SavnceTermination {
  SAVNCE_TERMINATION_RUNNING = 0,
  SAVNCE_TERMINATION_SUCCESS = 1,
  SAVNCE_TERMINATION_STOPPED_WRONG_PLACE = 2,
  SAVNCE_TERMINATION_STOPPED_AT_DISTRACTOR = 3,
  SAVNCE_TERMINATION_TIMEOUT = 4,
} SavnceTermination;

/**
 * A loaded dataset.
 */
typedef struct SavnceDataset SavnceDataset;

/**
 * One running episode and its latest observation.
 */
typedef struct SavnceEnv SavnceEnv;

typedef struct SavnceStepResult {
  double reward;
  bool done;
  enum SavnceTermination termination;
  /**
   * Geodesic distance to the goal after the step, meters.
   */
  double distance_to_goal;
} SavnceStepResult;

/**
 * Copies the last error message (NUL-terminated, truncated to `capacity`)
 * and returns the full message length in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
size_t savnce_last_error(char *buf, size_t capacity);

/**
 * Library version as a static NUL-terminated string.
 */
const char *savnce_version(void);

/**
 * Loads and validates a dataset directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SavnceStatus savnce_dataset_open(const char *path, struct SavnceDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from `savnce_dataset_open` not yet freed.
 */
void savnce_dataset_free(struct SavnceDataset *ds);

/**
 * Number of episodes in a split (0 train, 1 val, 2 test).
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
enum SavnceStatus savnce_dataset_episode_count(const struct SavnceDataset *ds,
                                               uint32_t split,
                                               size_t *out);

/**
 * Starts episode `index` of `split` under `condition` (0 clean, 1
 * distracted). Audio is rendered with the default room model.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable. The
 * environment does not borrow the dataset.
 */
enum SavnceStatus savnce_env_reset(const struct SavnceDataset *ds,
                                   uint32_t split,
                                   size_t index,
                                   uint32_t condition,
                                   uint64_t seed,
                                   struct SavnceEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from `savnce_env_reset` not yet freed.
 */
void savnce_env_free(struct SavnceEnv *env);

/**
 * Applies an action (0 stop, 1 forward, 2 turn left, 3 turn right).
 *
 * # Safety
 * `env` must be a live environment handle; `out` must be writable.
 */
enum SavnceStatus savnce_env_step(struct SavnceEnv *env,
                                  uint32_t action,
                                  struct SavnceStepResult *out);

/**
 * Copies the latest binaural frame. Each buffer must hold `len` samples;
 * `len` must be at least the frame length, which is written to `written`.
 *
 * # Safety
 * `left` and `right` must point to `len` writable doubles.
 */
enum SavnceStatus savnce_env_audio(const struct SavnceEnv *env,
                                   double *left,
                                   double *right,
                                   size_t len,
                                   size_t *written);

/**
 * World pose `[x, y, heading]` of the agent.
 *
 * # Safety
 * `env` must be a live environment handle; `out` must hold 3 doubles.
 */
enum SavnceStatus savnce_env_pose(const struct SavnceEnv *env, double *out);

/**
 * Dead-reckons a relative goal estimate through one action.
 *
 * # Safety
 * `out_azimuth` and `out_distance` must be writable.
 */
enum SavnceStatus savnce_propagate_estimate(double azimuth,
                                            double distance,
                                            uint32_t action,
                                            double moved,
                                            double *out_azimuth,
                                            double *out_distance);

/**
 * Evaluates an agent ("random", "oracle1", "oracle2", "tracker") on the
 * first `limit` episodes of a split (0 for all) and writes the JSON metric
 * report to `buf`. `needed` receives the report length plus one.
 *
 * # Safety
 * `ds` must be a live dataset handle, `agent` a NUL-terminated string and
 * `buf` null or `capacity` writable bytes.
 */
enum SavnceStatus savnce_evaluate(const struct SavnceDataset *ds,
                                  uint32_t split,
                                  const char *agent,
                                  uint32_t condition,
                                  uint64_t seed,
                                  size_t workers,
                                  size_t limit,
                                  char *buf,
                                  size_t capacity,
                                  size_t *needed);

/**
 * Per-episode seed used by the evaluator, for reproducing single episodes.
 *
 * # Safety
 * `episode_id` must be a NUL-terminated string; `out` must be writable.
 */
enum SavnceStatus savnce_episode_seed(uint64_t master,
                                      const char *episode_id,
                                      size_t run,
                                      uint64_t *out);

#endif  /* SAVNCE_H */
