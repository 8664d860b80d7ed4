#ifndef SEMNAV_H
#define SEMNAV_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum SemnavStatus {
  SEMNAV_STATUS_OK = 0,
  SEMNAV_STATUS_NULL_POINTER = 1,
  SEMNAV_STATUS_INVALID_ARGUMENT = 2,
  SEMNAV_STATUS_PARSE = 3,
  SEMNAV_STATUS_IO = 4,
  SEMNAV_STATUS_RUNTIME = 5,
  SEMNAV_STATUS_PANIC = 6,
} SemnavStatus;

/**
 * Opaque prior graph handle.
 */
typedef struct SemnavPriorGraph SemnavPriorGraph;

/**
 * Opaque scene handle.
 */
typedef struct SemnavScene SemnavScene;

/**
 * Outcome of one episode.
 */
typedef struct SemnavEpisodeSummary {
  bool success;
  uint32_t agents;
  uint32_t targets;
  /**
   * Rounds until the last agent stopped.
   */
  uint32_t makespan;
  /**
   * Oracle optimum, or -1 when no agent can finish the task.
   */
  int64_t oracle_makespan;
  uint32_t found_events;
  uint64_t bandwidth_total;
  uint64_t msgs_dropped;
} SemnavEpisodeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *semnav_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *semnav_last_error(void);

/**
 * Generates a scene of `length`×`width` cells with `rooms` rooms.
 *
 * # Safety
 * `out` must be writable.
 */
enum SemnavStatus semnav_scene_generate(uint64_t seed,
                                        size_t length,
                                        size_t width,
                                        size_t rooms,
                                        double object_density,
                                        struct SemnavScene **out);

/**
 * # Safety
 * `path` is a NUL-terminated string; `out` must be writable.
 */
enum SemnavStatus semnav_scene_load(const char *path, struct SemnavScene **out);

/**
 * # Safety
 * `scene` is a live handle; `path` is a NUL-terminated string.
 */
enum SemnavStatus semnav_scene_save(const struct SemnavScene *scene, const char *path);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` is null or a handle not yet freed.
 */
void semnav_scene_free(struct SemnavScene *scene);

/**
 * # Safety
 * `scene` is a live handle; `length` and `width` are writable.
 */
enum SemnavStatus semnav_scene_dims(const struct SemnavScene *scene, size_t *length, size_t *width);

/**
 * Whether cell (x, y) is traversable. Out-of-bounds cells are not.
 *
 * # Safety
 * `scene` is a live handle; `out` is writable.
 */
enum SemnavStatus semnav_scene_is_free(const struct SemnavScene *scene,
                                       int32_t x,
                                       int32_t y,
                                       bool *out);

/**
 * # Safety
 * `scene` is a live handle; `out` is writable.
 */
enum SemnavStatus semnav_scene_object_count(const struct SemnavScene *scene, size_t *out);

/**
 * # Safety
 * `path` is a NUL-terminated string; `out` must be writable.
 */
enum SemnavStatus semnav_prior_graph_load(const char *path, struct SemnavPriorGraph **out);

/**
 * Co-occurrence graph of `count` scenes, keeping edges of weight at least `min_weight`.
 *
 * # Safety
 * `scenes` points to `count` live handles; `out` must be writable.
 */
enum SemnavStatus semnav_prior_graph_derive(const struct SemnavScene *const *scenes,
                                            size_t count,
                                            double min_weight,
                                            struct SemnavPriorGraph **out);

/**
 * # Safety
 * `graph` is a live handle; `out` is writable.
 */
enum SemnavStatus semnav_prior_graph_edge_count(const struct SemnavPriorGraph *graph, size_t *out);

/**
 * Releases a prior graph. Null is ignored.
 *
 * # Safety
 * `graph` is null or a handle not yet freed.
 */
void semnav_prior_graph_free(struct SemnavPriorGraph *graph);

/**
 * Samples a task of `targets` categories and `agents` spawns from
 * `task_seed`, runs it under `variant` (e.g. "greedy", "central-greedy",
 * "random/no-comm") and reports the outcome. `graph` may be null, meaning
 * no scene priors. Map messages use the 256-value quantized codec.
 *
 * # Safety
 * `scene` is a live handle, `graph` null or live, `variant` a
 * NUL-terminated string and `out` writable.
 */
enum SemnavStatus semnav_run_episode(const struct SemnavScene *scene,
                                     const struct SemnavPriorGraph *graph,
                                     const char *variant,
                                     size_t targets,
                                     size_t agents,
                                     uint64_t task_seed,
                                     uint64_t seed,
                                     size_t max_steps,
                                     struct SemnavEpisodeSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMNAV_H */
