#ifndef GAD_H
#define GAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GAD_STATUS_OK = 0,
  GAD_STATUS_NULL_POINTER = 1,
  GAD_STATUS_INVALID_ARGUMENT = 2,
  GAD_STATUS_IO = 3,
  GAD_STATUS_PARSE = 4,
  GAD_STATUS_COMPUTE = 5,
  GAD_STATUS_PANIC = 6,
} GadStatus;

/**
 * Opaque graph handle.
 */
typedef struct GadGraph GadGraph;

typedef struct {
  size_t num_nodes;
  size_t num_edges;
  double density;
  double avg_degree;
  /**
   * NaN when the graph has no anomalies.
   */
  double avg_degree_anomaly;
} GadGraphStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *gad_last_error(void);

/**
 * Builds a graph from `num_edges` pairs in `edges` (length `2 * num_edges`),
 * a row-major `num_nodes x feature_dim` feature array and one label per
 * node (0 normal, 1 anomaly, -1 unknown).
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
GadStatus gad_graph_from_arrays(size_t num_nodes,
                                const size_t *edges,
                                size_t num_edges,
                                const double *features,
                                size_t feature_dim,
                                const int8_t *labels,
                                GadGraph **out);

/**
 * Loads the three-file dataset format.
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8; `out` must be writable.
 */
GadStatus gad_graph_load(const char *edge_path,
                         const char *feature_path,
                         const char *label_path,
                         GadGraph **out);

/**
 * Default synthetic benchmark with `num_nodes` nodes; `null_signal != 0`
 * removes all injected signal.
 *
 * # Safety
 * `out` must be writable.
 */
GadStatus gad_graph_synthetic(size_t num_nodes, uint64_t seed, int32_t null_signal, GadGraph **out);

/**
 * # Safety
 * `graph` must come from this library and not be freed twice. Null is a
 * no-op.
 */
void gad_graph_free(GadGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
GadStatus gad_graph_stats(const GadGraph *graph, GadGraphStats *out);

/**
 * Writes `R_1..R_max_k` into `out_ratios` (length `max_k`).
 *
 * # Safety
 * Arrays must be valid for their lengths; `graph` must be live.
 */
GadStatus gad_reachable_ratio(const GadGraph *graph,
                              const size_t *labeled,
                              size_t num_labeled,
                              const size_t *unlabeled,
                              size_t num_unlabeled,
                              size_t max_k,
                              double *out_ratios);

/**
 * AUROC of `scores` against binary `labels` (nonzero = anomaly).
 *
 * # Safety
 * Arrays must hold `n` elements; `out` must be writable.
 */
GadStatus gad_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Average precision of `scores` against binary `labels`.
 *
 * # Safety
 * As for [`gad_auroc`].
 */
GadStatus gad_auprc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Runs an experiment from a JSON config and returns the aggregate as a
 * JSON string in `out_json` (free with [`gad_string_free`]).
 *
 * # Safety
 * `config_json` must be NUL-terminated UTF-8; `out_json` writable.
 */
GadStatus gad_run_experiment(const char *config_json, char **out_json);

/**
 * # Safety
 * `s` must come from this library; null is a no-op.
 */
void gad_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GAD_H */
