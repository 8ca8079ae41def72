#ifndef PLANCOST_H
#define PLANCOST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_ARGUMENT = 1,
  PC_STATUS_INVALID_UTF8 = 2,
  PC_STATUS_PARSE = 3,
  PC_STATUS_IO = 4,
  PC_STATUS_MODEL = 5,
  PC_STATUS_MODE_MISMATCH = 6,
  PC_STATUS_PANIC = 7,
} PcStatus;

// A trained model document.
typedef struct PcModel PcModel;

// A parsed EXPLAIN plan.
typedef struct PcPlan PcPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library from the same thread.
const char *pc_last_error(void);

// Library version as a static NUL-terminated string.
const char *pc_version(void);

// Parses EXPLAIN (FORMAT JSON) output, analyzed or not.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a writable pointer.
enum PcStatus pc_plan_parse(const char *json, struct PcPlan **out);

// Attaches SQL text, used by models with a TF-IDF block.
//
// # Safety
// `plan` must come from [`pc_plan_parse`]; `sql` must be NUL-terminated.
enum PcStatus pc_plan_set_query_text(struct PcPlan *plan, const char *sql);

// Number of operator nodes in the plan.
//
// # Safety
// `plan` must come from [`pc_plan_parse`]; `out` must be writable.
enum PcStatus pc_plan_node_count(const struct PcPlan *plan, uintptr_t *out);

// Releases a plan. NULL is ignored.
//
// # Safety
// `plan` must come from [`pc_plan_parse`] and not be used afterwards.
void pc_plan_free(struct PcPlan *plan);

// Loads a model file written by `plancost train`.
//
// # Safety
// `path` must be NUL-terminated and `out` writable.
enum PcStatus pc_model_load(const char *path, struct PcModel **out);

// Loads a model from its JSON text.
//
// # Safety
// `json` must be NUL-terminated and `out` writable.
enum PcStatus pc_model_from_json(const char *json, struct PcModel **out);

// Model family name ("linear", "forest", "gbdt", "mlp" or "lstm"), static.
// Returns NULL for a NULL handle.
//
// # Safety
// `model` must be NULL or come from a `pc_model_*` constructor.
const char *pc_model_kind(const struct PcModel *model);

// Predicts runtime in milliseconds, and its log1p, for one plan.
// `out_log` may be NULL.
//
// # Safety
// Handles must come from this library; `out_ms` must be writable.
enum PcStatus pc_model_predict(const struct PcModel *model,
                               const struct PcPlan *plan,
                               double *out_ms,
                               double *out_log);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from a `pc_model_*` constructor and not be used afterwards.
void pc_model_free(struct PcModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLANCOST_H */
