#ifndef JOINTKERN_H
#define JOINTKERN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum JkStatus {
  JK_STATUS_OK = 0,
  JK_STATUS_AUDIT_FAILED = 1,
  JK_STATUS_USAGE = 2,
  JK_STATUS_SYNTAX = 3,
  JK_STATUS_EVAL = 4,
  JK_STATUS_VALIDATION = 5,
  JK_STATUS_INTERNAL = 6,
} JkStatus;

/**
 * A loaded model and its current interventions.
 */
typedef struct JkModel JkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum JkStatus jk_model_load(const char *path, struct JkModel **out);

/**
 * Parses a model from JSON text.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum JkStatus jk_model_from_json(const char *json, struct JkModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `m` must come from `jk_model_load` or `jk_model_from_json` and not be
 * used afterwards.
 */
void jk_model_free(struct JkModel *m);

/**
 * Forces box `box_id` to the JSON value `value` in later calls.
 *
 * # Safety
 * `m` must be a live handle; the strings must be nul-terminated.
 */
enum JkStatus jk_model_intervene(struct JkModel *m, const char *box_id, const char *value);

/**
 * Removes all interventions.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
void jk_model_clear_interventions(struct JkModel *m);

/**
 * Draws `n` sample records as JSON lines. `input` may be null for models
 * without inputs.
 *
 * # Safety
 * `m` must be a live handle, `input` null or nul-terminated, `out` valid.
 */
enum JkStatus jk_sample_jsonl(const struct JkModel *m,
                              uint64_t n,
                              uint64_t seed,
                              const char *input,
                              char **out);

/**
 * Joint log density of a trace, given as a record or a bare trace object.
 *
 * # Safety
 * `m` must be a live handle, strings nul-terminated or null where allowed,
 * `out` valid.
 */
enum JkStatus jk_logpdf(const struct JkModel *m, const char *trace, const char *input, double *out);

/**
 * Uniforms that reproduce a trace, as a JSON object keyed by box.
 *
 * # Safety
 * As for `jk_logpdf`.
 */
enum JkStatus jk_abduct(const struct JkModel *m, const char *trace, const char *input, char **out);

/**
 * Replays uniforms through the intervened model, writing the resulting
 * record.
 *
 * # Safety
 * As for `jk_logpdf`.
 */
enum JkStatus jk_counterfactual(const struct JkModel *m,
                                const char *uniforms,
                                const char *input,
                                char **out);

/**
 * Runs the audit and writes its JSON report. Returns `AuditFailed` with
 * the report written when a test fails.
 *
 * # Safety
 * `m` must be a live handle and `out` valid.
 */
enum JkStatus jk_spw(const struct JkModel *m, uint64_t n, uint64_t seed, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void jk_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call.
 */
const char *jk_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINTKERN_H */
