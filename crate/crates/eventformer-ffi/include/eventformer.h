#ifndef EVENTFORMER_H
#define EVENTFORMER_H

/* Generated by cbindgen from eventformer-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum EfStatus {
  // Success.
  EfOk = 0,
  // A pointer argument was null or a string was not valid UTF-8.
  EfInvalidArgument = 1,
  // Input data was rejected (bad JSON, invalid chain, bad checkpoint).
  EfDataError = 2,
  // Unexpected internal failure; see `ef_last_error`.
  EfInternalError = 3,
} EfStatus;

// Opaque model handle.
typedef struct EfModel EfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *ef_version(void);

// Message of the most recent error on this thread; valid until the next
// failing call on the same thread. Do not free.
const char *ef_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned through an `out` parameter, or
// null.
void ef_string_free(char *s);

// Load a model checkpoint (JSON produced by `eventformer train`).
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer. On success `*out` owns the model and must be released with
// [`ef_model_free`].
enum EfStatus ef_model_load(const char *path, struct EfModel **out);

// Release a model handle.
//
// # Safety
// `model` must come from [`ef_model_load`] or be null; it must not be used
// afterwards.
void ef_model_free(struct EfModel *model);

// Total trainable parameter count of the model.
//
// # Safety
// `model` and `out` must be valid pointers.
enum EfStatus ef_model_param_count(const struct EfModel *model, uint64_t *out);

// Validate a chain in the JSON-lines corpus format. `out` receives a JSON
// array of violation strings (empty when the chain is well-formed).
//
// # Safety
// `chain_json` must be a valid NUL-terminated string; `out` a valid pointer.
// The returned string is released with [`ef_string_free`].
enum EfStatus ef_validate_chain_json(const char *chain_json, char **out);

// Predict the next event for a chain (JSON-lines corpus format). `tau` is
// the similarity threshold; pass a NaN to use the model's configured value.
// `top_k` limits the verbs in the result (0 means all). `out` receives JSON:
// `{"verbs": [ids], "verb_names": [...], "nouns": [ids], "noun_names": [...]}`.
//
// # Safety
// `model`, `chain_json`, and `out` must be valid pointers; the returned
// string is released with [`ef_string_free`].
enum EfStatus ef_predict_json(const struct EfModel *model,
                              const char *chain_json,
                              double tau,
                              uint32_t top_k,
                              char **out);

// Attention dump for a chain: per-layer graph and node attention matrices
// averaged over heads, plus node labels.
//
// # Safety
// Same contracts as [`ef_predict_json`].
enum EfStatus ef_inspect_json(const struct EfModel *model, const char *chain_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVENTFORMER_H */
