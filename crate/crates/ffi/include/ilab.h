#ifndef ILAB_H
#define ILAB_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. `ILAB_STATUS_OK` is zero.
typedef enum IlabStatus {
  ILAB_STATUS_OK = 0,
  ILAB_STATUS_NULL_POINTER = 1,
  ILAB_STATUS_INVALID_UTF8 = 2,
  ILAB_STATUS_BUFFER_TOO_SMALL = 3,
  ILAB_STATUS_PANIC = 4,
  ILAB_STATUS_DIMENSION = 10,
  ILAB_STATUS_INDEX = 11,
  ILAB_STATUS_CONTRACT = 12,
  ILAB_STATUS_CONFIG = 13,
  ILAB_STATUS_PATCH = 14,
  ILAB_STATUS_FORMAT = 15,
  ILAB_STATUS_INPUT = 16,
  ILAB_STATUS_SPEC = 17,
  ILAB_STATUS_CAPACITY = 18,
  ILAB_STATUS_PARSE = 19,
  ILAB_STATUS_LEXICON = 20,
  ILAB_STATUS_SCHEMA = 21,
  ILAB_STATUS_DEGENERATE = 22,
  ILAB_STATUS_ALIGNMENT = 23,
  ILAB_STATUS_PAIRING = 24,
  ILAB_STATUS_PROJECTION = 25,
  ILAB_STATUS_REPORT = 26,
  ILAB_STATUS_IO = 27,
  ILAB_STATUS_JSON = 28,
  ILAB_STATUS_CSV = 29,
} IlabStatus;

// A loaded checkpoint: 64-bit weights and, if saved, the vocabulary.
typedef struct IlabModel IlabModel;

// Shape of a loaded model.
typedef struct IlabModelInfo {
  size_t n_layers;
  size_t n_heads;
  size_t d_model;
  size_t d_mlp;
  size_t vocab_size;
  size_t max_seq_len;
  // Nonzero when the checkpoint carries a vocabulary.
  uint8_t has_vocab;
} IlabModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static name of a status code, such as `"format"`.
const char *ilab_status_name(enum IlabStatus status);

// Copies the calling thread's last error message into `buf`. Returns the
// message length without the NUL; 0 when there is none. Truncates to
// `cap - 1` bytes.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t ilab_last_error(char *buf, size_t cap);

// Loads a checkpoint. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum IlabStatus ilab_model_load(const char *path, struct IlabModel **out);

// Releases a handle. Null is a no-op.
//
// # Safety
// `model` must come from [`ilab_model_load`] and not be used afterwards.
void ilab_model_free(struct IlabModel *model);

// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum IlabStatus ilab_model_info(const struct IlabModel *model, struct IlabModelInfo *out);

// Encodes whitespace-separated words with the checkpoint's vocabulary.
// `*len` receives the token count; `ILAB_STATUS_BUFFER_TOO_SMALL` when it
// exceeds `cap`.
//
// # Safety
// `text` must be NUL-terminated; `ids` valid for `cap` writes; `len` valid.
enum IlabStatus ilab_model_encode(const struct IlabModel *model,
                                  const char *text,
                                  size_t *ids,
                                  size_t cap,
                                  size_t *len);

// Surprisal in nats of `label` after `prefix`.
//
// # Safety
// `prefix` must be valid for `len` reads; `out` valid for writes.
enum IlabStatus ilab_model_surprisal(const struct IlabModel *model,
                                     const size_t *prefix,
                                     size_t len,
                                     size_t label,
                                     double *out);

// `(S(l_th|wh) − S(l_th|th)) − (S(l_wh|wh) − S(l_wh|th))`.
double ilab_wh_licensing(double s_th_wh, double s_th_th, double s_wh_wh, double s_wh_th);

// `out = b + ((s − b)·a) a` for a unit `a`, all of length `n`.
//
// # Safety
// Each pointer must be valid for `n` elements.
enum IlabStatus ilab_das_patch(const double *b,
                               const double *s,
                               const double *a,
                               size_t n,
                               double *out);

// Runs the experiment described by a JSON config and writes the run
// directory path into `buf`.
//
// # Safety
// `config` must be NUL-terminated; `buf` valid for `cap` bytes; `len` valid.
enum IlabStatus ilab_run_experiment(const char *config, char *buf, size_t cap, size_t *len);

// Writes `report.html` into a finished run directory.
//
// # Safety
// `dir` must be NUL-terminated.
enum IlabStatus ilab_emit_report(const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ILAB_H */
