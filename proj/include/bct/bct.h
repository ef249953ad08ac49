/* C interface to the bct training toolkit. All handles are opaque; every
 * fallible call returns a bct_status and leaves a message for
 * bct_last_error() on failure. Strings returned through char** are owned by
 * the caller and released with bct_string_free. */
#ifndef BCT_BCT_H
#define BCT_BCT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(BCT_BUILDING_LIBRARY)
#    define BCT_API __declspec(dllexport)
#  else
#    define BCT_API __declspec(dllimport)
#  endif
#else
#  define BCT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes. */
typedef enum bct_status {
  BCT_OK = 0,
  BCT_ERR_INTERNAL = 1,
  BCT_ERR_CONFIG = 2,
  BCT_ERR_DATA = 3,
  BCT_ERR_NUMERIC = 4
} bct_status;

typedef struct bct_config bct_config;
typedef struct bct_model bct_model;
typedef struct bct_runlog bct_runlog;

/* Message of the last failed call on this thread, "" if none. */
BCT_API const char* bct_last_error(void);
BCT_API const char* bct_version(void);
BCT_API void bct_string_free(char* s);

/* configuration */
BCT_API bct_status bct_config_new(bct_config** out);
/* Reads a key = value file. Values are validated when the config is used. */
BCT_API bct_status bct_config_load(const char* path, bct_config** out);
/* Later calls win over file values. */
BCT_API bct_status bct_config_set(bct_config* cfg, const char* key, const char* value);
BCT_API bct_status bct_config_validate(const bct_config* cfg);
/* Resolved config in file syntax. */
BCT_API bct_status bct_config_dump(const bct_config* cfg, char** out);
/* Nearest valid key, for diagnostics. */
BCT_API bct_status bct_config_suggest(const char* key, char** out);
BCT_API int bct_config_has_key(const char* key);
BCT_API void bct_config_free(bct_config* cfg);

/* synthetic datasets */
typedef struct bct_synth_options {
  const char* family; /* "target" or "source" */
  size_t n_per_class;
  size_t class1_count; /* 0 = n_per_class */
  uint64_t seed;
  double noise_level;
  size_t size;
  size_t cell;
} bct_synth_options;

BCT_API void bct_synth_options_init(bct_synth_options* opts);
BCT_API bct_status bct_synth(const char* out_root, const bct_synth_options* opts);

/* metrics */
typedef struct bct_metrics {
  size_t tp, tn, fp, fn;
  double accuracy, precision, recall, f1;
  int precision_undefined, recall_undefined, f1_undefined;
} bct_metrics;

BCT_API bct_status bct_compute_metrics(size_t tp, size_t tn, size_t fp, size_t fn, bct_metrics* out);

/* models */
BCT_API bct_status bct_model_create(const bct_config* cfg, bct_model** out);
/* prefix "" loads every parameter, "backbone." only that group. */
BCT_API bct_status bct_model_load(bct_model* model, const char* checkpoint, const char* prefix);
BCT_API bct_status bct_model_save(const bct_model* model, const char* path);
BCT_API size_t bct_model_param_count(const bct_model* model);
BCT_API size_t bct_model_num_classes(const bct_model* model);
/* images: n samples of [C,H,W] floats in the model's input shape;
 * scores: n * num_classes softmax outputs. */
BCT_API bct_status bct_model_forward(const bct_model* model, const float* images, size_t n, float* scores);
BCT_API void bct_model_free(bct_model* model);

/* training */
typedef struct bct_epoch_record {
  size_t epoch;
  size_t stage;
  double train_loss;
  double train_acc;
  double val_acc;
} bct_epoch_record;

/* Runs the configured paradigm; with train.output_dir set, writes the run
 * artifacts there. */
BCT_API bct_status bct_train(const bct_config* cfg, bct_runlog** out);
BCT_API size_t bct_runlog_epochs(const bct_runlog* log);
BCT_API bct_status bct_runlog_record(const bct_runlog* log, size_t index, bct_epoch_record* out);
/* Returns 1 and sets *epochs when the run converged, else 0. */
BCT_API int bct_runlog_converged(const bct_runlog* log, size_t* epochs);
BCT_API void bct_runlog_test_metrics(const bct_runlog* log, bct_metrics* out);
BCT_API void bct_runlog_free(bct_runlog* log);

/* Evaluates a checkpoint on one split ("train", "val", "test") of the
 * configured dataset. With jsonl_path, writes the result there as one JSON
 * line. */
BCT_API bct_status bct_evaluate(const bct_config* cfg, const char* checkpoint, const char* split,
                                const char* jsonl_path, bct_metrics* out);

/* suite: "loss", "optimizer" or "paradigm". markdown may be NULL. */
BCT_API bct_status bct_ablate(const bct_config* cfg, const char* suite, size_t seeds, size_t jobs,
                              const char* out_dir, char** markdown);

/* Writes accuracy.svg and loss.svg. */
BCT_API bct_status bct_plot(const char* const* runlogs, size_t count, const char* out_dir);

/* Human-readable summary of a checkpoint file or a dataset directory. */
BCT_API bct_status bct_inspect(const char* path, char** out);

#ifdef __cplusplus
}
#endif

#endif
