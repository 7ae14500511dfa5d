/* C interface to the streaming-classification engine.
 *
 * Conventions:
 *   - Functions return OCL_OK (0) on success or a negative ocl_status code.
 *   - ocl_last_error() describes the most recent failure on the calling
 *     thread; the pointer stays valid until the thread's next API call.
 *   - char** outputs are heap strings owned by the caller; release them with
 *     ocl_string_free(). Handles are opaque and freed by their *_close/_free
 *     function. NULL handle/pointer arguments yield OCL_ERR_INVALID_ARGUMENT.
 */
#ifndef OCL_OCL_H
#define OCL_OCL_H

#include <stdint.h>

#if defined(_WIN32)
#define OCL_API __declspec(dllexport)
#else
#define OCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t ocl_status;

enum {
  OCL_OK = 0,
  OCL_ERR_INVALID_ARGUMENT = -1,
  OCL_ERR_IO = -2,
  OCL_ERR_FORMAT = -3,
  OCL_ERR_OUT_OF_RANGE = -4,
  OCL_ERR_STATE = -5,
  OCL_ERR_NUMERIC = -6,
  OCL_ERR_UNKNOWN = -7
};

typedef struct ocl_dataset ocl_dataset;
typedef struct ocl_learner ocl_learner;

OCL_API const char* ocl_version(void);
OCL_API const char* ocl_last_error(void);
OCL_API void ocl_string_free(char* s);

/* ---- datasets ---- */

OCL_API ocl_status ocl_dataset_open(const char* features_path, const char* manifest_path,
                                    ocl_dataset** out);
OCL_API void ocl_dataset_close(ocl_dataset* dataset);
OCL_API ocl_status ocl_dataset_info(const ocl_dataset* dataset, uint64_t* n_samples, uint32_t* dim,
                                    uint32_t* num_classes);

/* Gaussian synthesis. params_json keys (all optional): num_classes, dim,
 * train_per_class, test_per_class, class_mean_scale, noise_sigma, group_size,
 * seed. */
OCL_API ocl_status ocl_synthesize(const char* params_json, const char* features_path,
                                  const char* manifest_path);

/* Validates a feature file + manifest pair; report_json receives counts
 * (n_samples, dim, num_classes, train, test, groups). */
OCL_API ocl_status ocl_ingest_report(const char* features_path, const char* manifest_path,
                                     char** report_json);

/* Converts a headerless CSV (split,class_id,group_id,v0,...,v_{d-1} per row;
 * empty group_id for ungrouped samples) into a feature file + manifest. */
OCL_API ocl_status ocl_ingest_csv(const char* csv_path, const char* features_path,
                                  const char* manifest_path, char** report_json);

/* ---- learners ---- */

/* kind: ncm | sovr | slda | naive_bayes | perceptron | finetune | replay |
 * cbcl. config_json may be NULL or "{}" for defaults. */
OCL_API ocl_status ocl_learner_create(const char* kind, uint32_t dim, uint32_t num_classes,
                                      const char* config_json, ocl_learner** out);
OCL_API ocl_status ocl_learner_load(const char* checkpoint_dir, ocl_learner** out);
OCL_API void ocl_learner_free(ocl_learner* learner);

OCL_API ocl_status ocl_learner_fit_one(ocl_learner* learner, const double* x, uint32_t dim,
                                       uint32_t label);
OCL_API ocl_status ocl_learner_predict(const ocl_learner* learner, const double* x, uint32_t dim,
                                       uint32_t* out_label);
/* out_scores must hold num_classes doubles; unseen classes score -inf. */
OCL_API ocl_status ocl_learner_scores(const ocl_learner* learner, const double* x, uint32_t dim,
                                      double* out_scores, uint32_t out_len);
OCL_API ocl_status ocl_learner_stored_scalars(const ocl_learner* learner, uint64_t* out);
OCL_API ocl_status ocl_learner_save(const ocl_learner* learner, const char* dir);

/* ---- metrics ---- */

OCL_API ocl_status ocl_netscore(double accuracy_percent, double params, double seconds,
                                double alpha, double beta, double gamma, double scale,
                                double* out);

/* ---- harness ---- */

/* Runs the experiment matrix described by the JSON config at config_path.
 * workers_override 0 and out_dir_override NULL defer to the config;
 * base_seed_override < 0 defers to the config. Cell failures do not fail the
 * call; they are counted and described in failures_json (may be NULL). */
OCL_API ocl_status ocl_run_matrix(const char* config_path, uint32_t workers_override, int force,
                                  const char* out_dir_override, int64_t base_seed_override,
                                  uint64_t* executed, uint64_t* skipped, uint64_t* failed,
                                  char** failures_json);

/* Rebuilds aggregate tables from a records.jsonl file. */
OCL_API ocl_status ocl_aggregate(const char* records_jsonl_path, char** tables_json,
                                 char** tables_text);

#ifdef __cplusplus
}
#endif

#endif /* OCL_OCL_H */
