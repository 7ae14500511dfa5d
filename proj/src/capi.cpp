#include "ocl/ocl.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <set>
#include <string>

#include "error.hpp"
#include "feature_store.hpp"
#include "harness.hpp"
#include "json.hpp"
#include "learners.hpp"
#include "metrics.hpp"

namespace {

using json = nlohmann::json;

thread_local std::string g_last_error;

ocl_status status_from(const ocl::Error& e) {
  switch (e.code()) {
    case ocl::ErrorCode::invalid_argument: return OCL_ERR_INVALID_ARGUMENT;
    case ocl::ErrorCode::io: return OCL_ERR_IO;
    case ocl::ErrorCode::format: return OCL_ERR_FORMAT;
    case ocl::ErrorCode::out_of_range: return OCL_ERR_OUT_OF_RANGE;
    case ocl::ErrorCode::state: return OCL_ERR_STATE;
    case ocl::ErrorCode::numeric: return OCL_ERR_NUMERIC;
  }
  return OCL_ERR_UNKNOWN;
}

template <typename F>
ocl_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return OCL_OK;
  } catch (const ocl::Error& e) {
    g_last_error = e.what();
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return OCL_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return OCL_ERR_UNKNOWN;
  }
}

ocl_status fail_invalid(const char* message) {
  g_last_error = message;
  return OCL_ERR_INVALID_ARGUMENT;
}

char* heap_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ocl::SynthParams synth_params_from_json(const char* params_json) {
  ocl::SynthParams params;
  if (params_json == nullptr || *params_json == '\0') return params;
  json j = json::parse(params_json, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ocl::Error(ocl::ErrorCode::format, "synthesis params must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "num_classes") params.num_classes = value.get<uint32_t>();
    else if (key == "dim") params.dim = value.get<uint32_t>();
    else if (key == "train_per_class") params.train_per_class = value.get<uint32_t>();
    else if (key == "test_per_class") params.test_per_class = value.get<uint32_t>();
    else if (key == "class_mean_scale") params.class_mean_scale = value.get<double>();
    else if (key == "noise_sigma") params.noise_sigma = value.get<double>();
    else if (key == "group_size") params.group_size = value.get<uint32_t>();
    else if (key == "seed") params.seed = value.get<uint64_t>();
    else throw ocl::Error(ocl::ErrorCode::format, "unknown synthesis key: " + key);
  }
  return params;
}

json dataset_report(const ocl::Dataset& dataset) {
  uint64_t train = 0;
  uint64_t test = 0;
  std::set<uint64_t> groups;
  for (const auto& row : dataset.manifest().rows()) {
    (row.split == ocl::Split::train ? train : test) += 1;
    if (row.group_id != ocl::kNoGroup) groups.insert(row.group_id);
  }
  return json{{"n_samples", dataset.features().num_rows()},
              {"dim", dataset.dim()},
              {"num_classes", dataset.num_classes()},
              {"train", train},
              {"test", test},
              {"groups", groups.size()}};
}

}  // namespace

struct ocl_dataset {
  ocl::Dataset impl;
};

struct ocl_learner {
  std::unique_ptr<ocl::Learner> impl;
};

extern "C" {

const char* ocl_version(void) { return "0.1.0"; }

const char* ocl_last_error(void) { return g_last_error.c_str(); }

void ocl_string_free(char* s) { std::free(s); }

ocl_status ocl_dataset_open(const char* features_path, const char* manifest_path,
                            ocl_dataset** out) {
  if (features_path == nullptr || manifest_path == nullptr || out == nullptr) {
    return fail_invalid("ocl_dataset_open: NULL argument");
  }
  *out = nullptr;
  return guarded([&] {
    *out = new ocl_dataset{ocl::Dataset::open(features_path, manifest_path)};
  });
}

void ocl_dataset_close(ocl_dataset* dataset) { delete dataset; }

ocl_status ocl_dataset_info(const ocl_dataset* dataset, uint64_t* n_samples, uint32_t* dim,
                            uint32_t* num_classes) {
  if (dataset == nullptr) return fail_invalid("ocl_dataset_info: NULL dataset");
  return guarded([&] {
    if (n_samples != nullptr) *n_samples = dataset->impl.features().num_rows();
    if (dim != nullptr) *dim = dataset->impl.dim();
    if (num_classes != nullptr) *num_classes = dataset->impl.num_classes();
  });
}

ocl_status ocl_synthesize(const char* params_json, const char* features_path,
                          const char* manifest_path) {
  if (features_path == nullptr || manifest_path == nullptr) {
    return fail_invalid("ocl_synthesize: NULL path");
  }
  return guarded([&] {
    ocl::synthesize_to_files(synth_params_from_json(params_json), features_path, manifest_path);
  });
}

ocl_status ocl_ingest_report(const char* features_path, const char* manifest_path,
                             char** report_json) {
  if (features_path == nullptr || manifest_path == nullptr) {
    return fail_invalid("ocl_ingest_report: NULL path");
  }
  return guarded([&] {
    const ocl::Dataset dataset = ocl::Dataset::open(features_path, manifest_path);
    if (report_json != nullptr) *report_json = heap_string(dataset_report(dataset).dump(2));
  });
}

ocl_status ocl_ingest_csv(const char* csv_path, const char* features_path,
                          const char* manifest_path, char** report_json) {
  if (csv_path == nullptr || features_path == nullptr || manifest_path == nullptr) {
    return fail_invalid("ocl_ingest_csv: NULL path");
  }
  return guarded([&] {
    ocl::ingest_csv(csv_path, features_path, manifest_path);
    const ocl::Dataset dataset = ocl::Dataset::open(features_path, manifest_path);
    if (report_json != nullptr) *report_json = heap_string(dataset_report(dataset).dump(2));
  });
}

ocl_status ocl_learner_create(const char* kind, uint32_t dim, uint32_t num_classes,
                              const char* config_json, ocl_learner** out) {
  if (kind == nullptr || out == nullptr) return fail_invalid("ocl_learner_create: NULL argument");
  *out = nullptr;
  return guarded([&] {
    ocl::LearnerConfig config;
    if (config_json != nullptr && *config_json != '\0') {
      config = ocl::learner_config_from_json(config_json);
    }
    *out = new ocl_learner{ocl::make_learner(kind, dim, num_classes, config)};
  });
}

ocl_status ocl_learner_load(const char* checkpoint_dir, ocl_learner** out) {
  if (checkpoint_dir == nullptr || out == nullptr) {
    return fail_invalid("ocl_learner_load: NULL argument");
  }
  *out = nullptr;
  return guarded([&] { *out = new ocl_learner{ocl::load_learner(checkpoint_dir)}; });
}

void ocl_learner_free(ocl_learner* learner) { delete learner; }

ocl_status ocl_learner_fit_one(ocl_learner* learner, const double* x, uint32_t dim,
                               uint32_t label) {
  if (learner == nullptr || x == nullptr) return fail_invalid("ocl_learner_fit_one: NULL argument");
  return guarded([&] {
    learner->impl->fit_one(Eigen::Map<const Eigen::VectorXd>(x, dim), label);
  });
}

ocl_status ocl_learner_predict(const ocl_learner* learner, const double* x, uint32_t dim,
                               uint32_t* out_label) {
  if (learner == nullptr || x == nullptr || out_label == nullptr) {
    return fail_invalid("ocl_learner_predict: NULL argument");
  }
  return guarded([&] {
    *out_label = learner->impl->predict(Eigen::Map<const Eigen::VectorXd>(x, dim));
  });
}

ocl_status ocl_learner_scores(const ocl_learner* learner, const double* x, uint32_t dim,
                              double* out_scores, uint32_t out_len) {
  if (learner == nullptr || x == nullptr || out_scores == nullptr) {
    return fail_invalid("ocl_learner_scores: NULL argument");
  }
  return guarded([&] {
    if (out_len < learner->impl->num_classes()) {
      throw ocl::Error(ocl::ErrorCode::invalid_argument,
                       "scores buffer holds " + std::to_string(out_len) + " slots, need " +
                           std::to_string(learner->impl->num_classes()));
    }
    const Eigen::VectorXd s = learner->impl->scores(Eigen::Map<const Eigen::VectorXd>(x, dim));
    for (uint32_t k = 0; k < learner->impl->num_classes(); ++k) out_scores[k] = s[k];
  });
}

ocl_status ocl_learner_stored_scalars(const ocl_learner* learner, uint64_t* out) {
  if (learner == nullptr || out == nullptr) {
    return fail_invalid("ocl_learner_stored_scalars: NULL argument");
  }
  return guarded([&] { *out = learner->impl->stored_scalars(); });
}

ocl_status ocl_learner_save(const ocl_learner* learner, const char* dir) {
  if (learner == nullptr || dir == nullptr) return fail_invalid("ocl_learner_save: NULL argument");
  return guarded([&] { learner->impl->save(dir); });
}

ocl_status ocl_netscore(double accuracy_percent, double params, double seconds, double alpha,
                        double beta, double gamma, double scale, double* out) {
  if (out == nullptr) return fail_invalid("ocl_netscore: NULL output");
  return guarded([&] {
    *out = ocl::netscore(accuracy_percent, params, seconds, {alpha, beta, gamma, scale});
  });
}

ocl_status ocl_run_matrix(const char* config_path, uint32_t workers_override, int force,
                          const char* out_dir_override, int64_t base_seed_override,
                          uint64_t* executed, uint64_t* skipped, uint64_t* failed,
                          char** failures_json) {
  if (config_path == nullptr) return fail_invalid("ocl_run_matrix: NULL config path");
  return guarded([&] {
    ocl::ExperimentConfig config = ocl::ExperimentConfig::load(config_path);
    if (workers_override > 0) config.workers = workers_override;
    if (out_dir_override != nullptr && *out_dir_override != '\0') {
      config.out_dir = out_dir_override;
    }
    if (base_seed_override >= 0) config.base_seed = static_cast<uint64_t>(base_seed_override);
    const ocl::MatrixResult result = ocl::run_matrix(config, force != 0);
    if (executed != nullptr) *executed = result.executed;
    if (skipped != nullptr) *skipped = result.skipped;
    if (failed != nullptr) *failed = result.failures.size();
    if (failures_json != nullptr) {
      json arr = json::array();
      for (const auto& failure : result.failures) {
        arr.push_back({{"backbone", failure.backbone},
                       {"learner", failure.learner},
                       {"ordering", failure.ordering},
                       {"seed", failure.seed},
                       {"message", failure.message}});
      }
      *failures_json = heap_string(arr.dump(2));
    }
  });
}

ocl_status ocl_aggregate(const char* records_jsonl_path, char** tables_json, char** tables_text) {
  if (records_jsonl_path == nullptr) return fail_invalid("ocl_aggregate: NULL records path");
  return guarded([&] {
    const auto records = ocl::load_records(records_jsonl_path);
    const ocl::AggregateTables tables = ocl::aggregate_records(records);
    if (tables_json != nullptr) *tables_json = heap_string(ocl::tables_to_json(tables));
    if (tables_text != nullptr) *tables_text = heap_string(ocl::render_tables(tables));
  });
}

}  // extern "C"
