#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_set>

#include "json.hpp"

namespace ocl {
namespace {

using json = nlohmann::json;

void check_netscore_params(const NetScoreParams& p) {
  if (p.scale <= 0.0 || p.alpha <= 0.0 || p.beta < 0.0 || p.gamma < 0.0) {
    throw Error(ErrorCode::invalid_argument, "netscore parameters out of range");
  }
}

double json_number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json nan_to_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

double evaluate(const Learner& learner, const Dataset& dataset,
                const std::vector<uint64_t>& pool_sample_ids,
                const std::vector<uint32_t>& class_filter) {
  const std::unordered_set<uint32_t> allowed(class_filter.begin(), class_filter.end());
  uint64_t total = 0;
  uint64_t correct = 0;
  for (const uint64_t sample_id : pool_sample_ids) {
    const ManifestRow& row = dataset.sample_row(sample_id);
    if (allowed.find(row.class_id) == allowed.end()) continue;
    ++total;
    if (learner.predict(dataset.sample_features(sample_id)) == row.class_id) ++correct;
  }
  if (total == 0) {
    throw Error(ErrorCode::invalid_argument, "evaluation pool is empty after class filtering");
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double harmonic_mean(double a, double b) {
  if (a < 0.0 || b < 0.0) {
    throw Error(ErrorCode::invalid_argument, "harmonic mean needs non-negative inputs");
  }
  const double sum = a + b;
  return sum == 0.0 ? 0.0 : 2.0 * a * b / sum;
}

double mean_across_backbones(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "mean of an empty list");
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double netscore(double accuracy_percent, double params, double seconds, const NetScoreParams& p) {
  check_netscore_params(p);
  if (accuracy_percent <= 0.0 || params <= 0.0 || seconds <= 0.0) {
    throw Error(ErrorCode::invalid_argument, "netscore needs positive accuracy/params/seconds");
  }
  return p.scale *
         (p.alpha * std::log(accuracy_percent) - p.beta * std::log(params) - p.gamma * std::log(seconds));
}

double netscore_project_samples(double accuracy_percent, double params, double seconds,
                                double factor, const NetScoreParams& p) {
  if (factor < 1.0) {
    throw Error(ErrorCode::invalid_argument, "sample projection factor must be >= 1");
  }
  return netscore(accuracy_percent, params, seconds * factor, p);
}

double netscore_project_classes(double accuracy_percent, double seconds, uint64_t backbone_params,
                                const std::string& learner_kind, uint32_t current_classes,
                                uint32_t projected_classes, uint32_t dim,
                                const LearnerConfig& config, const NetScoreParams& p) {
  if (projected_classes < current_classes) {
    throw Error(ErrorCode::invalid_argument, "class projection must not shrink the label space");
  }
  const uint64_t stored = stored_scalars_model(learner_kind, projected_classes, dim, config);
  return netscore(accuracy_percent, static_cast<double>(backbone_params + stored), seconds, p);
}

std::vector<double> normalize_for_summary(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "nothing to normalize");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(values.size(), 0.0);
  if (hi == lo) return out;
  for (size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / (hi - lo);
  return out;
}

std::string ExperimentRecord::to_json_line() const {
  json j;
  j["learner"] = learner;
  j["ordering"] = ordering;
  j["backbone"] = {{"name", backbone.name},
                   {"feature_dim", backbone.feature_dim},
                   {"param_count", backbone.param_count}};
  j["seed"] = seed;
  j["final_acc"] = final_accuracy;
  json curve_json = json::array();
  for (const auto& point : curve) {
    curve_json.push_back({{"position", point.position}, {"acc", point.accuracy}});
  }
  j["curve"] = std::move(curve_json);
  j["wall_seconds"] = wall_seconds;
  j["train_seconds"] = train_seconds;
  j["eval_seconds"] = eval_seconds;
  j["params"] = param_count;
  j["netscore"] = nan_to_null(netscore);
  return j.dump();
}

ExperimentRecord ExperimentRecord::from_json_line(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::format, "invalid record JSON line");
  ExperimentRecord r;
  r.learner = j.at("learner").get<std::string>();
  r.ordering = j.at("ordering").get<std::string>();
  const json& b = j.at("backbone");
  r.backbone.name = b.at("name").get<std::string>();
  r.backbone.feature_dim = b.at("feature_dim").get<uint32_t>();
  r.backbone.param_count = b.at("param_count").get<uint64_t>();
  r.seed = j.at("seed").get<uint64_t>();
  r.final_accuracy = j.at("final_acc").get<double>();
  for (const auto& point : j.at("curve")) {
    r.curve.push_back({point.at("position").get<uint64_t>(), point.at("acc").get<double>()});
  }
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.train_seconds = j.value("train_seconds", 0.0);
  r.eval_seconds = j.value("eval_seconds", 0.0);
  r.param_count = j.at("params").get<uint64_t>();
  r.netscore = json_number_or_nan(j.at("netscore"));
  return r;
}

std::string ExperimentRecord::csv_header() {
  return "learner,ordering,backbone,seed,final_acc,seconds,params,netscore";
}

std::string ExperimentRecord::to_csv_line() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%.6f,%.6f,%llu,%.6f", learner.c_str(),
                ordering.c_str(), backbone.name.c_str(),
                static_cast<unsigned long long>(seed), final_accuracy, wall_seconds,
                static_cast<unsigned long long>(param_count), netscore);
  return buf;
}

}  // namespace ocl
