#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feature_store.hpp"
#include "learners.hpp"

namespace ocl {

struct NetScoreParams {
  double alpha = 2.0;
  double beta = 0.25;
  double gamma = 0.25;
  double scale = 20.0;
};

// Top-1 accuracy in percent over the pool samples whose class lies in
// class_filter. Throws when nothing survives the filter.
double evaluate(const Learner& learner, const Dataset& dataset,
                const std::vector<uint64_t>& pool_sample_ids,
                const std::vector<uint32_t>& class_filter);

// 2ab/(a+b); defined as 0 when a + b = 0. Inputs must be non-negative.
double harmonic_mean(double a, double b);

double mean_across_backbones(const std::vector<double>& values);

// Omega = scale * ln(a^alpha / (p^beta * c^gamma)), natural log, accuracy in
// percent. All three inputs must be positive.
double netscore(double accuracy_percent, double params, double seconds,
                const NetScoreParams& p = {});

// Omega with compute scaled by factor >= 1; accuracy and params unchanged.
double netscore_project_samples(double accuracy_percent, double params, double seconds,
                                double factor, const NetScoreParams& p = {});

// Omega with params re-derived for a larger label space: backbone parameters
// plus the learner's stored-scalar model at projected_classes.
double netscore_project_classes(double accuracy_percent, double seconds,
                                uint64_t backbone_params, const std::string& learner_kind,
                                uint32_t current_classes, uint32_t projected_classes, uint32_t dim,
                                const LearnerConfig& config, const NetScoreParams& p = {});

// Affine min->0, max->1 rescaling; all-equal inputs map to all zeros.
std::vector<double> normalize_for_summary(const std::vector<double>& values);

struct CurvePoint {
  uint64_t position = 0;  // samples consumed at the checkpoint
  double accuracy = 0.0;  // percent
};

struct ExperimentRecord {
  std::string learner;
  std::string ordering;
  BackboneConstant backbone;
  uint64_t seed = 0;
  double final_accuracy = 0.0;
  std::vector<CurvePoint> curve;
  double wall_seconds = 0.0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  uint64_t param_count = 0;
  double netscore = 0.0;  // NaN when undefined (non-positive inputs)

  std::string to_json_line() const;
  static ExperimentRecord from_json_line(const std::string& line);

  static std::string csv_header();
  std::string to_csv_line() const;
};

}  // namespace ocl
