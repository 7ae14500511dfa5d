#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feature_store.hpp"
#include "learners.hpp"
#include "metrics.hpp"
#include "orderings.hpp"

namespace ocl {

struct DatasetSpec {
  std::string features_path;
  std::string manifest_path;
  BackboneConstant backbone;
};

struct LearnerSpec {
  std::string kind;
  std::string name;  // record label; defaults to kind (distinguishes e.g. replay quotas)
  LearnerConfig config;
};

struct OrderingSpec {
  OrderingKind kind = OrderingKind::iid;
  uint32_t k = 5;  // k_shot_class_iid only
};

struct ExperimentConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<LearnerSpec> learners;
  std::vector<OrderingSpec> orderings;
  std::vector<uint64_t> seeds = {1, 2, 3};
  uint64_t base_seed = 0;
  std::string out_dir = "out";
  CheckpointPolicy checkpoint_policy = CheckpointPolicy::final_only;
  NetScoreParams netscore;
  uint32_t workers = 1;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

OrderingPlan build_plan(const Manifest& manifest, const OrderingSpec& ordering, uint64_t plan_seed,
                        CheckpointPolicy policy);

// Trains one (learner, ordering, seed) cell over the dataset stream,
// evaluating at every plan checkpoint. Deterministic given the seeds (timing
// aside). Sub-seeds: cell = mix(base, run seed); plan = mix(cell, 1);
// learner = mix(cell, 2).
ExperimentRecord run_cell(const Dataset& dataset, const BackboneConstant& backbone,
                          const LearnerSpec& learner, const OrderingSpec& ordering,
                          uint64_t run_seed, uint64_t base_seed, CheckpointPolicy policy,
                          const NetScoreParams& netscore_params);

struct CellFailure {
  std::string backbone;
  std::string learner;
  std::string ordering;
  uint64_t seed = 0;
  std::string message;
};

struct MatrixResult {
  std::vector<ExperimentRecord> records;  // newly run plus previously recorded
  std::vector<CellFailure> failures;
  uint64_t executed = 0;
  uint64_t skipped = 0;
};

// Runs every (dataset x learner x ordering x seed) cell, in parallel up to
// config.workers. Records append to <out_dir>/records.jsonl and records.csv;
// cells already on disk are skipped unless force. Failures are collected,
// never fatal to the matrix. Aggregate tables land in <out_dir>/aggregates.*.
MatrixResult run_matrix(const ExperimentConfig& config, bool force);

struct OrderingTableRow {
  std::string learner;
  std::vector<double> per_backbone;  // NaN when the cell is absent
  double mean = 0.0;
};

struct OrderingTable {
  std::string ordering;
  std::vector<std::string> backbones;
  std::vector<OrderingTableRow> rows;
};

struct HmeanRow {
  std::string learner;
  double iid = 0.0;
  double class_iid = 0.0;
  double hmean = 0.0;
};

struct AggregateTables {
  std::vector<OrderingTable> ordering_tables;
  std::vector<HmeanRow> hmean_rows;
};

// Seed means per (learner, ordering, backbone), then means across backbones;
// the iid/class-iid table takes its harmonic mean over the unrounded
// cross-backbone means. The last record wins for duplicated cells.
AggregateTables aggregate_records(const std::vector<ExperimentRecord>& records);

std::string render_tables(const AggregateTables& tables);
std::string tables_to_json(const AggregateTables& tables);

std::vector<ExperimentRecord> load_records(const std::string& jsonl_path);

}  // namespace ocl
