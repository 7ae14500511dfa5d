#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "harness.hpp"
#include "json.hpp"

using namespace ocl;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("ocl_harness_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

SynthParams easy_params() {
  SynthParams p;
  p.num_classes = 3;
  p.dim = 4;
  p.train_per_class = 30;
  p.test_per_class = 10;
  p.class_mean_scale = 10.0;
  p.noise_sigma = 0.5;
  p.group_size = 5;
  p.seed = 9;
  return p;
}

size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

ExperimentRecord stub_record(const std::string& learner, const std::string& ordering,
                             const std::string& backbone, uint64_t seed, double final_acc) {
  ExperimentRecord r;
  r.learner = learner;
  r.ordering = ordering;
  r.backbone = {backbone, 4, 1000};
  r.seed = seed;
  r.final_accuracy = final_acc;
  r.curve = {{10, final_acc}};
  r.wall_seconds = 1.0;
  r.param_count = 1015;
  r.netscore = 0.0;
  return r;
}

}  // namespace

TEST_CASE("experiment config parses defaults, overrides and both dataset spellings") {
  const std::string text = R"({
    "dataset": {
      "features": "f.bin",
      "manifest": "m.csv",
      "backbone": {"name": "small", "feature_dim": 576, "param_count": 950048}
    },
    "learner_defaults": {"lr": 0.5, "replay_quota": 11},
    "learners": [
      "ncm",
      {"kind": "finetune", "weight_decay": 0.25},
      {"kind": "replay", "name": "replay_big", "lr": 0.125},
      {"kind": "replay", "name": "replay_small", "replay_quota": 2}
    ],
    "orderings": ["iid", {"kind": "k_shot_class_iid", "k": 7}],
    "seeds": [4, 5],
    "base_seed": 99,
    "out_dir": "results",
    "checkpoint_policy": "per_block",
    "netscore": {"beta": 0.5, "gamma": 0.5},
    "workers": 2
  })";
  const ExperimentConfig config = ExperimentConfig::from_json(text);

  REQUIRE(config.datasets.size() == 1);
  CHECK(config.datasets[0].features_path == "f.bin");
  CHECK(config.datasets[0].backbone.param_count == 950048);

  REQUIRE(config.learners.size() == 4);
  CHECK(config.learners[0].kind == "ncm");
  CHECK(config.learners[0].name == "ncm");
  CHECK(config.learners[0].config.lr == 0.5);  // defaults reach plain-string entries
  CHECK(config.learners[1].config.lr == 0.5);
  CHECK(config.learners[1].config.weight_decay == 0.25);
  CHECK(config.learners[2].name == "replay_big");
  CHECK(config.learners[2].config.lr == 0.125);  // entry overrides the default
  CHECK(config.learners[2].config.replay_quota == 11);
  CHECK(config.learners[3].config.replay_quota == 2);

  REQUIRE(config.orderings.size() == 2);
  CHECK(config.orderings[1].kind == OrderingKind::k_shot_class_iid);
  CHECK(config.orderings[1].k == 7);

  CHECK(config.seeds == std::vector<uint64_t>{4, 5});
  CHECK(config.base_seed == 99);
  CHECK(config.checkpoint_policy == CheckpointPolicy::per_block);
  CHECK(config.netscore.alpha == 2.0);
  CHECK(config.netscore.beta == 0.5);
  CHECK(config.workers == 2);

  // serialized form parses back to the same config
  const ExperimentConfig again = ExperimentConfig::from_json(config.to_json());
  CHECK(again.to_json() == config.to_json());
}

TEST_CASE("experiment config rejects malformed input") {
  const std::string base = R"({
    "dataset": {"features": "f", "manifest": "m",
                "backbone": {"name": "b", "feature_dim": 4, "param_count": 10}},
    "learners": ["ncm"], "orderings": ["iid"]})";
  CHECK_NOTHROW(ExperimentConfig::from_json(base));

  auto mutate = [&](const std::string& key, const std::string& value) {
    nlohmann::json j = nlohmann::json::parse(base);
    j[key] = nlohmann::json::parse(value);
    return j.dump();
  };
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(mutate("typo_key", "1")),
                       doctest::Contains("unknown experiment config key"), Error);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(mutate("learners", R"(["ncm", "ncm"])")),
                       doctest::Contains("duplicate learner name"), Error);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(mutate("learners", "[13]")),
                       doctest::Contains("strings or objects"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("learners", "[]")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("orderings", "[]")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("seeds", "[]")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("workers", "0")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("netscore", R"({"delta": 1})")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(mutate("checkpoint_policy", "\"sometimes\"")), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json("[]"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{nope"), Error);
  CHECK_THROWS_AS(ExperimentConfig::load("/definitely/not/here.json"), Error);

  nlohmann::json no_data = nlohmann::json::parse(base);
  no_data.erase("dataset");
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(no_data.dump()),
                       doctest::Contains("needs a dataset"), Error);
}

TEST_CASE("run_cell streams the plan, evaluates checkpoints and fills the record") {
  const Dataset dataset = synthesize_gaussian_dataset(easy_params());
  const BackboneConstant backbone{"small", 4, 100000};
  LearnerSpec ncm;
  ncm.kind = "ncm";
  ncm.name = "ncm";

  SUBCASE("single final checkpoint under iid") {
    const ExperimentRecord record = run_cell(dataset, backbone, ncm, {OrderingKind::iid}, 1, 0,
                                             CheckpointPolicy::final_only, {});
    CHECK(record.learner == "ncm");
    CHECK(record.ordering == "iid");
    CHECK(record.backbone.name == "small");
    CHECK(record.seed == 1);
    REQUIRE(record.curve.size() == 1);
    CHECK(record.curve[0].position == 90);
    CHECK(record.final_accuracy == record.curve[0].accuracy);
    CHECK(record.final_accuracy > 95.0);  // well-separated blobs
    CHECK(record.param_count == 100000 + 3 * 4 + 3);
    CHECK(record.wall_seconds > 0.0);
    CHECK(record.train_seconds + record.eval_seconds == doctest::Approx(record.wall_seconds));
    CHECK(std::isfinite(record.netscore));

    // accuracy is a pure function of the seeds
    const ExperimentRecord again = run_cell(dataset, backbone, ncm, {OrderingKind::iid}, 1, 0,
                                            CheckpointPolicy::final_only, {});
    CHECK(again.final_accuracy == record.final_accuracy);
  }

  SUBCASE("per-class checkpoints under the class ordering") {
    const ExperimentRecord record = run_cell(dataset, backbone, ncm, {OrderingKind::class_iid}, 2,
                                             0, CheckpointPolicy::per_block, {});
    REQUIRE(record.curve.size() == 3);
    CHECK(record.curve[0].position == 30);
    CHECK(record.curve[1].position == 60);
    CHECK(record.curve[2].position == 90);
    // early checkpoints only see the classes presented so far, still separable
    for (const auto& point : record.curve) CHECK(point.accuracy > 95.0);
  }

  SUBCASE("k-shot evaluates on held-out train plus test") {
    const ExperimentRecord record = run_cell(dataset, backbone, ncm,
                                             {OrderingKind::k_shot_class_iid, 2}, 3, 0,
                                             CheckpointPolicy::final_only, {});
    REQUIRE(record.curve.size() == 3);
    CHECK(record.curve.back().position == 6);  // two shots per class
  }
}

TEST_CASE("run_matrix executes the grid, resumes and isolates failures") {
  const std::string dir = temp_dir("matrix");
  const WriteResult written =
      synthesize_to_files(easy_params(), dir + "/f.bin", dir + "/m.csv");
  REQUIRE(written.header.n_samples == 120);

  ExperimentConfig config;
  config.datasets.push_back({dir + "/f.bin", dir + "/m.csv", {"small", 4, 100000}});
  config.learners.push_back({"ncm", "ncm", {}});
  config.learners.push_back({"slda", "slda", {}});
  config.orderings.push_back({OrderingKind::iid});
  config.orderings.push_back({OrderingKind::class_iid});
  config.seeds = {1, 2};
  config.out_dir = dir + "/out";

  const MatrixResult first = run_matrix(config, false);
  CHECK(first.executed == 8);
  CHECK(first.skipped == 0);
  CHECK(first.failures.empty());
  CHECK(first.records.size() == 8);
  CHECK(count_lines(config.out_dir + "/records.jsonl") == 8);
  CHECK(count_lines(config.out_dir + "/records.csv") == 9);  // header + rows
  CHECK(fs::exists(config.out_dir + "/aggregates.json"));
  CHECK(fs::exists(config.out_dir + "/aggregates.txt"));

  // the second pass finds every cell already on disk
  const MatrixResult second = run_matrix(config, false);
  CHECK(second.executed == 0);
  CHECK(second.skipped == 8);
  CHECK(second.records.size() == 8);

  // force reruns everything and appends
  const MatrixResult forced = run_matrix(config, true);
  CHECK(forced.executed == 8);
  CHECK(count_lines(config.out_dir + "/records.jsonl") == 16);

  // an unknown learner kind fails its cells without sinking the matrix
  config.learners.push_back({"svm", "svm", {}});
  const MatrixResult mixed = run_matrix(config, false);
  CHECK(mixed.executed == 0);
  CHECK(mixed.skipped == 8);
  REQUIRE(mixed.failures.size() == 4);
  CHECK(mixed.failures[0].learner == "svm");
  CHECK(mixed.failures[0].message.find("unknown learner kind") != std::string::npos);

  // a backbone whose dimension disagrees with the stored features is fatal
  config.learners.pop_back();
  config.datasets[0].backbone.feature_dim = 5;
  CHECK_THROWS_WITH_AS(run_matrix(config, false), doctest::Contains("expects dim"), Error);

  CHECK_THROWS_AS(load_records(dir + "/missing.jsonl"), Error);
}

TEST_CASE("aggregation means seeds then backbones, newest record winning") {
  std::vector<ExperimentRecord> records;
  records.push_back(stub_record("A", "iid", "b1", 1, 80.0));
  records.push_back(stub_record("A", "iid", "b1", 2, 90.0));
  records.push_back(stub_record("A", "iid", "b2", 1, 70.0));
  records.push_back(stub_record("A", "class_iid", "b1", 1, 60.0));
  records.push_back(stub_record("A", "class_iid", "b1", 2, 70.0));
  records.push_back(stub_record("A", "class_iid", "b2", 1, 55.0));
  records.push_back(stub_record("B", "iid", "b1", 1, 40.0));
  records.push_back(stub_record("A", "iid", "b1", 1, 82.0));  // rerun replaces the first row

  const AggregateTables tables = aggregate_records(records);

  REQUIRE(tables.ordering_tables.size() == 2);
  const OrderingTable& iid = tables.ordering_tables[0];
  CHECK(iid.ordering == "iid");
  CHECK(iid.backbones == std::vector<std::string>{"b1", "b2"});
  REQUIRE(iid.rows.size() == 2);
  CHECK(iid.rows[0].learner == "A");
  CHECK(iid.rows[0].per_backbone[0] == doctest::Approx(86.0));  // (82 + 90) / 2
  CHECK(iid.rows[0].per_backbone[1] == doctest::Approx(70.0));
  CHECK(iid.rows[0].mean == doctest::Approx(78.0));
  CHECK(iid.rows[1].learner == "B");
  CHECK(iid.rows[1].per_backbone[0] == doctest::Approx(40.0));
  CHECK(std::isnan(iid.rows[1].per_backbone[1]));
  CHECK(iid.rows[1].mean == doctest::Approx(40.0));  // mean over present backbones

  const OrderingTable& blocked = tables.ordering_tables[1];
  CHECK(blocked.ordering == "class_iid");
  REQUIRE(blocked.rows.size() == 1);  // learner B never ran class_iid
  CHECK(blocked.rows[0].mean == doctest::Approx(60.0));

  // harmonic mean over the unrounded cross-backbone means, learners lacking
  // either ordering dropped
  REQUIRE(tables.hmean_rows.size() == 1);
  CHECK(tables.hmean_rows[0].learner == "A");
  CHECK(tables.hmean_rows[0].iid == doctest::Approx(78.0));
  CHECK(tables.hmean_rows[0].class_iid == doctest::Approx(60.0));
  CHECK(tables.hmean_rows[0].hmean == doctest::Approx(2.0 * 78.0 * 60.0 / 138.0).epsilon(1e-12));

  // absent cells render as dashes and serialize as nulls
  const std::string text = render_tables(tables);
  CHECK(text.find("ordering=iid") != std::string::npos);
  CHECK(text.find("      -") != std::string::npos);
  CHECK(text.find("h-mean") != std::string::npos);
  const nlohmann::json j = nlohmann::json::parse(tables_to_json(tables));
  CHECK(j.at("ordering_tables").at(0).at("rows").at(1).at("per_backbone").at(1).is_null());
  CHECK(j.at("hmean").at(0).at("learner").get<std::string>() == "A");
}

TEST_CASE("build_plan dispatches on the ordering kind") {
  const Dataset dataset = synthesize_gaussian_dataset(easy_params());
  for (const auto kind : {OrderingKind::iid, OrderingKind::class_iid, OrderingKind::instance,
                          OrderingKind::low_shot_instance, OrderingKind::k_shot_class_iid}) {
    OrderingSpec spec;
    spec.kind = kind;
    spec.k = 2;
    const OrderingPlan plan = build_plan(dataset.manifest(), spec, 5, CheckpointPolicy::final_only);
    CHECK(plan.kind == kind);
    CHECK(!plan.sequence.empty());
    CHECK(!plan.checkpoints.empty());
  }
}
