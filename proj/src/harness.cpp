#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rng.hpp"

namespace ocl {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* policy_name(CheckpointPolicy policy) {
  return policy == CheckpointPolicy::final_only ? "final_only" : "per_block";
}

CheckpointPolicy policy_from_name(const std::string& name) {
  if (name == "final_only") return CheckpointPolicy::final_only;
  if (name == "per_block") return CheckpointPolicy::per_block;
  throw Error(ErrorCode::format, "unknown checkpoint policy: " + name);
}

BackboneConstant backbone_from_json(const json& j) {
  BackboneConstant b;
  b.name = j.at("name").get<std::string>();
  b.feature_dim = j.at("feature_dim").get<uint32_t>();
  b.param_count = j.at("param_count").get<uint64_t>();
  if (b.feature_dim == 0) throw Error(ErrorCode::format, "backbone feature_dim must be positive");
  return b;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec spec;
  spec.features_path = j.at("features").get<std::string>();
  spec.manifest_path = j.at("manifest").get<std::string>();
  spec.backbone = backbone_from_json(j.at("backbone"));
  return spec;
}

LearnerSpec learner_from_json(const json& entry, const json& defaults) {
  LearnerSpec spec;
  json merged = defaults;
  if (entry.is_string()) {
    spec.kind = entry.get<std::string>();
  } else if (entry.is_object()) {
    spec.kind = entry.at("kind").get<std::string>();
    for (const auto& [key, value] : entry.items()) {
      if (key == "kind") continue;
      if (key == "name") {
        spec.name = value.get<std::string>();
        continue;
      }
      merged[key] = value;
    }
  } else {
    throw Error(ErrorCode::format, "learner entries must be strings or objects");
  }
  if (spec.name.empty()) spec.name = spec.kind;
  spec.config = learner_config_from_json(merged.dump());
  return spec;
}

OrderingSpec ordering_from_json(const json& entry) {
  OrderingSpec spec;
  if (entry.is_string()) {
    spec.kind = ordering_from_name(entry.get<std::string>());
  } else if (entry.is_object()) {
    spec.kind = ordering_from_name(entry.at("kind").get<std::string>());
    for (const auto& [key, value] : entry.items()) {
      if (key == "kind") continue;
      if (key == "k") {
        spec.k = value.get<uint32_t>();
        continue;
      }
      throw Error(ErrorCode::format, "unknown ordering key: " + key);
    }
  } else {
    throw Error(ErrorCode::format, "ordering entries must be strings or objects");
  }
  return spec;
}

std::string cell_key(const std::string& backbone, const std::string& learner,
                     const std::string& ordering, uint64_t seed) {
  return backbone + "|" + learner + "|" + ordering + "|" + std::to_string(seed);
}

std::string record_key(const ExperimentRecord& r) {
  return cell_key(r.backbone.name, r.learner, r.ordering, r.seed);
}

void validate(const ExperimentConfig& config) {
  if (config.datasets.empty()) throw Error(ErrorCode::invalid_argument, "config needs a dataset");
  if (config.learners.empty()) throw Error(ErrorCode::invalid_argument, "config needs learners");
  if (config.orderings.empty()) throw Error(ErrorCode::invalid_argument, "config needs orderings");
  if (config.seeds.empty()) throw Error(ErrorCode::invalid_argument, "config needs seeds");
  if (config.workers == 0) throw Error(ErrorCode::invalid_argument, "workers must be >= 1");
  std::set<std::string> names;
  for (const auto& learner : config.learners) {
    if (!names.insert(learner.name).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate learner name: " + learner.name);
    }
  }
}

double seed_mean(const std::vector<double>& values) {
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["datasets"] = json::array();
  for (const auto& d : datasets) {
    j["datasets"].push_back({{"features", d.features_path},
                             {"manifest", d.manifest_path},
                             {"backbone",
                              {{"name", d.backbone.name},
                               {"feature_dim", d.backbone.feature_dim},
                               {"param_count", d.backbone.param_count}}}});
  }
  j["learners"] = json::array();
  for (const auto& l : learners) {
    json entry = json::parse(learner_config_to_json(l.config));
    entry["kind"] = l.kind;
    entry["name"] = l.name;
    j["learners"].push_back(std::move(entry));
  }
  j["orderings"] = json::array();
  for (const auto& o : orderings) {
    json entry{{"kind", ordering_name(o.kind)}};
    if (o.kind == OrderingKind::k_shot_class_iid) entry["k"] = o.k;
    j["orderings"].push_back(std::move(entry));
  }
  j["seeds"] = seeds;
  j["base_seed"] = base_seed;
  j["out_dir"] = out_dir;
  j["checkpoint_policy"] = policy_name(checkpoint_policy);
  j["netscore"] = {{"alpha", netscore.alpha},
                   {"beta", netscore.beta},
                   {"gamma", netscore.gamma},
                   {"scale", netscore.scale}};
  j["workers"] = workers;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::format, "invalid experiment config JSON");
  if (!j.is_object()) throw Error(ErrorCode::format, "experiment config must be a JSON object");
  ExperimentConfig config;
  json learner_defaults = json::object();
  json learner_entries = json::array();
  for (const auto& [key, value] : j.items()) {
    if (key == "dataset") {
      config.datasets.push_back(dataset_from_json(value));
    } else if (key == "datasets") {
      for (const auto& entry : value) config.datasets.push_back(dataset_from_json(entry));
    } else if (key == "learners") {
      learner_entries = value;
    } else if (key == "learner_defaults") {
      learner_defaults = value;
    } else if (key == "orderings") {
      for (const auto& entry : value) config.orderings.push_back(ordering_from_json(entry));
    } else if (key == "seeds") {
      config.seeds = value.get<std::vector<uint64_t>>();
    } else if (key == "base_seed") {
      config.base_seed = value.get<uint64_t>();
    } else if (key == "out_dir") {
      config.out_dir = value.get<std::string>();
    } else if (key == "checkpoint_policy") {
      config.checkpoint_policy = policy_from_name(value.get<std::string>());
    } else if (key == "netscore") {
      for (const auto& [nk, nv] : value.items()) {
        if (nk == "alpha") config.netscore.alpha = nv.get<double>();
        else if (nk == "beta") config.netscore.beta = nv.get<double>();
        else if (nk == "gamma") config.netscore.gamma = nv.get<double>();
        else if (nk == "scale") config.netscore.scale = nv.get<double>();
        else throw Error(ErrorCode::format, "unknown netscore key: " + nk);
      }
    } else if (key == "workers") {
      config.workers = value.get<uint32_t>();
    } else {
      throw Error(ErrorCode::format, "unknown experiment config key: " + key);
    }
  }
  for (const auto& entry : learner_entries) {
    config.learners.push_back(learner_from_json(entry, learner_defaults));
  }
  validate(config);
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

OrderingPlan build_plan(const Manifest& manifest, const OrderingSpec& ordering, uint64_t plan_seed,
                        CheckpointPolicy policy) {
  switch (ordering.kind) {
    case OrderingKind::iid: return make_iid(manifest, plan_seed);
    case OrderingKind::class_iid: return make_class_iid(manifest, plan_seed, policy);
    case OrderingKind::instance: return make_instance(manifest, plan_seed);
    case OrderingKind::low_shot_instance: return make_low_shot_instance(manifest, plan_seed);
    case OrderingKind::k_shot_class_iid:
      return make_k_shot_class_iid(manifest, ordering.k, plan_seed);
  }
  throw Error(ErrorCode::invalid_argument, "unknown ordering kind");
}

ExperimentRecord run_cell(const Dataset& dataset, const BackboneConstant& backbone,
                          const LearnerSpec& learner, const OrderingSpec& ordering,
                          uint64_t run_seed, uint64_t base_seed, CheckpointPolicy policy,
                          const NetScoreParams& netscore_params) {
  using clock = std::chrono::steady_clock;
  const uint64_t cell_seed = mix_seed(base_seed, run_seed);
  const OrderingPlan plan = build_plan(dataset.manifest(), ordering, mix_seed(cell_seed, 1), policy);

  LearnerConfig config = learner.config;
  config.seed = mix_seed(cell_seed, 2);
  std::unique_ptr<Learner> model =
      make_learner(learner.kind, dataset.dim(), dataset.num_classes(), config);

  std::vector<uint64_t> pool = plan.eval_pool_override;
  if (pool.empty()) {
    for (const auto& row : dataset.manifest().split_rows(Split::test)) {
      pool.push_back(row.sample_id);
    }
  }

  ExperimentRecord record;
  record.learner = learner.name;
  record.ordering = ordering_name(ordering.kind);
  record.backbone = backbone;
  record.seed = run_seed;

  const auto start = clock::now();
  double eval_seconds = 0.0;
  uint64_t consumed = 0;
  size_t next_checkpoint = 0;
  for (const uint64_t sample_id : plan.sequence) {
    model->fit_one(dataset.sample_features(sample_id), dataset.sample_row(sample_id).class_id);
    ++consumed;
    while (next_checkpoint < plan.checkpoints.size() &&
           plan.checkpoints[next_checkpoint].position == consumed) {
      const auto eval_start = clock::now();
      const double acc =
          evaluate(*model, dataset, pool, plan.checkpoints[next_checkpoint].seen_classes);
      eval_seconds += std::chrono::duration<double>(clock::now() - eval_start).count();
      record.curve.push_back({consumed, acc});
      ++next_checkpoint;
    }
  }
  if (next_checkpoint != plan.checkpoints.size()) {
    throw Error(ErrorCode::state, "ordering plan left unreached checkpoints");
  }
  const double wall = std::chrono::duration<double>(clock::now() - start).count();

  record.final_accuracy = record.curve.back().accuracy;
  record.wall_seconds = wall;
  record.eval_seconds = eval_seconds;
  record.train_seconds = wall - eval_seconds;
  record.param_count = backbone.param_count + model->stored_scalars();
  try {
    record.netscore = netscore(record.final_accuracy, static_cast<double>(record.param_count),
                               record.wall_seconds, netscore_params);
  } catch (const Error&) {
    record.netscore = kNaN;  // zero accuracy or zero-length run
  }
  return record;
}

std::vector<ExperimentRecord> load_records(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open records: " + jsonl_path);
  std::vector<ExperimentRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(ExperimentRecord::from_json_line(line));
  }
  return records;
}

MatrixResult run_matrix(const ExperimentConfig& config, bool force) {
  validate(config);
  fs::create_directories(config.out_dir);
  const std::string jsonl_path = config.out_dir + "/records.jsonl";
  const std::string csv_path = config.out_dir + "/records.csv";

  MatrixResult result;
  std::set<std::string> done;
  if (fs::exists(jsonl_path)) {
    result.records = load_records(jsonl_path);
    for (const auto& record : result.records) done.insert(record_key(record));
  }

  std::vector<Dataset> datasets;
  datasets.reserve(config.datasets.size());
  for (const auto& spec : config.datasets) {
    Dataset dataset = Dataset::open(spec.features_path, spec.manifest_path);
    if (dataset.dim() != spec.backbone.feature_dim) {
      throw Error(ErrorCode::invalid_argument,
                  "backbone " + spec.backbone.name + " expects dim " +
                      std::to_string(spec.backbone.feature_dim) + " but " + spec.features_path +
                      " stores dim " + std::to_string(dataset.dim()));
    }
    datasets.push_back(std::move(dataset));
  }

  struct Cell {
    size_t dataset;
    size_t learner;
    size_t ordering;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (size_t d = 0; d < config.datasets.size(); ++d) {
    for (size_t l = 0; l < config.learners.size(); ++l) {
      for (size_t o = 0; o < config.orderings.size(); ++o) {
        for (const uint64_t seed : config.seeds) {
          const std::string key =
              cell_key(config.datasets[d].backbone.name, config.learners[l].name,
                       ordering_name(config.orderings[o].kind), seed);
          if (!force && done.count(key)) {
            ++result.skipped;
            continue;
          }
          cells.push_back({d, l, o, seed});
        }
      }
    }
  }

  const bool csv_fresh = !fs::exists(csv_path);
  std::ofstream jsonl_out(jsonl_path, std::ios::binary | std::ios::app);
  std::ofstream csv_out(csv_path, std::ios::binary | std::ios::app);
  if (!jsonl_out || !csv_out) {
    throw Error(ErrorCode::io, "cannot open record outputs under " + config.out_dir);
  }
  if (csv_fresh) csv_out << ExperimentRecord::csv_header() << "\n";

  std::mutex io_mutex;
  std::atomic<size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const size_t index = cursor.fetch_add(1);
      if (index >= cells.size()) return;
      const Cell& cell = cells[index];
      const auto& spec = config.datasets[cell.dataset];
      try {
        ExperimentRecord record =
            run_cell(datasets[cell.dataset], spec.backbone, config.learners[cell.learner],
                     config.orderings[cell.ordering], cell.seed, config.base_seed,
                     config.checkpoint_policy, config.netscore);
        std::lock_guard<std::mutex> lock(io_mutex);
        jsonl_out << record.to_json_line() << "\n" << std::flush;
        csv_out << record.to_csv_line() << "\n" << std::flush;
        result.records.push_back(std::move(record));
        ++result.executed;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        result.failures.push_back({spec.backbone.name, config.learners[cell.learner].name,
                                   ordering_name(config.orderings[cell.ordering].kind), cell.seed,
                                   e.what()});
      }
    }
  };

  const size_t thread_count = std::min<size_t>(config.workers, std::max<size_t>(cells.size(), 1));
  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  for (size_t i = 0; i < thread_count; ++i) threads.emplace_back(worker);
  for (auto& thread : threads) thread.join();

  const AggregateTables tables = aggregate_records(result.records);
  std::ofstream(config.out_dir + "/aggregates.json", std::ios::binary | std::ios::trunc)
      << tables_to_json(tables);
  std::ofstream(config.out_dir + "/aggregates.txt", std::ios::binary | std::ios::trunc)
      << render_tables(tables);
  return result;
}

AggregateTables aggregate_records(const std::vector<ExperimentRecord>& records) {
  // Duplicate cells (forced reruns) resolve to the most recent record.
  std::map<std::string, ExperimentRecord> latest;
  std::vector<std::string> learner_order;
  std::vector<std::string> backbone_order;
  std::vector<std::string> ordering_order;
  for (const auto& record : records) {
    latest[record_key(record)] = record;
    if (std::find(learner_order.begin(), learner_order.end(), record.learner) == learner_order.end())
      learner_order.push_back(record.learner);
    if (std::find(backbone_order.begin(), backbone_order.end(), record.backbone.name) ==
        backbone_order.end())
      backbone_order.push_back(record.backbone.name);
    if (std::find(ordering_order.begin(), ordering_order.end(), record.ordering) ==
        ordering_order.end())
      ordering_order.push_back(record.ordering);
  }

  // (learner, ordering, backbone) -> final accuracies across seeds
  std::map<std::string, std::vector<double>> finals;
  auto group_key = [](const std::string& learner, const std::string& ordering,
                      const std::string& backbone) {
    return learner + "|" + ordering + "|" + backbone;
  };
  for (const auto& [key, record] : latest) {
    finals[group_key(record.learner, record.ordering, record.backbone.name)].push_back(
        record.final_accuracy);
  }

  AggregateTables tables;
  for (const auto& ordering : ordering_order) {
    OrderingTable table;
    table.ordering = ordering;
    table.backbones = backbone_order;
    for (const auto& learner : learner_order) {
      OrderingTableRow row;
      row.learner = learner;
      std::vector<double> present;
      for (const auto& backbone : backbone_order) {
        const auto it = finals.find(group_key(learner, ordering, backbone));
        if (it == finals.end()) {
          row.per_backbone.push_back(kNaN);
        } else {
          const double mean = seed_mean(it->second);
          row.per_backbone.push_back(mean);
          present.push_back(mean);
        }
      }
      if (present.empty()) continue;
      row.mean = mean_across_backbones(present);
      table.rows.push_back(std::move(row));
    }
    if (!table.rows.empty()) tables.ordering_tables.push_back(std::move(table));
  }

  auto cross_backbone_mean = [&](const std::string& learner,
                                 const std::string& ordering) -> double {
    std::vector<double> values;
    for (const auto& backbone : backbone_order) {
      const auto it = finals.find(group_key(learner, ordering, backbone));
      if (it != finals.end()) values.push_back(seed_mean(it->second));
    }
    return values.empty() ? kNaN : mean_across_backbones(values);
  };
  for (const auto& learner : learner_order) {
    const double iid = cross_backbone_mean(learner, "iid");
    const double class_iid = cross_backbone_mean(learner, "class_iid");
    if (std::isnan(iid) || std::isnan(class_iid)) continue;
    tables.hmean_rows.push_back({learner, iid, class_iid, harmonic_mean(iid, class_iid)});
  }
  return tables;
}

std::string render_tables(const AggregateTables& tables) {
  std::ostringstream out;
  char buf[64];
  auto cell = [&](double v) {
    if (std::isnan(v)) return std::string("      -");
    std::snprintf(buf, sizeof(buf), "%7.1f", v);
    return std::string(buf);
  };
  for (const auto& table : tables.ordering_tables) {
    out << "final accuracy (%), ordering=" << table.ordering << "\n";
    out << "  " << std::string(16, ' ');
    for (const auto& backbone : table.backbones) {
      std::snprintf(buf, sizeof(buf), "%12s", backbone.substr(0, 12).c_str());
      out << buf;
    }
    out << "        mean\n";
    for (const auto& row : table.rows) {
      std::snprintf(buf, sizeof(buf), "  %-16s", row.learner.substr(0, 16).c_str());
      out << buf;
      for (const double v : row.per_backbone) out << "     " << cell(v);
      out << "     " << cell(row.mean) << "\n";
    }
    out << "\n";
  }
  if (!tables.hmean_rows.empty()) {
    out << "iid / class_iid harmonic mean\n";
    out << "  " << std::string(16, ' ') << "        iid  class_iid     h-mean\n";
    for (const auto& row : tables.hmean_rows) {
      std::snprintf(buf, sizeof(buf), "  %-16s     %s    %s    %s\n",
                    row.learner.substr(0, 16).c_str(), cell(row.iid).c_str(),
                    cell(row.class_iid).c_str(), cell(row.hmean).c_str());
      out << buf;
    }
  }
  return out.str();
}

std::string tables_to_json(const AggregateTables& tables) {
  json j;
  j["ordering_tables"] = json::array();
  for (const auto& table : tables.ordering_tables) {
    json rows = json::array();
    for (const auto& row : table.rows) {
      json per_backbone = json::array();
      for (const double v : row.per_backbone) {
        per_backbone.push_back(std::isnan(v) ? json(nullptr) : json(v));
      }
      rows.push_back(
          {{"learner", row.learner}, {"per_backbone", per_backbone}, {"mean", row.mean}});
    }
    j["ordering_tables"].push_back(
        {{"ordering", table.ordering}, {"backbones", table.backbones}, {"rows", rows}});
  }
  j["hmean"] = json::array();
  for (const auto& row : tables.hmean_rows) {
    j["hmean"].push_back({{"learner", row.learner},
                          {"iid", row.iid},
                          {"class_iid", row.class_iid},
                          {"hmean", row.hmean}});
  }
  return j.dump(2);
}

}  // namespace ocl
