#include "orderings.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "rng.hpp"

namespace ocl {
namespace {

using json = nlohmann::json;

std::vector<ManifestRow> train_rows_or_throw(const Manifest& manifest) {
  std::vector<ManifestRow> rows = manifest.split_rows(Split::train);
  if (rows.empty()) throw Error(ErrorCode::invalid_argument, "ordering needs a nonempty train split");
  return rows;
}

std::vector<uint32_t> sorted_classes(const std::vector<ManifestRow>& rows) {
  std::set<uint32_t> classes;
  for (const auto& row : rows) classes.insert(row.class_id);
  return {classes.begin(), classes.end()};
}

Checkpoint final_checkpoint(const std::vector<uint64_t>& sequence,
                            const std::vector<uint32_t>& classes) {
  Checkpoint cp;
  cp.position = sequence.size();
  cp.seen_classes = classes;
  return cp;
}

}  // namespace

const char* ordering_name(OrderingKind kind) {
  switch (kind) {
    case OrderingKind::iid: return "iid";
    case OrderingKind::class_iid: return "class_iid";
    case OrderingKind::instance: return "instance";
    case OrderingKind::low_shot_instance: return "low_shot_instance";
    case OrderingKind::k_shot_class_iid: return "k_shot_class_iid";
  }
  throw Error(ErrorCode::invalid_argument, "unknown ordering kind");
}

OrderingKind ordering_from_name(const std::string& name) {
  if (name == "iid") return OrderingKind::iid;
  if (name == "class_iid") return OrderingKind::class_iid;
  if (name == "instance") return OrderingKind::instance;
  if (name == "low_shot_instance") return OrderingKind::low_shot_instance;
  if (name == "k_shot_class_iid") return OrderingKind::k_shot_class_iid;
  throw Error(ErrorCode::invalid_argument, "unknown ordering kind: " + name);
}

std::string OrderingPlan::to_json() const {
  json j;
  j["kind"] = ordering_name(kind);
  j["seed"] = seed;
  j["sequence"] = sequence;
  j["checkpoints"] = json::array();
  for (const auto& cp : checkpoints) {
    j["checkpoints"].push_back({{"position", cp.position}, {"seen_classes", cp.seen_classes}});
  }
  if (!eval_pool_override.empty()) j["eval_pool"] = eval_pool_override;
  return j.dump(2);
}

OrderingPlan OrderingPlan::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::format, "invalid ordering plan JSON");
  OrderingPlan plan;
  plan.kind = ordering_from_name(j.at("kind").get<std::string>());
  plan.seed = j.at("seed").get<uint64_t>();
  plan.sequence = j.at("sequence").get<std::vector<uint64_t>>();
  for (const auto& cp : j.at("checkpoints")) {
    Checkpoint checkpoint;
    checkpoint.position = cp.at("position").get<uint64_t>();
    checkpoint.seen_classes = cp.at("seen_classes").get<std::vector<uint32_t>>();
    plan.checkpoints.push_back(std::move(checkpoint));
  }
  if (j.contains("eval_pool")) {
    plan.eval_pool_override = j.at("eval_pool").get<std::vector<uint64_t>>();
  }
  return plan;
}

OrderingPlan make_iid(const Manifest& manifest, uint64_t seed) {
  const std::vector<ManifestRow> rows = train_rows_or_throw(manifest);
  OrderingPlan plan;
  plan.kind = OrderingKind::iid;
  plan.seed = seed;
  plan.sequence.reserve(rows.size());
  for (const auto& row : rows) plan.sequence.push_back(row.sample_id);
  Rng rng(seed);
  rng.shuffle(plan.sequence);
  plan.checkpoints.push_back(final_checkpoint(plan.sequence, sorted_classes(rows)));
  return plan;
}

OrderingPlan make_class_iid(const Manifest& manifest, uint64_t seed, CheckpointPolicy policy) {
  const std::vector<ManifestRow> rows = train_rows_or_throw(manifest);
  std::map<uint32_t, std::vector<uint64_t>> by_class;
  for (const auto& row : rows) by_class[row.class_id].push_back(row.sample_id);

  std::vector<uint32_t> class_order;
  for (const auto& [cls, ids] : by_class) class_order.push_back(cls);
  Rng rng(seed);
  rng.shuffle(class_order);

  OrderingPlan plan;
  plan.kind = OrderingKind::class_iid;
  plan.seed = seed;
  std::vector<uint32_t> seen;
  for (const uint32_t cls : class_order) {
    std::vector<uint64_t>& ids = by_class[cls];
    rng.shuffle(ids);
    plan.sequence.insert(plan.sequence.end(), ids.begin(), ids.end());
    seen.push_back(cls);
    if (policy == CheckpointPolicy::per_block) {
      Checkpoint cp;
      cp.position = plan.sequence.size();
      cp.seen_classes = seen;
      std::sort(cp.seen_classes.begin(), cp.seen_classes.end());
      plan.checkpoints.push_back(std::move(cp));
    }
  }
  if (policy == CheckpointPolicy::final_only) {
    plan.checkpoints.push_back(final_checkpoint(plan.sequence, sorted_classes(rows)));
  }
  return plan;
}

OrderingPlan make_instance(const Manifest& manifest, uint64_t seed) {
  const std::vector<ManifestRow> rows = train_rows_or_throw(manifest);
  std::map<uint64_t, std::vector<uint64_t>> by_group;  // frames kept in manifest order
  for (const auto& row : rows) {
    if (row.group_id == kNoGroup) {
      throw Error(ErrorCode::invalid_argument,
                  "instance ordering needs group metadata on every train sample");
    }
    by_group[row.group_id].push_back(row.sample_id);
  }

  std::vector<uint64_t> group_order;
  for (const auto& [group, ids] : by_group) group_order.push_back(group);
  Rng rng(seed);
  rng.shuffle(group_order);

  OrderingPlan plan;
  plan.kind = OrderingKind::instance;
  plan.seed = seed;
  for (const uint64_t group : group_order) {
    const auto& ids = by_group[group];
    plan.sequence.insert(plan.sequence.end(), ids.begin(), ids.end());
  }
  plan.checkpoints.push_back(final_checkpoint(plan.sequence, sorted_classes(rows)));
  return plan;
}

OrderingPlan make_low_shot_instance(const Manifest& manifest, uint64_t seed) {
  const std::vector<ManifestRow> rows = train_rows_or_throw(manifest);
  // class -> group -> frames in manifest order
  std::map<uint32_t, std::map<uint64_t, std::vector<uint64_t>>> by_class;
  for (const auto& row : rows) {
    if (row.group_id == kNoGroup) {
      throw Error(ErrorCode::invalid_argument,
                  "low-shot instance ordering needs group metadata on every train sample");
    }
    by_class[row.class_id][row.group_id].push_back(row.sample_id);
  }

  Rng rng(seed);
  std::vector<uint32_t> class_order;
  std::map<uint32_t, const std::vector<uint64_t>*> chosen;
  for (const auto& [cls, groups] : by_class) {
    auto it = groups.begin();
    std::advance(it, static_cast<long>(rng.below(groups.size())));
    chosen[cls] = &it->second;
    class_order.push_back(cls);
  }
  rng.shuffle(class_order);

  OrderingPlan plan;
  plan.kind = OrderingKind::low_shot_instance;
  plan.seed = seed;
  std::vector<uint32_t> seen;
  for (const uint32_t cls : class_order) {
    const auto& ids = *chosen[cls];
    plan.sequence.insert(plan.sequence.end(), ids.begin(), ids.end());
    seen.push_back(cls);
    Checkpoint cp;
    cp.position = plan.sequence.size();
    cp.seen_classes = seen;
    std::sort(cp.seen_classes.begin(), cp.seen_classes.end());
    plan.checkpoints.push_back(std::move(cp));
  }
  return plan;
}

OrderingPlan make_k_shot_class_iid(const Manifest& manifest, uint32_t k, uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::invalid_argument, "k-shot ordering needs k >= 1");
  const std::vector<ManifestRow> rows = train_rows_or_throw(manifest);
  std::map<uint32_t, std::vector<uint64_t>> by_class;
  for (const auto& row : rows) by_class[row.class_id].push_back(row.sample_id);

  Rng rng(seed);
  std::map<uint32_t, std::vector<uint64_t>> picked;
  std::vector<uint64_t> leftovers;
  std::vector<uint32_t> class_order;
  for (const auto& [cls, ids] : by_class) {
    if (ids.size() < static_cast<size_t>(k) + 1) {
      throw Error(ErrorCode::invalid_argument,
                  "k-shot ordering: class " + std::to_string(cls) + " has " +
                      std::to_string(ids.size()) + " train samples, needs at least " +
                      std::to_string(k + 1));
    }
    const std::vector<uint64_t> draws = rng.sample_without_replacement(ids.size(), k);
    std::vector<uint8_t> taken(ids.size(), 0);
    for (const uint64_t idx : draws) {
      picked[cls].push_back(ids[static_cast<size_t>(idx)]);
      taken[static_cast<size_t>(idx)] = 1;
    }
    for (size_t i = 0; i < ids.size(); ++i) {
      if (!taken[i]) leftovers.push_back(ids[i]);
    }
    class_order.push_back(cls);
  }
  rng.shuffle(class_order);

  OrderingPlan plan;
  plan.kind = OrderingKind::k_shot_class_iid;
  plan.seed = seed;
  std::vector<uint32_t> seen;
  for (const uint32_t cls : class_order) {
    const auto& ids = picked[cls];
    plan.sequence.insert(plan.sequence.end(), ids.begin(), ids.end());
    seen.push_back(cls);
    Checkpoint cp;
    cp.position = plan.sequence.size();
    cp.seen_classes = seen;
    std::sort(cp.seen_classes.begin(), cp.seen_classes.end());
    plan.checkpoints.push_back(std::move(cp));
  }
  plan.eval_pool_override = std::move(leftovers);
  for (const auto& row : manifest.split_rows(Split::test)) {
    plan.eval_pool_override.push_back(row.sample_id);
  }
  std::sort(plan.eval_pool_override.begin(), plan.eval_pool_override.end());
  return plan;
}

}  // namespace ocl
