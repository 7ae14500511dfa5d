#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feature_store.hpp"

namespace ocl {

enum class OrderingKind : uint8_t {
  iid = 0,
  class_iid,
  instance,
  low_shot_instance,
  k_shot_class_iid,
};

const char* ordering_name(OrderingKind kind);
OrderingKind ordering_from_name(const std::string& name);

// Whether class-blocked orderings evaluate after every class block or only
// once at the end of the stream.
enum class CheckpointPolicy : uint8_t { final_only = 0, per_block };

struct Checkpoint {
  uint64_t position = 0;  // samples consumed when evaluation fires
  std::vector<uint32_t> seen_classes;
};

// A fully materialized presentation order plus its evaluation schedule.
// `sequence` holds sample_ids; checkpoints carry strictly increasing
// positions and cumulative seen-class sets. When `eval_pool_override` is
// nonempty, evaluation draws from those sample_ids instead of the test split.
struct OrderingPlan {
  OrderingKind kind = OrderingKind::iid;
  uint64_t seed = 0;
  std::vector<uint64_t> sequence;
  std::vector<Checkpoint> checkpoints;
  std::vector<uint64_t> eval_pool_override;

  std::string to_json() const;
  static OrderingPlan from_json(const std::string& text);
};

// All builders are pure functions of (manifest, parameters, seed) on the
// pinned generator. RNG consumption per builder:
//   iid:      one shuffle of the train sample list (manifest order).
//   class_iid: shuffle of the class list (ascending ids), then one shuffle
//             per class's samples, in presented class order.
//   instance: one shuffle of the group list (ascending group ids).
//   low_shot: one draw per class (ascending ids) over its groups (ascending),
//             then a shuffle of the class presentation order.
//   k_shot:   one k-subset draw per class (ascending ids) over its train rows
//             (manifest order), then a shuffle of the class order.

OrderingPlan make_iid(const Manifest& manifest, uint64_t seed);

OrderingPlan make_class_iid(const Manifest& manifest, uint64_t seed,
                            CheckpointPolicy policy = CheckpointPolicy::final_only);

OrderingPlan make_instance(const Manifest& manifest, uint64_t seed);

OrderingPlan make_low_shot_instance(const Manifest& manifest, uint64_t seed);

// Picks k train samples per class, presents them class-blocked, and reassigns
// the unchosen train samples to the evaluation pool together with the test
// split. Every class needs at least k+1 train samples.
OrderingPlan make_k_shot_class_iid(const Manifest& manifest, uint32_t k, uint64_t seed);

}  // namespace ocl
