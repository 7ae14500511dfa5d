#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "streaming_stats.hpp"

namespace ocl {

struct LearnerConfig {
  // SGD head (finetune, replay)
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double momentum = 0.9;
  // shrinkage epsilon shared by SLDA precision and the Naive Bayes variance floor
  double shrinkage = 1e-4;
  // replay buffer: quota per class and draws per update
  uint32_t replay_quota = 20;
  uint32_t replay_draws = 50;
  // CBCL
  double cbcl_distance_threshold = 17.0;
  uint32_t cbcl_max_centroids = 44;
  // Compatibility switch: use the (w_i + w_j)/(c_i + c_j) over-capacity merge
  // formula verbatim instead of the count-weighted mean.
  bool cbcl_sum_merge_rule = false;
  // Seeds stochastic learners (replay draws and eviction tie-breaks).
  uint64_t seed = 0;
};

std::string learner_config_to_json(const LearnerConfig& config);
LearnerConfig learner_config_from_json(const std::string& json_text);

// Uniform contract: consume one labeled feature vector at a time, score
// arbitrary queries, report stored-scalar counts. Single-writer during
// training; distinct instances share nothing.
class Learner {
 public:
  Learner(std::string kind, uint32_t dim, uint32_t num_classes);
  virtual ~Learner() = default;

  virtual void fit_one(const Eigen::VectorXd& x, uint32_t label) = 0;
  virtual Eigen::VectorXd scores(const Eigen::VectorXd& x) const = 0;
  virtual uint64_t stored_scalars() const = 0;

  // argmax over scores; -inf sentinels never win and ties resolve to the
  // lowest class index (class 0 when nothing has been seen).
  uint32_t predict(const Eigen::VectorXd& x) const;

  const std::string& kind() const { return kind_; }
  uint32_t dim() const { return dim_; }
  uint32_t num_classes() const { return num_classes_; }

  // Checkpoint to a directory (meta.json plus matrix containers).
  virtual void save(const std::string& dir) const = 0;

 protected:
  void check_input(const Eigen::VectorXd& x, uint32_t label) const;
  void check_query(const Eigen::VectorXd& x) const;

  std::string kind_;
  uint32_t dim_;
  uint32_t num_classes_;
};

// Nearest class mean over per-class running means, Euclidean metric.
class NcmLearner : public Learner {
 public:
  NcmLearner(uint32_t dim, uint32_t num_classes);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  const std::vector<RunningMean>& class_means() const { return means_; }
  void restore_means(std::vector<RunningMean> means);

 protected:
  std::vector<RunningMean> means_;
};

// Streaming one-vs-rest: s_k = d_k / (d_k + d~_k) with d_k = x.w_k and
// d~_k = x.w~_k, w~_k = (1/N) sum_{i != k} c_i w_i, N = sum_i c_i.
// A zero denominator yields s_k = 0.
class SovrLearner : public NcmLearner {
 public:
  SovrLearner(uint32_t dim, uint32_t num_classes);

  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
};

// Streaming LDA: per-class running means plus one shared streaming
// covariance. Each update folds the sample into the covariance using the
// pre-update class mean, then advances the mean.
class SldaLearner : public Learner {
 public:
  SldaLearner(uint32_t dim, uint32_t num_classes, double shrinkage = 1e-4);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  const std::vector<RunningMean>& class_means() const { return means_; }
  const SharedCovariance& covariance() const { return covariance_; }
  double shrinkage() const { return shrinkage_; }

  // Test hook: score with the identity precision matrix, under which SLDA
  // reduces to the nearest-mean discriminant.
  void set_identity_precision_hook(bool enabled) { identity_precision_ = enabled; }

  void restore_state(std::vector<RunningMean> means, SharedCovariance covariance);

 private:
  std::vector<RunningMean> means_;
  SharedCovariance covariance_;
  double shrinkage_;
  bool identity_precision_ = false;
};

// Gaussian Naive Bayes with Welford per-class variance vectors; scores are
// diagonal-covariance log densities with the shrinkage floor added to every
// variance component.
class NaiveBayesLearner : public Learner {
 public:
  NaiveBayesLearner(uint32_t dim, uint32_t num_classes, double shrinkage = 1e-4);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  const std::vector<WelfordAccumulator>& class_stats() const { return stats_; }
  double shrinkage() const { return shrinkage_; }
  void restore_stats(std::vector<WelfordAccumulator> stats);

 private:
  std::vector<WelfordAccumulator> stats_;
  double shrinkage_;
};

// Mistake-driven multiclass perceptron. The first sample of a class becomes
// its weight vector; later mistakes add the sample to the true class row and
// subtract it from the highest-scoring incorrect row.
class PerceptronLearner : public Learner {
 public:
  PerceptronLearner(uint32_t dim, uint32_t num_classes);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<uint8_t>& seen() const { return seen_; }
  void restore_state(Eigen::MatrixXd weights, std::vector<uint8_t> seen);

 private:
  Eigen::MatrixXd weights_;  // K x d
  std::vector<uint8_t> seen_;
};

struct SgdHyperparams {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double momentum = 0.9;
};

// Fully-connected output layer trained with SGD + momentum on softmax
// cross-entropy. One step consumes a batch and applies the mean gradient;
// weight decay acts on W only.
class LinearHead {
 public:
  LinearHead(uint32_t dim, uint32_t num_classes, SgdHyperparams hp);

  void step(const std::vector<const Eigen::VectorXd*>& xs, const std::vector<uint32_t>& ys);
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const;

  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  const Eigen::MatrixXd& velocity_w() const { return velocity_w_; }
  const Eigen::VectorXd& velocity_b() const { return velocity_b_; }
  const SgdHyperparams& hyperparams() const { return hp_; }

  void set_weights(const Eigen::MatrixXd& w);
  void set_bias(const Eigen::VectorXd& b);
  void restore_velocity(const Eigen::MatrixXd& vw, const Eigen::VectorXd& vb);

 private:
  Eigen::MatrixXd weights_;     // K x d
  Eigen::VectorXd bias_;        // K
  Eigen::MatrixXd velocity_w_;  // K x d
  Eigen::VectorXd velocity_b_;  // K
  SgdHyperparams hp_;
};

class FinetuneLearner : public Learner {
 public:
  FinetuneLearner(uint32_t dim, uint32_t num_classes, SgdHyperparams hp);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  LinearHead& head() { return head_; }
  const LinearHead& head() const { return head_; }

 private:
  LinearHead head_;
};

// Class-partitioned bounded sample store. Appends until the total capacity
// (num_classes * quota) is reached; afterwards each insertion evicts a
// uniformly random element of a most-represented class (ties between
// most-represented classes broken by the rng). Individual classes may sit
// above their quota while the buffer is below capacity.
class ReplayBuffer {
 public:
  ReplayBuffer(uint32_t num_classes, uint32_t quota_per_class);

  uint64_t capacity() const;
  uint64_t size() const;
  uint32_t quota_per_class() const { return quota_; }
  const std::vector<std::vector<Eigen::VectorXd>>& per_class() const { return store_; }

  void insert(const Eigen::VectorXd& x, uint32_t label, Rng& rng);

  // Uniform draws without replacement over all stored samples; rng consumed
  // even when count == size. Returns (features, label) pointers in draw order.
  void draw(uint64_t count, Rng& rng, std::vector<const Eigen::VectorXd*>* xs,
            std::vector<uint32_t>* ys) const;

  void restore_class(uint32_t label, std::vector<Eigen::VectorXd> samples);

 private:
  std::vector<std::vector<Eigen::VectorXd>> store_;
  uint32_t quota_;
};

// Replay over a linear head: every new sample is combined with up to P
// buffer draws for one mean-gradient step, then inserted into the buffer.
// RNG consumption order per fit_one: batch draw, then eviction tie-break (if
// several classes tie), then eviction element choice.
class ReplayLearner : public Learner {
 public:
  ReplayLearner(uint32_t dim, uint32_t num_classes, SgdHyperparams hp, uint32_t quota_per_class,
                uint32_t replay_draws, uint64_t seed);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  LinearHead& head() { return head_; }
  const LinearHead& head() const { return head_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  ReplayBuffer& buffer_mutable() { return buffer_; }
  uint32_t replay_draws() const { return replay_draws_; }
  Rng& rng() { return rng_; }

 private:
  LinearHead head_;
  ReplayBuffer buffer_;
  uint32_t replay_draws_;
  Rng rng_;
};

struct Centroid {
  Eigen::VectorXd w;
  uint64_t count = 0;
};

// Online centroid-based concept learning. Samples merge into the nearest
// same-class centroid when within the distance threshold, otherwise open a
// new centroid. Past the centroid cap, the globally closest same-class pair
// is merged (count-weighted mean by default). Scoring is weighted 1-NN:
// -(distance to nearest class centroid) * (samples seen for the class).
// When every class holds a single centroid no same-class pair exists and the
// cap cannot shrink further; with more classes than the cap the total floor
// is one centroid per class.
class CbclLearner : public Learner {
 public:
  CbclLearner(uint32_t dim, uint32_t num_classes, double distance_threshold = 17.0,
              uint32_t max_centroids = 44, bool sum_merge_rule = false);

  void fit_one(const Eigen::VectorXd& x, uint32_t label) override;
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const override;
  uint64_t stored_scalars() const override;
  void save(const std::string& dir) const override;

  const std::vector<std::vector<Centroid>>& centroids() const { return centroids_; }
  const std::vector<uint64_t>& seen_counts() const { return seen_counts_; }
  uint64_t total_centroids() const;

  void restore_state(std::vector<std::vector<Centroid>> centroids,
                     std::vector<uint64_t> seen_counts);

 private:
  void merge_closest_pair();

  std::vector<std::vector<Centroid>> centroids_;
  std::vector<uint64_t> seen_counts_;
  double threshold_;
  uint32_t max_centroids_;
  bool sum_merge_rule_;
};

// Scalars a learner's state requires, as a function of the label-space size;
// replay and CBCL are counted at buffer capacity. Unknown kinds throw.
uint64_t stored_scalars_model(const std::string& kind, uint32_t num_classes, uint32_t dim,
                              const LearnerConfig& config);

const std::vector<std::string>& learner_kinds();

std::unique_ptr<Learner> make_learner(const std::string& kind, uint32_t dim, uint32_t num_classes,
                                      const LearnerConfig& config = {});

std::unique_ptr<Learner> load_learner(const std::string& checkpoint_dir);

}  // namespace ocl
