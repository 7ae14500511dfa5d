#include "learners.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "feature_store.hpp"
#include "json.hpp"

namespace ocl {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using json = nlohmann::json;

json config_to_json_obj(const LearnerConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"shrinkage", c.shrinkage},
              {"replay_quota", c.replay_quota},
              {"replay_draws", c.replay_draws},
              {"cbcl_distance_threshold", c.cbcl_distance_threshold},
              {"cbcl_max_centroids", c.cbcl_max_centroids},
              {"cbcl_sum_merge_rule", c.cbcl_sum_merge_rule},
              {"seed", c.seed}};
}

LearnerConfig config_from_json_obj(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::format, "learner config must be a JSON object");
  LearnerConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lr") c.lr = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "momentum") c.momentum = value.get<double>();
    else if (key == "shrinkage") c.shrinkage = value.get<double>();
    else if (key == "replay_quota") c.replay_quota = value.get<uint32_t>();
    else if (key == "replay_draws") c.replay_draws = value.get<uint32_t>();
    else if (key == "cbcl_distance_threshold") c.cbcl_distance_threshold = value.get<double>();
    else if (key == "cbcl_max_centroids") c.cbcl_max_centroids = value.get<uint32_t>();
    else if (key == "cbcl_sum_merge_rule") c.cbcl_sum_merge_rule = value.get<bool>();
    else if (key == "seed") c.seed = value.get<uint64_t>();
    else throw Error(ErrorCode::format, "unknown learner config key: " + key);
  }
  return c;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path);
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json load_meta(const std::string& dir) {
  const std::string text = read_text_file(dir + "/meta.json");
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::format, "invalid checkpoint meta: " + dir);
  return j;
}

void save_meta(const std::string& dir, const json& meta) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

json base_meta(const Learner& learner, const LearnerConfig& config) {
  return json{{"kind", learner.kind()},
              {"dim", learner.dim()},
              {"num_classes", learner.num_classes()},
              {"config", config_to_json_obj(config)},
              {"state", json::object()}};
}

Eigen::MatrixXd means_matrix(const std::vector<RunningMean>& means, uint32_t dim) {
  Eigen::MatrixXd m(means.size(), dim);
  for (size_t k = 0; k < means.size(); ++k) m.row(k) = means[k].mean().transpose();
  return m;
}

std::vector<uint64_t> u64_list(const json& j) { return j.get<std::vector<uint64_t>>(); }

}  // namespace

std::string learner_config_to_json(const LearnerConfig& config) {
  return config_to_json_obj(config).dump(2);
}

LearnerConfig learner_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::format, "invalid learner config JSON");
  return config_from_json_obj(j);
}

Learner::Learner(std::string kind, uint32_t dim, uint32_t num_classes)
    : kind_(std::move(kind)), dim_(dim), num_classes_(num_classes) {
  if (dim_ == 0) throw Error(ErrorCode::invalid_argument, "learner dim must be positive");
  if (num_classes_ == 0) throw Error(ErrorCode::invalid_argument, "learner needs at least one class");
}

void Learner::check_input(const Eigen::VectorXd& x, uint32_t label) const {
  check_query(x);
  if (label >= num_classes_) {
    throw Error(ErrorCode::out_of_range,
                kind_ + ": label " + std::to_string(label) + " out of range (num_classes=" +
                    std::to_string(num_classes_) + ")");
  }
}

void Learner::check_query(const Eigen::VectorXd& x) const {
  if (static_cast<uint32_t>(x.size()) != dim_) {
    throw Error(ErrorCode::invalid_argument,
                kind_ + ": feature dim " + std::to_string(x.size()) + " != " + std::to_string(dim_));
  }
}

uint32_t Learner::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd s = scores(x);
  uint32_t best = 0;
  double best_score = kNegInf;
  for (uint32_t k = 0; k < num_classes_; ++k) {
    if (s[k] > best_score) {
      best_score = s[k];
      best = k;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// NCM

NcmLearner::NcmLearner(uint32_t dim, uint32_t num_classes) : Learner("ncm", dim, num_classes) {
  means_.reserve(num_classes);
  for (uint32_t k = 0; k < num_classes; ++k) means_.emplace_back(dim);
}

void NcmLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  means_[label].update(x);
}

Eigen::VectorXd NcmLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    s[k] = means_[k].count() > 0 ? -(x - means_[k].mean()).norm() : kNegInf;
  }
  return s;
}

uint64_t NcmLearner::stored_scalars() const {
  return static_cast<uint64_t>(num_classes_) * dim_ + num_classes_;
}

void NcmLearner::restore_means(std::vector<RunningMean> means) {
  if (means.size() != num_classes_) {
    throw Error(ErrorCode::invalid_argument, "restore_means: class count mismatch");
  }
  means_ = std::move(means);
}

void NcmLearner::save(const std::string& dir) const {
  LearnerConfig config;
  json meta = base_meta(*this, config);
  std::vector<uint64_t> counts(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) counts[k] = means_[k].count();
  meta["state"]["counts"] = counts;
  save_meta(dir, meta);
  write_matrix(dir + "/means.bin", means_matrix(means_, dim_));
}

// ---------------------------------------------------------------------------
// SOvR

SovrLearner::SovrLearner(uint32_t dim, uint32_t num_classes) : NcmLearner(dim, num_classes) {
  kind_ = "sovr";
}

Eigen::VectorXd SovrLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  double total = 0.0;
  Eigen::VectorXd weighted_sum = Eigen::VectorXd::Zero(dim_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    const double c = static_cast<double>(means_[k].count());
    if (c > 0) {
      total += c;
      weighted_sum += c * means_[k].mean();
    }
  }
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    const double c = static_cast<double>(means_[k].count());
    if (c == 0) {
      s[k] = kNegInf;
      continue;
    }
    const Eigen::VectorXd& w = means_[k].mean();
    const Eigen::VectorXd rest = (weighted_sum - c * w) / total;
    const double d_own = x.dot(w);
    const double d_rest = x.dot(rest);
    const double denom = d_own + d_rest;
    s[k] = denom == 0.0 ? 0.0 : d_own / denom;
  }
  return s;
}

// ---------------------------------------------------------------------------
// SLDA

SldaLearner::SldaLearner(uint32_t dim, uint32_t num_classes, double shrinkage)
    : Learner("slda", dim, num_classes), covariance_(dim), shrinkage_(shrinkage) {
  if (!(shrinkage > 0.0 && shrinkage < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "slda shrinkage must lie in (0, 1)");
  }
  means_.reserve(num_classes);
  for (uint32_t k = 0; k < num_classes; ++k) means_.emplace_back(dim);
}

void SldaLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  covariance_.update(x, means_[label].mean());
  means_[label].update(x);
}

Eigen::VectorXd SldaLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  const Eigen::MatrixXd* precision = nullptr;
  if (!identity_precision_) precision = &covariance_.precision(shrinkage_);
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    if (means_[k].count() == 0) {
      s[k] = kNegInf;
      continue;
    }
    const Eigen::VectorXd& mu = means_[k].mean();
    const Eigen::VectorXd w = precision ? Eigen::VectorXd(*precision * mu) : mu;
    s[k] = w.dot(x) - 0.5 * mu.dot(w);
  }
  return s;
}

uint64_t SldaLearner::stored_scalars() const {
  const uint64_t d = dim_;
  return static_cast<uint64_t>(num_classes_) * d + num_classes_ + d * d;
}

void SldaLearner::restore_state(std::vector<RunningMean> means, SharedCovariance covariance) {
  if (means.size() != num_classes_ || covariance.dim() != dim_) {
    throw Error(ErrorCode::invalid_argument, "slda restore: shape mismatch");
  }
  means_ = std::move(means);
  covariance_ = std::move(covariance);
}

void SldaLearner::save(const std::string& dir) const {
  LearnerConfig config;
  config.shrinkage = shrinkage_;
  json meta = base_meta(*this, config);
  std::vector<uint64_t> counts(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) counts[k] = means_[k].count();
  meta["state"]["counts"] = counts;
  meta["state"]["total_count"] = covariance_.total_count();
  save_meta(dir, meta);
  write_matrix(dir + "/means.bin", means_matrix(means_, dim_));
  write_matrix(dir + "/sigma.bin", covariance_.sigma());
}

// ---------------------------------------------------------------------------
// Gaussian Naive Bayes

NaiveBayesLearner::NaiveBayesLearner(uint32_t dim, uint32_t num_classes, double shrinkage)
    : Learner("naive_bayes", dim, num_classes), shrinkage_(shrinkage) {
  if (shrinkage <= 0.0) {
    throw Error(ErrorCode::invalid_argument, "naive_bayes variance floor must be positive");
  }
  stats_.reserve(num_classes);
  for (uint32_t k = 0; k < num_classes; ++k) stats_.emplace_back(dim);
}

void NaiveBayesLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  stats_[label].update(x);
}

Eigen::VectorXd NaiveBayesLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    if (stats_[k].count() == 0) {
      s[k] = kNegInf;
      continue;
    }
    const Eigen::ArrayXd var = stats_[k].variance().array() + shrinkage_;
    const Eigen::ArrayXd diff = (x - stats_[k].mean()).array();
    s[k] = -0.5 * (diff.square() / var + var.log()).sum();
  }
  return s;
}

uint64_t NaiveBayesLearner::stored_scalars() const {
  return 2ull * num_classes_ * dim_ + num_classes_;
}

void NaiveBayesLearner::restore_stats(std::vector<WelfordAccumulator> stats) {
  if (stats.size() != num_classes_) {
    throw Error(ErrorCode::invalid_argument, "restore_stats: class count mismatch");
  }
  stats_ = std::move(stats);
}

void NaiveBayesLearner::save(const std::string& dir) const {
  LearnerConfig config;
  config.shrinkage = shrinkage_;
  json meta = base_meta(*this, config);
  std::vector<uint64_t> counts(num_classes_);
  Eigen::MatrixXd means(num_classes_, dim_);
  Eigen::MatrixXd m2(num_classes_, dim_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    counts[k] = stats_[k].count();
    means.row(k) = stats_[k].mean().transpose();
    m2.row(k) = stats_[k].m2().transpose();
  }
  meta["state"]["counts"] = counts;
  save_meta(dir, meta);
  write_matrix(dir + "/means.bin", means);
  write_matrix(dir + "/m2.bin", m2);
}

// ---------------------------------------------------------------------------
// Perceptron

PerceptronLearner::PerceptronLearner(uint32_t dim, uint32_t num_classes)
    : Learner("perceptron", dim, num_classes),
      weights_(Eigen::MatrixXd::Zero(num_classes, dim)),
      seen_(num_classes, 0) {}

void PerceptronLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  if (!seen_[label]) {
    weights_.row(label) = x.transpose();
    seen_[label] = 1;
    return;
  }
  const uint32_t predicted = predict(x);
  if (predicted != label) {
    weights_.row(label) += x.transpose();
    weights_.row(predicted) -= x.transpose();
  }
}

Eigen::VectorXd PerceptronLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    s[k] = seen_[k] ? weights_.row(k).dot(x) : kNegInf;
  }
  return s;
}

uint64_t PerceptronLearner::stored_scalars() const {
  return static_cast<uint64_t>(num_classes_) * dim_;
}

void PerceptronLearner::restore_state(Eigen::MatrixXd weights, std::vector<uint8_t> seen) {
  if (weights.rows() != num_classes_ || weights.cols() != dim_ || seen.size() != num_classes_) {
    throw Error(ErrorCode::invalid_argument, "perceptron restore: shape mismatch");
  }
  weights_ = std::move(weights);
  seen_ = std::move(seen);
}

void PerceptronLearner::save(const std::string& dir) const {
  LearnerConfig config;
  json meta = base_meta(*this, config);
  meta["state"]["seen"] = std::vector<int>(seen_.begin(), seen_.end());
  save_meta(dir, meta);
  write_matrix(dir + "/weights.bin", weights_);
}

// ---------------------------------------------------------------------------
// Linear head (softmax cross-entropy, SGD + momentum)

LinearHead::LinearHead(uint32_t dim, uint32_t num_classes, SgdHyperparams hp)
    : weights_(Eigen::MatrixXd::Zero(num_classes, dim)),
      bias_(Eigen::VectorXd::Zero(num_classes)),
      velocity_w_(Eigen::MatrixXd::Zero(num_classes, dim)),
      velocity_b_(Eigen::VectorXd::Zero(num_classes)),
      hp_(hp) {
  if (hp_.lr <= 0.0) throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  if (hp_.weight_decay < 0.0 || hp_.momentum < 0.0 || hp_.momentum >= 1.0) {
    throw Error(ErrorCode::invalid_argument, "invalid SGD hyperparameters");
  }
}

void LinearHead::step(const std::vector<const Eigen::VectorXd*>& xs,
                      const std::vector<uint32_t>& ys) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw Error(ErrorCode::invalid_argument, "LinearHead::step: empty or mismatched batch");
  }
  const auto num_classes = static_cast<uint32_t>(weights_.rows());
  Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(weights_.rows(), weights_.cols());
  Eigen::VectorXd grad_b = Eigen::VectorXd::Zero(bias_.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd& x = *xs[i];
    if (x.size() != weights_.cols()) {
      throw Error(ErrorCode::invalid_argument, "LinearHead::step: feature dim mismatch");
    }
    if (ys[i] >= num_classes) {
      throw Error(ErrorCode::out_of_range, "LinearHead::step: label out of range");
    }
    Eigen::VectorXd z = weights_ * x + bias_;
    z.array() -= z.maxCoeff();
    Eigen::VectorXd p = z.array().exp();
    p /= p.sum();
    p[ys[i]] -= 1.0;
    grad_w.noalias() += p * x.transpose();
    grad_b += p;
  }
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  grad_w *= inv_n;
  grad_b *= inv_n;
  grad_w += hp_.weight_decay * weights_;
  if (!grad_w.allFinite() || !grad_b.allFinite()) {
    throw Error(ErrorCode::numeric, "LinearHead::step: non-finite gradient");
  }
  velocity_w_ = hp_.momentum * velocity_w_ + grad_w;
  velocity_b_ = hp_.momentum * velocity_b_ + grad_b;
  weights_ -= hp_.lr * velocity_w_;
  bias_ -= hp_.lr * velocity_b_;
}

Eigen::VectorXd LinearHead::scores(const Eigen::VectorXd& x) const {
  if (x.size() != weights_.cols()) {
    throw Error(ErrorCode::invalid_argument, "LinearHead::scores: feature dim mismatch");
  }
  return weights_ * x + bias_;
}

void LinearHead::set_weights(const Eigen::MatrixXd& w) {
  if (w.rows() != weights_.rows() || w.cols() != weights_.cols()) {
    throw Error(ErrorCode::invalid_argument, "set_weights: shape mismatch");
  }
  weights_ = w;
}

void LinearHead::set_bias(const Eigen::VectorXd& b) {
  if (b.size() != bias_.size()) {
    throw Error(ErrorCode::invalid_argument, "set_bias: shape mismatch");
  }
  bias_ = b;
}

void LinearHead::restore_velocity(const Eigen::MatrixXd& vw, const Eigen::VectorXd& vb) {
  if (vw.rows() != velocity_w_.rows() || vw.cols() != velocity_w_.cols() ||
      vb.size() != velocity_b_.size()) {
    throw Error(ErrorCode::invalid_argument, "restore_velocity: shape mismatch");
  }
  velocity_w_ = vw;
  velocity_b_ = vb;
}

// ---------------------------------------------------------------------------
// Fine-tune

FinetuneLearner::FinetuneLearner(uint32_t dim, uint32_t num_classes, SgdHyperparams hp)
    : Learner("finetune", dim, num_classes), head_(dim, num_classes, hp) {}

void FinetuneLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  head_.step({&x}, {label});
}

Eigen::VectorXd FinetuneLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  return head_.scores(x);
}

uint64_t FinetuneLearner::stored_scalars() const {
  return static_cast<uint64_t>(num_classes_) * dim_ + num_classes_;
}

void FinetuneLearner::save(const std::string& dir) const {
  LearnerConfig config;
  config.lr = head_.hyperparams().lr;
  config.weight_decay = head_.hyperparams().weight_decay;
  config.momentum = head_.hyperparams().momentum;
  json meta = base_meta(*this, config);
  save_meta(dir, meta);
  write_matrix(dir + "/weights.bin", head_.weights());
  write_matrix(dir + "/bias.bin", head_.bias().transpose());
  write_matrix(dir + "/velocity_w.bin", head_.velocity_w());
  write_matrix(dir + "/velocity_b.bin", head_.velocity_b().transpose());
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(uint32_t num_classes, uint32_t quota_per_class) : quota_(quota_per_class) {
  if (num_classes == 0 || quota_per_class == 0) {
    throw Error(ErrorCode::invalid_argument, "replay buffer needs positive classes and quota");
  }
  store_.resize(num_classes);
}

uint64_t ReplayBuffer::capacity() const {
  return static_cast<uint64_t>(store_.size()) * quota_;
}

uint64_t ReplayBuffer::size() const {
  uint64_t total = 0;
  for (const auto& samples : store_) total += samples.size();
  return total;
}

void ReplayBuffer::insert(const Eigen::VectorXd& x, uint32_t label, Rng& rng) {
  if (label >= store_.size()) {
    throw Error(ErrorCode::out_of_range, "replay insert: label out of range");
  }
  if (size() == capacity()) {
    size_t max_count = 0;
    for (const auto& samples : store_) max_count = std::max(max_count, samples.size());
    std::vector<uint32_t> tied;
    for (uint32_t k = 0; k < store_.size(); ++k) {
      if (store_[k].size() == max_count) tied.push_back(k);
    }
    const uint32_t victim_class = tied.size() == 1 ? tied[0] : tied[rng.below(tied.size())];
    const auto victim_index = static_cast<size_t>(rng.below(store_[victim_class].size()));
    store_[victim_class].erase(store_[victim_class].begin() +
                               static_cast<std::ptrdiff_t>(victim_index));
  }
  store_[label].push_back(x);
}

void ReplayBuffer::draw(uint64_t count, Rng& rng, std::vector<const Eigen::VectorXd*>* xs,
                        std::vector<uint32_t>* ys) const {
  const uint64_t total = size();
  if (count > total) {
    throw Error(ErrorCode::invalid_argument, "replay draw: count exceeds stored samples");
  }
  // Flat index space: classes ascending, insertion order within a class.
  std::vector<std::pair<uint32_t, uint32_t>> flat;
  flat.reserve(total);
  for (uint32_t k = 0; k < store_.size(); ++k) {
    for (uint32_t i = 0; i < store_[k].size(); ++i) flat.emplace_back(k, i);
  }
  const std::vector<uint64_t> picks = rng.sample_without_replacement(total, count);
  xs->clear();
  ys->clear();
  xs->reserve(count);
  ys->reserve(count);
  for (const uint64_t p : picks) {
    const auto [cls, idx] = flat[static_cast<size_t>(p)];
    xs->push_back(&store_[cls][idx]);
    ys->push_back(cls);
  }
}

void ReplayBuffer::restore_class(uint32_t label, std::vector<Eigen::VectorXd> samples) {
  if (label >= store_.size()) {
    throw Error(ErrorCode::out_of_range, "replay restore: label out of range");
  }
  // A class may legitimately exceed its quota while the buffer is below
  // capacity (eviction only rebalances once full), so only the total is capped.
  store_[label] = std::move(samples);
  if (size() > capacity()) {
    throw Error(ErrorCode::invalid_argument, "replay restore: buffer exceeds capacity");
  }
}

// ---------------------------------------------------------------------------
// Replay learner

ReplayLearner::ReplayLearner(uint32_t dim, uint32_t num_classes, SgdHyperparams hp,
                             uint32_t quota_per_class, uint32_t replay_draws, uint64_t seed)
    : Learner("replay", dim, num_classes),
      head_(dim, num_classes, hp),
      buffer_(num_classes, quota_per_class),
      replay_draws_(replay_draws),
      rng_(seed) {}

void ReplayLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  std::vector<const Eigen::VectorXd*> xs;
  std::vector<uint32_t> ys;
  buffer_.draw(std::min<uint64_t>(replay_draws_, buffer_.size()), rng_, &xs, &ys);
  xs.insert(xs.begin(), &x);
  ys.insert(ys.begin(), label);
  head_.step(xs, ys);
  buffer_.insert(x, label, rng_);
}

Eigen::VectorXd ReplayLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  return head_.scores(x);
}

uint64_t ReplayLearner::stored_scalars() const {
  // Buffer accounted at capacity: its slots are reserved regardless of fill.
  return static_cast<uint64_t>(num_classes_) * dim_ + num_classes_ + buffer_.capacity() * dim_;
}

void ReplayLearner::save(const std::string& dir) const {
  LearnerConfig config;
  config.lr = head_.hyperparams().lr;
  config.weight_decay = head_.hyperparams().weight_decay;
  config.momentum = head_.hyperparams().momentum;
  config.replay_quota = buffer_.quota_per_class();
  config.replay_draws = replay_draws_;
  json meta = base_meta(*this, config);
  std::vector<uint32_t> labels;
  Eigen::MatrixXd stored(buffer_.size(), dim_);
  Eigen::Index row = 0;
  for (uint32_t k = 0; k < num_classes_; ++k) {
    for (const auto& sample : buffer_.per_class()[k]) {
      stored.row(row++) = sample.transpose();
      labels.push_back(k);
    }
  }
  meta["state"]["buffer_labels"] = labels;
  std::vector<std::string> rng_words;
  for (int i = 0; i < 4; ++i) rng_words.push_back(std::to_string(rng_.state()[i]));
  meta["state"]["rng_state"] = rng_words;
  save_meta(dir, meta);
  write_matrix(dir + "/weights.bin", head_.weights());
  write_matrix(dir + "/bias.bin", head_.bias().transpose());
  write_matrix(dir + "/velocity_w.bin", head_.velocity_w());
  write_matrix(dir + "/velocity_b.bin", head_.velocity_b().transpose());
  write_matrix(dir + "/buffer.bin", stored);
}

// ---------------------------------------------------------------------------
// CBCL

CbclLearner::CbclLearner(uint32_t dim, uint32_t num_classes, double distance_threshold,
                         uint32_t max_centroids, bool sum_merge_rule)
    : Learner("cbcl", dim, num_classes),
      centroids_(num_classes),
      seen_counts_(num_classes, 0),
      threshold_(distance_threshold),
      max_centroids_(max_centroids),
      sum_merge_rule_(sum_merge_rule) {
  if (distance_threshold <= 0.0) {
    throw Error(ErrorCode::invalid_argument, "cbcl distance threshold must be positive");
  }
  if (max_centroids == 0) {
    throw Error(ErrorCode::invalid_argument, "cbcl centroid cap must be positive");
  }
}

uint64_t CbclLearner::total_centroids() const {
  uint64_t total = 0;
  for (const auto& list : centroids_) total += list.size();
  return total;
}

void CbclLearner::fit_one(const Eigen::VectorXd& x, uint32_t label) {
  check_input(x, label);
  ++seen_counts_[label];
  auto& list = centroids_[label];
  if (list.empty()) {
    list.push_back({x, 1});
  } else {
    size_t nearest = 0;
    double best = (x - list[0].w).norm();
    for (size_t i = 1; i < list.size(); ++i) {
      const double dist = (x - list[i].w).norm();
      if (dist < best) {
        best = dist;
        nearest = i;
      }
    }
    if (best < threshold_) {
      Centroid& c = list[nearest];
      const auto count = static_cast<double>(c.count);
      c.w = (count * c.w + x) / (count + 1.0);
      ++c.count;
    } else {
      list.push_back({x, 1});
    }
  }
  if (total_centroids() > max_centroids_) merge_closest_pair();
}

void CbclLearner::merge_closest_pair() {
  double best = std::numeric_limits<double>::infinity();
  size_t best_class = 0, best_i = 0, best_j = 0;
  bool found = false;
  for (size_t k = 0; k < centroids_.size(); ++k) {
    const auto& list = centroids_[k];
    for (size_t i = 0; i + 1 < list.size(); ++i) {
      for (size_t j = i + 1; j < list.size(); ++j) {
        const double dist = (list[i].w - list[j].w).norm();
        if (dist < best) {
          best = dist;
          best_class = k;
          best_i = i;
          best_j = j;
          found = true;
        }
      }
    }
  }
  if (!found) return;  // one centroid per class; nothing mergeable
  auto& list = centroids_[best_class];
  Centroid& a = list[best_i];
  const Centroid& b = list[best_j];
  const double total = static_cast<double>(a.count) + static_cast<double>(b.count);
  if (sum_merge_rule_) {
    a.w = (a.w + b.w) / total;
  } else {
    a.w = (static_cast<double>(a.count) * a.w + static_cast<double>(b.count) * b.w) / total;
  }
  a.count += b.count;
  list.erase(list.begin() + static_cast<std::ptrdiff_t>(best_j));
}

Eigen::VectorXd CbclLearner::scores(const Eigen::VectorXd& x) const {
  check_query(x);
  Eigen::VectorXd s(num_classes_);
  for (uint32_t k = 0; k < num_classes_; ++k) {
    const auto& list = centroids_[k];
    if (list.empty()) {
      s[k] = kNegInf;
      continue;
    }
    double best = (x - list[0].w).norm();
    for (size_t i = 1; i < list.size(); ++i) {
      best = std::min(best, (x - list[i].w).norm());
    }
    s[k] = -best * static_cast<double>(seen_counts_[k]);
  }
  return s;
}

uint64_t CbclLearner::stored_scalars() const {
  return total_centroids() * (static_cast<uint64_t>(dim_) + 1) + num_classes_;
}

void CbclLearner::restore_state(std::vector<std::vector<Centroid>> centroids,
                                std::vector<uint64_t> seen_counts) {
  if (centroids.size() != num_classes_ || seen_counts.size() != num_classes_) {
    throw Error(ErrorCode::invalid_argument, "cbcl restore: class count mismatch");
  }
  centroids_ = std::move(centroids);
  seen_counts_ = std::move(seen_counts);
}

void CbclLearner::save(const std::string& dir) const {
  LearnerConfig config;
  config.cbcl_distance_threshold = threshold_;
  config.cbcl_max_centroids = max_centroids_;
  config.cbcl_sum_merge_rule = sum_merge_rule_;
  json meta = base_meta(*this, config);
  const uint64_t total = total_centroids();
  Eigen::MatrixXd ws(total, dim_);
  std::vector<uint32_t> classes;
  std::vector<uint64_t> counts;
  Eigen::Index row = 0;
  for (uint32_t k = 0; k < num_classes_; ++k) {
    for (const auto& c : centroids_[k]) {
      ws.row(row++) = c.w.transpose();
      classes.push_back(k);
      counts.push_back(c.count);
    }
  }
  meta["state"]["centroid_classes"] = classes;
  meta["state"]["centroid_counts"] = counts;
  meta["state"]["seen_counts"] = seen_counts_;
  save_meta(dir, meta);
  write_matrix(dir + "/centroids.bin", ws);
}

// ---------------------------------------------------------------------------
// Factory and memory model

const std::vector<std::string>& learner_kinds() {
  static const std::vector<std::string> kinds = {"ncm",        "sovr",     "slda",
                                                 "naive_bayes", "perceptron", "finetune",
                                                 "replay",     "cbcl"};
  return kinds;
}

uint64_t stored_scalars_model(const std::string& kind, uint32_t num_classes, uint32_t dim,
                              const LearnerConfig& config) {
  const uint64_t k = num_classes;
  const uint64_t d = dim;
  if (kind == "ncm" || kind == "sovr") return k * d + k;
  if (kind == "slda") return k * d + k + d * d;
  if (kind == "naive_bayes") return 2 * k * d + k;
  if (kind == "perceptron") return k * d;
  if (kind == "finetune") return k * d + k;
  if (kind == "replay") return k * d + k + static_cast<uint64_t>(config.replay_quota) * k * d;
  if (kind == "cbcl") return static_cast<uint64_t>(config.cbcl_max_centroids) * (d + 1) + k;
  throw Error(ErrorCode::invalid_argument, "no memory model for learner kind: " + kind);
}

std::unique_ptr<Learner> make_learner(const std::string& kind, uint32_t dim, uint32_t num_classes,
                                      const LearnerConfig& config) {
  if (kind == "ncm") return std::make_unique<NcmLearner>(dim, num_classes);
  if (kind == "sovr") return std::make_unique<SovrLearner>(dim, num_classes);
  if (kind == "slda") return std::make_unique<SldaLearner>(dim, num_classes, config.shrinkage);
  if (kind == "naive_bayes") {
    return std::make_unique<NaiveBayesLearner>(dim, num_classes, config.shrinkage);
  }
  if (kind == "perceptron") return std::make_unique<PerceptronLearner>(dim, num_classes);
  const SgdHyperparams hp{config.lr, config.weight_decay, config.momentum};
  if (kind == "finetune") return std::make_unique<FinetuneLearner>(dim, num_classes, hp);
  if (kind == "replay") {
    return std::make_unique<ReplayLearner>(dim, num_classes, hp, config.replay_quota,
                                           config.replay_draws, config.seed);
  }
  if (kind == "cbcl") {
    return std::make_unique<CbclLearner>(dim, num_classes, config.cbcl_distance_threshold,
                                         config.cbcl_max_centroids, config.cbcl_sum_merge_rule);
  }
  throw Error(ErrorCode::invalid_argument, "unknown learner kind: " + kind);
}

namespace {

std::vector<RunningMean> load_running_means(const std::string& dir, const json& meta, uint32_t dim,
                                            uint32_t num_classes) {
  const Eigen::MatrixXd means = read_matrix(dir + "/means.bin");
  const std::vector<uint64_t> counts = u64_list(meta.at("state").at("counts"));
  if (means.rows() != num_classes || means.cols() != dim || counts.size() != num_classes) {
    throw Error(ErrorCode::format, "checkpoint mean shapes inconsistent: " + dir);
  }
  std::vector<RunningMean> result;
  result.reserve(num_classes);
  for (uint32_t c = 0; c < num_classes; ++c) {
    RunningMean m(dim);
    m.restore(means.row(c).transpose(), counts[c]);
    result.push_back(std::move(m));
  }
  return result;
}

void load_head(const std::string& dir, LinearHead* head) {
  head->set_weights(read_matrix(dir + "/weights.bin"));
  head->set_bias(read_matrix(dir + "/bias.bin").row(0).transpose());
  head->restore_velocity(read_matrix(dir + "/velocity_w.bin"),
                         read_matrix(dir + "/velocity_b.bin").row(0).transpose());
}

}  // namespace

std::unique_ptr<Learner> load_learner(const std::string& checkpoint_dir) {
  const json meta = load_meta(checkpoint_dir);
  const auto kind = meta.at("kind").get<std::string>();
  const auto dim = meta.at("dim").get<uint32_t>();
  const auto num_classes = meta.at("num_classes").get<uint32_t>();
  const LearnerConfig config = config_from_json_obj(meta.at("config"));
  std::unique_ptr<Learner> learner = make_learner(kind, dim, num_classes, config);
  const json& state = meta.at("state");

  if (kind == "ncm" || kind == "sovr") {
    auto* ncm = static_cast<NcmLearner*>(learner.get());
    ncm->restore_means(load_running_means(checkpoint_dir, meta, dim, num_classes));
  } else if (kind == "slda") {
    auto* slda = static_cast<SldaLearner*>(learner.get());
    SharedCovariance cov(dim);
    cov.restore(read_matrix(checkpoint_dir + "/sigma.bin"),
                state.at("total_count").get<uint64_t>());
    slda->restore_state(load_running_means(checkpoint_dir, meta, dim, num_classes), std::move(cov));
  } else if (kind == "naive_bayes") {
    auto* nb = static_cast<NaiveBayesLearner*>(learner.get());
    const Eigen::MatrixXd means = read_matrix(checkpoint_dir + "/means.bin");
    const Eigen::MatrixXd m2 = read_matrix(checkpoint_dir + "/m2.bin");
    const std::vector<uint64_t> counts = u64_list(state.at("counts"));
    if (means.rows() != num_classes || m2.rows() != num_classes || counts.size() != num_classes) {
      throw Error(ErrorCode::format, "checkpoint stat shapes inconsistent: " + checkpoint_dir);
    }
    std::vector<WelfordAccumulator> stats;
    stats.reserve(num_classes);
    for (uint32_t c = 0; c < num_classes; ++c) {
      WelfordAccumulator acc(dim);
      acc.restore(means.row(c).transpose(), m2.row(c).transpose(), counts[c]);
      stats.push_back(std::move(acc));
    }
    nb->restore_stats(std::move(stats));
  } else if (kind == "perceptron") {
    auto* perceptron = static_cast<PerceptronLearner*>(learner.get());
    const auto seen_ints = state.at("seen").get<std::vector<int>>();
    std::vector<uint8_t> seen(seen_ints.begin(), seen_ints.end());
    perceptron->restore_state(read_matrix(checkpoint_dir + "/weights.bin"), std::move(seen));
  } else if (kind == "finetune") {
    load_head(checkpoint_dir, &static_cast<FinetuneLearner*>(learner.get())->head());
  } else if (kind == "replay") {
    auto* replay = static_cast<ReplayLearner*>(learner.get());
    load_head(checkpoint_dir, &replay->head());
    const Eigen::MatrixXd stored = read_matrix(checkpoint_dir + "/buffer.bin");
    const auto labels = state.at("buffer_labels").get<std::vector<uint32_t>>();
    if (static_cast<size_t>(stored.rows()) != labels.size()) {
      throw Error(ErrorCode::format, "checkpoint buffer shapes inconsistent: " + checkpoint_dir);
    }
    std::vector<std::vector<Eigen::VectorXd>> per_class(num_classes);
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= num_classes) {
        throw Error(ErrorCode::format, "checkpoint buffer label out of range: " + checkpoint_dir);
      }
      per_class[labels[i]].push_back(stored.row(static_cast<Eigen::Index>(i)).transpose());
    }
    for (uint32_t c = 0; c < num_classes; ++c) {
      replay->buffer_mutable().restore_class(c, std::move(per_class[c]));
    }
    const auto rng_words = state.at("rng_state").get<std::vector<std::string>>();
    if (rng_words.size() != 4) {
      throw Error(ErrorCode::format, "checkpoint rng state malformed: " + checkpoint_dir);
    }
    uint64_t words[4];
    for (int i = 0; i < 4; ++i) words[i] = std::stoull(rng_words[i]);
    replay->rng().set_state(words);
  } else if (kind == "cbcl") {
    auto* cbcl = static_cast<CbclLearner*>(learner.get());
    const Eigen::MatrixXd ws = read_matrix(checkpoint_dir + "/centroids.bin");
    const auto classes = state.at("centroid_classes").get<std::vector<uint32_t>>();
    const auto counts = u64_list(state.at("centroid_counts"));
    const auto seen = u64_list(state.at("seen_counts"));
    if (static_cast<size_t>(ws.rows()) != classes.size() || classes.size() != counts.size() ||
        seen.size() != num_classes) {
      throw Error(ErrorCode::format, "checkpoint centroid shapes inconsistent: " + checkpoint_dir);
    }
    std::vector<std::vector<Centroid>> centroids(num_classes);
    for (size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] >= num_classes) {
        throw Error(ErrorCode::format, "checkpoint centroid label out of range: " + checkpoint_dir);
      }
      centroids[classes[i]].push_back(
          {ws.row(static_cast<Eigen::Index>(i)).transpose(), counts[i]});
    }
    cbcl->restore_state(std::move(centroids), seen);
  } else {
    throw Error(ErrorCode::format, "checkpoint kind not loadable: " + kind);
  }
  return learner;
}

}  // namespace ocl
