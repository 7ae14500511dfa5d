#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>

#include "error.hpp"

namespace ocl {

// Single-pass estimators shared by the learners. All arithmetic is 64-bit.
// Single-writer; concurrent reads are only safe between updates.

class RunningMean {
 public:
  explicit RunningMean(uint32_t dim) : mean_(Eigen::VectorXd::Zero(dim)) {}

  // w <- (c*w + x) / (c + 1); c <- c + 1
  void update(const Eigen::VectorXd& x);

  const Eigen::VectorXd& mean() const { return mean_; }
  uint64_t count() const { return count_; }
  uint32_t dim() const { return static_cast<uint32_t>(mean_.size()); }

  void restore(Eigen::VectorXd mean, uint64_t count);

 private:
  Eigen::VectorXd mean_;
  uint64_t count_ = 0;
};

class WelfordAccumulator {
 public:
  explicit WelfordAccumulator(uint32_t dim)
      : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

  void update(const Eigen::VectorXd& x);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  uint64_t count() const { return count_; }
  uint32_t dim() const { return static_cast<uint32_t>(mean_.size()); }

  // Sample variance m2 / (count - 1); zero when count <= 1.
  Eigen::VectorXd variance() const;

  void restore(Eigen::VectorXd mean, Eigen::VectorXd m2, uint64_t count);

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  uint64_t count_ = 0;
};

// Shared streaming covariance with a cached shrinkage-regularized precision
// matrix. The update must be fed the class mean from BEFORE the sample is
// folded into that mean.
class SharedCovariance {
 public:
  explicit SharedCovariance(uint32_t dim) : sigma_(Eigen::MatrixXd::Zero(dim, dim)) {}

  // With t = total_count: delta = t*(x-mu)(x-mu)^T/(t+1);
  // sigma <- (t*sigma + delta)/(t+1); total_count <- t+1.
  void update(const Eigen::VectorXd& x, const Eigen::VectorXd& class_mean_before);

  const Eigen::MatrixXd& sigma() const { return sigma_; }
  uint64_t total_count() const { return total_count_; }
  uint32_t dim() const { return static_cast<uint32_t>(sigma_.rows()); }

  // ((1-eps)*sigma + eps*I)^-1 via an SPD solve, eps in (0, 1); cached until
  // the next update.
  const Eigen::MatrixXd& precision(double epsilon) const;

  void restore(Eigen::MatrixXd sigma, uint64_t total_count);

 private:
  Eigen::MatrixXd sigma_;
  uint64_t total_count_ = 0;
  mutable std::optional<Eigen::MatrixXd> cached_precision_;
  mutable double cached_epsilon_ = 0.0;
};

}  // namespace ocl
