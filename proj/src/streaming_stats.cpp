#include "streaming_stats.hpp"

#include <Eigen/Cholesky>

namespace ocl {

namespace {

void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw Error(ErrorCode::invalid_argument, std::string(what) + ": dimension mismatch, expected " +
                                                 std::to_string(want) + ", got " +
                                                 std::to_string(got));
}

}  // namespace

void RunningMean::update(const Eigen::VectorXd& x) {
  check_dim(x.size(), mean_.size(), "RunningMean::update");
  const double c = static_cast<double>(count_);
  mean_ = (c * mean_ + x) / (c + 1.0);
  ++count_;
}

void RunningMean::restore(Eigen::VectorXd mean, uint64_t count) {
  check_dim(mean.size(), mean_.size(), "RunningMean::restore");
  mean_ = std::move(mean);
  count_ = count;
}

void WelfordAccumulator::update(const Eigen::VectorXd& x) {
  check_dim(x.size(), mean_.size(), "WelfordAccumulator::update");
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd WelfordAccumulator::variance() const {
  if (count_ <= 1) return Eigen::VectorXd::Zero(mean_.size());
  return m2_ / static_cast<double>(count_ - 1);
}

void WelfordAccumulator::restore(Eigen::VectorXd mean, Eigen::VectorXd m2, uint64_t count) {
  check_dim(mean.size(), mean_.size(), "WelfordAccumulator::restore");
  check_dim(m2.size(), mean_.size(), "WelfordAccumulator::restore");
  mean_ = std::move(mean);
  m2_ = std::move(m2);
  count_ = count;
}

void SharedCovariance::update(const Eigen::VectorXd& x, const Eigen::VectorXd& class_mean_before) {
  check_dim(x.size(), sigma_.rows(), "SharedCovariance::update");
  check_dim(class_mean_before.size(), sigma_.rows(), "SharedCovariance::update");
  const double t = static_cast<double>(total_count_);
  const Eigen::VectorXd delta = x - class_mean_before;
  Eigen::MatrixXd rank1 = (t / (t + 1.0)) * (delta * delta.transpose());
  sigma_ = (t * sigma_ + rank1) / (t + 1.0);
  sigma_ = 0.5 * (sigma_ + sigma_.transpose());  // keep exactly symmetric
  ++total_count_;
  cached_precision_.reset();
}

const Eigen::MatrixXd& SharedCovariance::precision(double epsilon) const {
  if (epsilon <= 0.0 || epsilon >= 1.0)
    throw Error(ErrorCode::invalid_argument, "shrinkage epsilon must lie in (0, 1)");
  if (cached_precision_ && cached_epsilon_ == epsilon) return *cached_precision_;
  const Eigen::Index d = sigma_.rows();
  Eigen::MatrixXd regularized =
      (1.0 - epsilon) * sigma_ + epsilon * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::numeric, "covariance factorization failed (non-finite entries?)");
  cached_precision_ = llt.solve(Eigen::MatrixXd::Identity(d, d));
  cached_epsilon_ = epsilon;
  return *cached_precision_;
}

void SharedCovariance::restore(Eigen::MatrixXd sigma, uint64_t total_count) {
  check_dim(sigma.rows(), sigma_.rows(), "SharedCovariance::restore");
  check_dim(sigma.cols(), sigma_.rows(), "SharedCovariance::restore");
  sigma_ = std::move(sigma);
  total_count_ = total_count;
  cached_precision_.reset();
}

}  // namespace ocl
