#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "vmc/rng.hpp"

namespace vmc {

/// Multivariate normal with a cached Cholesky factor. Construction fails if
/// the covariance is not symmetric positive definite. A zero-dimensional
/// Gaussian is valid and contributes nothing (log_pdf = 0, empty samples).
class Gaussian {
 public:
  Gaussian() = default;
  Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  double log_det_cov() const { return log_det_; }

  double log_pdf(const Eigen::VectorXd& x) const;

  /// Draws mean + L z, consuming exactly dim() normals in coordinate order.
  Eigen::VectorXd sample(Rng& rng) const;

  /// Marginal over the coordinate range [start, start+len).
  Gaussian marginal(int start, int len) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;  // lower triangular
  double log_det_ = 0.0;
  double log_norm_ = 0.0;
};

/// KL(q || p) between Gaussians of equal dimension.
double gaussian_kl(const Gaussian& q, const Gaussian& p);

}  // namespace vmc
