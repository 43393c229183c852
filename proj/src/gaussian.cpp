#include "vmc/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace vmc {

namespace {
constexpr double k_log_two_pi = 1.8378770664093454835606594728112;
}

Gaussian::Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  const int d = static_cast<int>(mean_.size());
  if (cov_.rows() != d || cov_.cols() != d) {
    throw std::invalid_argument("gaussian: covariance shape does not match mean");
  }
  if (d == 0) return;
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("gaussian: covariance not symmetric");
  }
  cov_ = ((cov_ + cov_.transpose()) * 0.5).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian: covariance not positive definite");
  }
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (d * k_log_two_pi + log_det_);
}

double Gaussian::log_pdf(const Eigen::VectorXd& x) const {
  if (dim() == 0) return 0.0;
  if (x.size() != mean_.size()) {
    throw std::invalid_argument("gaussian: log_pdf dimension mismatch");
  }
  // Solve L y = (x - mean); the quadratic form is |y|^2.
  const Eigen::VectorXd y =
      chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * y.squaredNorm();
}

Eigen::VectorXd Gaussian::sample(Rng& rng) const {
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  if (dim() == 0) return z;
  return mean_ + chol_.triangularView<Eigen::Lower>() * z;
}

Gaussian Gaussian::marginal(int start, int len) const {
  if (start < 0 || len < 0 || start + len > dim()) {
    throw std::invalid_argument("gaussian: marginal range out of bounds");
  }
  return Gaussian(mean_.segment(start, len), cov_.block(start, start, len, len));
}

double gaussian_kl(const Gaussian& q, const Gaussian& p) {
  if (q.dim() != p.dim()) {
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  }
  const int d = q.dim();
  if (d == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_p(p.cov());
  const Eigen::MatrixXd pinv_q = llt_p.solve(q.cov());
  const Eigen::VectorXd diff = p.mean() - q.mean();
  const double quad = diff.dot(llt_p.solve(diff));
  return 0.5 * (pinv_q.trace() + quad - d + p.log_det_cov() - q.log_det_cov());
}

}  // namespace vmc
