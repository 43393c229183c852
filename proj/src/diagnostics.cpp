#include "vmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vmc {

double mcse_batch_means(std::span<const double> xs) {
  const long n = static_cast<long>(xs.size());
  if (n < 4) throw std::invalid_argument("mcse: need at least 4 points");
  // Batch size n^(2/3): sqrt(n) batches understate the error when the
  // autocorrelation time rivals sqrt(n), as for small-step random walks.
  const long b = static_cast<long>(std::floor(std::pow(static_cast<double>(n), 2.0 / 3.0)));
  const long m = n / b;
  double grand = 0.0;
  std::vector<double> means(static_cast<size_t>(m));
  for (long k = 0; k < m; ++k) {
    double s = 0.0;
    for (long i = k * b; i < (k + 1) * b; ++i) s += xs[static_cast<size_t>(i)];
    means[static_cast<size_t>(k)] = s / static_cast<double>(b);
    grand += means[static_cast<size_t>(k)];
  }
  grand /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : means) ss += (v - grand) * (v - grand);
  // Standard error of the grand mean, treating batch means as independent.
  return std::sqrt(ss / (static_cast<double>(m - 1) * static_cast<double>(m)));
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t na = a.size(), nb = b.size();
  size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < na && ib < nb) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < na && a[ia] <= x) ++ia;
    while (ib < nb && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na -
                             static_cast<double>(ib) / nb));
  }
  return d;
}

double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double d = ks_statistic(std::move(a), std::move(b));
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * p, 0.0, 1.0);
}

double silverman_bandwidth(std::span<const double> xs) {
  const size_t n = xs.size();
  if (n < 2) throw std::invalid_argument("bandwidth: need at least 2 points");
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = sorted[static_cast<size_t>(0.75 * (n - 1))] -
                     sorted[static_cast<size_t>(0.25 * (n - 1))];
  double scale = std::min(sd, iqr / 1.34);
  if (scale <= 0.0) scale = std::max(sd, 1e-12);
  return 0.9 * scale * std::pow(static_cast<double>(n), -0.2);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> kde1d(std::span<const double> xs,
                                                  double lo, double hi, int n_points) {
  if (n_points < 2 || !(hi > lo)) throw std::invalid_argument("kde1d: bad abscissae");
  const double h = silverman_bandwidth(xs);
  const double norm =
      1.0 / (static_cast<double>(xs.size()) * h * std::sqrt(2.0 * M_PI));
  Eigen::VectorXd grid(n_points), density(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double x = lo + (hi - lo) * i / (n_points - 1);
    double s = 0.0;
    for (double v : xs) {
      const double z = (x - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    grid[i] = x;
    density[i] = norm * s;
  }
  return {std::move(grid), std::move(density)};
}

}  // namespace vmc
