#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

namespace vmc {

/// Monte Carlo standard error of the mean of a correlated sequence via
/// batch means (batch size floor(n^(2/3)), remainder dropped). Requires at
/// least 4 points so that two batches exist.
double mcse_batch_means(std::span<const double> xs);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Asymptotic two-sample KS p-value (Kolmogorov distribution tail).
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

/// Rule-of-thumb Gaussian-kernel bandwidth: 0.9 min(sd, iqr/1.34) n^{-1/5}.
double silverman_bandwidth(std::span<const double> xs);

/// Gaussian kernel density estimate on n_points equally spaced abscissae
/// over [lo, hi]; returns (x, density).
std::pair<Eigen::VectorXd, Eigen::VectorXd> kde1d(std::span<const double> xs,
                                                  double lo, double hi, int n_points);

}  // namespace vmc
