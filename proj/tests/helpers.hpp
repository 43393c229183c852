// Shared fixtures and independent oracles for the unit tests.
//
// The enumeration oracle here deliberately avoids the production code paths:
// it marginalises hidden nodes by summing plain probabilities (no
// log-sum-exp) and evaluates the Gaussian prior with explicit inverses and
// determinants (no Cholesky).  Agreement with the library is therefore
// evidence, not tautology.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Dense>

#include "vmc/model.hpp"
#include "vmc/network.hpp"
#include "vmc/rng.hpp"

namespace vmctest {

constexpr double kPi = 3.14159265358979323846;

// Gaussian prior density via inverse + determinant (production uses Cholesky).
inline double naive_log_prior(const vmc::GaussianPrior& prior,
                              const Eigen::VectorXd& theta) {
  double lp = 0.0;
  int off = 0;
  for (int b = 0; b < prior.n_blocks(); ++b) {
    const vmc::Gaussian& g = prior.block(b);
    const int k = static_cast<int>(g.dim());
    if (k == 0) continue;
    const Eigen::VectorXd d = theta.segment(off, k) - g.mean();
    const Eigen::MatrixXd c = g.cov();
    lp += -0.5 * (k * std::log(2.0 * kPi) + std::log(c.determinant()) +
                  d.dot(c.inverse() * d));
    off += k;
  }
  return lp;
}

// P(x_i = s | parent spins) in plain probability space.
inline double naive_node_prob(const vmc::BeliefNetwork& net, int node, double s,
                              const Eigen::VectorXd& spins,
                              const Eigen::VectorXd& theta_node) {
  const vmc::Node& nd = net.nodes[node];
  if (nd.parents.empty()) {
    const double rho = net.root_prob(node);
    return s > 0.0 ? rho : 1.0 - rho;
  }
  double a = net.alpha;
  for (std::size_t j = 0; j < nd.parents.size(); ++j) {
    a += theta_node[static_cast<int>(j)] * spins[nd.parents[j]];
  }
  return 1.0 / (1.0 + std::exp(-s * a));
}

// Unnormalised log posterior by direct enumeration of hidden configurations,
// summing per-slice probabilities without log-sum-exp.
inline double naive_log_posterior(const vmc::BeliefNetwork& net,
                                  const vmc::GaussianPrior& prior,
                                  const vmc::Dataset& data,
                                  const Eigen::VectorXd& theta) {
  const std::vector<int> offsets = net.theta_offsets();
  const std::vector<int> hidden = net.hidden_nodes();
  const std::size_t n_h = hidden.size();
  double lp = naive_log_prior(prior, theta);
  for (int t = 0; t < data.T(); ++t) {
    double slice_p = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n_h); ++mask) {
      Eigen::VectorXd spins(net.n_nodes());
      for (int i = 0; i < net.n_nodes(); ++i) {
        const vmc::Cell c = data(t, i);
        spins[i] = c == vmc::Cell::Unobserved ? 0.0 : vmc::spin(c);
      }
      for (std::size_t h = 0; h < n_h; ++h) {
        spins[hidden[h]] = (mask >> h) & 1 ? 1.0 : -1.0;
      }
      double prod = 1.0;
      for (int i = 0; i < net.n_nodes(); ++i) {
        const int len = static_cast<int>(net.nodes[i].parents.size());
        const Eigen::VectorXd th = theta.segment(offsets[i], len);
        prod *= naive_node_prob(net, i, spins[i], spins, th);
      }
      slice_p += prod;
    }
    lp += std::log(slice_p);
  }
  return lp;
}

struct Instance {
  vmc::BeliefNetwork net;
  vmc::GaussianPrior prior;
  vmc::Dataset data;
};

// A layered network: `n_roots` root nodes (the first `n_hidden` of them
// hidden) feeding one observed child.  Parameters are drawn from `rng`.
inline Instance random_instance(vmc::Rng& rng, int n_roots, int n_hidden,
                                int T, double prior_var = 4.0) {
  vmc::BeliefNetwork net;
  net.alpha = rng.normal() * 0.5;
  for (int i = 0; i < n_roots; ++i) {
    vmc::Node root;
    root.name = "r" + std::to_string(i);
    root.hidden = i < n_hidden;
    root.root_mean = 0.2 + 0.6 * rng.uniform();
    net.nodes.push_back(root);
  }
  vmc::Node child;
  child.name = "c";
  for (int i = 0; i < n_roots; ++i) child.parents.push_back(i);
  child.theta = Eigen::VectorXd::NullaryExpr(
      n_roots, [&](Eigen::Index) { return rng.normal(); });
  net.nodes.push_back(child);
  net.validate();

  vmc::GaussianPrior prior = vmc::GaussianPrior::isotropic(net, 0.0, prior_var);
  vmc::Dataset data = vmc::generate(net, T, rng);
  return {std::move(net), prior, std::move(data)};
}

// The canonical one-parent fixture: root -> child, scalar weight.
inline Instance one_parent_instance(double theta_true, int T,
                                    std::uint64_t seed, double alpha = 0.5,
                                    double root_mean = 0.5,
                                    double prior_var = 100.0) {
  vmc::BeliefNetwork net;
  net.alpha = alpha;
  vmc::Node root;
  root.name = "root";
  root.root_mean = root_mean;
  net.nodes.push_back(root);
  vmc::Node child;
  child.name = "child";
  child.parents = {0};
  child.theta = Eigen::VectorXd::Constant(1, theta_true);
  net.nodes.push_back(child);
  net.validate();
  vmc::GaussianPrior prior = vmc::GaussianPrior::isotropic(net, 0.0, prior_var);
  vmc::Dataset data = vmc::generate(net, T, seed);
  return {std::move(net), prior, std::move(data)};
}

// Scratch directory that cleans up after itself.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("vmc_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace vmctest
