#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "vmc/model.hpp"
#include "vmc/network.hpp"

namespace vmc {

/// Factorized posterior approximation: one Gaussian per node's parameter
/// block, one bound tightness parameter per (node, slice) for nodes with
/// parents, and one Bernoulli mean per hidden node shared across slices.
struct VariationalState {
  std::vector<Eigen::VectorXd> mu;     // per node, length = parent count
  std::vector<Eigen::MatrixXd> sigma;  // per node, SPD
  std::vector<Eigen::VectorXd> xi;     // per node, length T; empty for roots
  Eigen::VectorXd lambda;              // per node, NaN unless hidden
  int T = 0;

  int n_nodes() const { return static_cast<int>(mu.size()); }
};

struct BoundReport {
  double lower_bound = 0.0;
  int iteration = 0;
  double delta = 0.0;  // change from the previous iteration's bound
};

/// phi(xi) = tanh(xi/2) / (4 xi), continued by its limit 1/8 at xi = 0.
double phi(double xi);

/// Quadratic lower bound on log logistic(a), tight at |a| = xi:
/// log g(xi) + (a - xi)/2 - phi(xi) (a^2 - xi^2).
double jj_log_bound(double a, double xi);

/// Neutral starting point: (mu, sigma) at the prior, xi = 1 everywhere,
/// lambda = 1/2 on hidden nodes.
VariationalState init_state(const BeliefNetwork& net, const GaussianPrior& prior, int T);

/// First and second moments of a node's parent vector at one slice under the
/// factorized Bernoulli over hidden parents: mean entries are the observed
/// spin or 2 lambda - 1; the second moment is the mean outer product with
/// the diagonal forced to 1.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments_of_parents(
    const VariationalState& state, const BeliefNetwork& net, const Dataset& data,
    int node, int t);

/// One full sweep: batch information-form (mu, sigma) refresh for every node
/// with parents, then the xi refresh for every (node, slice), then a
/// sequential damped lambda update per hidden node. Each stage maximizes the
/// bound in its own coordinates, so the reported delta is nonnegative up to
/// rounding. Throws if an updated covariance fails its Cholesky
/// factorization ("variational covariance not SPD").
std::pair<VariationalState, BoundReport> em_step(const BeliefNetwork& net,
                                                 const GaussianPrior& prior,
                                                 const Dataset& data,
                                                 const VariationalState& state);

/// The evidence lower bound at the given state: expected quadratic bounds on
/// every conditional, exact Bernoulli terms for roots, minus the Gaussian
/// KL to the prior, plus the hidden-variable entropy (one H(lambda) per
/// hidden node per slice).
double lower_bound(const BeliefNetwork& net, const GaussianPrior& prior,
                   const Dataset& data, const VariationalState& state);

struct FitOptions {
  int max_iters = 200;
  double tol = 1e-8;  // stop when |delta| < tol * (1 + |bound|)
};

struct FitResult {
  VariationalState state;
  std::vector<BoundReport> reports;  // one per iteration, in order
  bool converged = false;
};

FitResult fit_variational(const BeliefNetwork& net, const GaussianPrior& prior,
                          const Dataset& data, FitOptions opts = {});

/// The fitted approximation as one Gaussian over the stacked parameter
/// vector (block-diagonal across nodes).
Gaussian proposal_from_state(const VariationalState& state, const BeliefNetwork& net);

// Structured text serialization; round-trips finite doubles bit-exactly.
void save_state(const VariationalState& state, const std::string& path);
VariationalState load_state(const std::string& path);

}  // namespace vmc
