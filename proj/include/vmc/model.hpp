#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "vmc/gaussian.hpp"
#include "vmc/network.hpp"
#include "vmc/rng.hpp"

namespace vmc {

/// Hidden nodes are marginalized by exact enumeration; more than this many
/// is refused rather than silently blowing up.
inline constexpr int kDefaultHMax = 10;

double logistic(double x);

/// log logistic(x), stable for large |x|.
double log_logistic(double x);

/// Numerically stable log(sum(exp(xs))); -inf for an empty span.
double log_sum_exp(std::span<const double> xs);

/// log p(x_node | parents) at one slice. slice_values holds one entry per
/// node, +-1 where assigned and NaN where not; the node itself and all its
/// parents must be assigned ("incomplete slice" otherwise).
double log_conditional(const BeliefNetwork& net, int node,
                       const Eigen::VectorXd& slice_values);

/// Independent Gaussian prior over each node's parameter block. Nodes
/// without parents get a zero-dimensional block.
class GaussianPrior {
 public:
  explicit GaussianPrior(std::vector<Gaussian> blocks);

  /// N(mean * 1, var * I) on every block, sized from the network.
  static GaussianPrior isotropic(const BeliefNetwork& net, double mean, double var);

  int n_blocks() const { return static_cast<int>(blocks_.size()); }
  int dim() const { return dim_; }
  const Gaussian& block(int i) const { return blocks_[i]; }

  /// Log density of a stacked parameter vector (node blocks concatenated).
  double log_pdf(const Eigen::VectorXd& theta) const;

  /// The prior as one block-diagonal Gaussian over the stacked vector.
  Gaussian full() const;

 private:
  std::vector<Gaussian> blocks_;
  int dim_ = 0;
};

double log_prior(const GaussianPrior& prior, const Eigen::VectorXd& theta);

/// Unnormalized log posterior density of the stacked parameter vector:
/// log prior + sum over slices of the log marginal likelihood, hidden nodes
/// summed out exactly per slice. Evaluating at many points through one
/// LogPosterior instance reuses the precomputed slice structure; the free
/// function below is the one-shot form.
class LogPosterior {
 public:
  LogPosterior(const BeliefNetwork& net, const GaussianPrior& prior,
               const Dataset& data, int h_max = kDefaultHMax);

  double operator()(const Eigen::VectorXd& theta) const;
  double log_likelihood(const Eigen::VectorXd& theta) const;

  const BeliefNetwork& net() const { return net_; }
  const GaussianPrior& prior() const { return prior_; }
  int dim() const { return prior_.dim(); }

 private:
  // Terms where the node and all its parents are observed, vectorized over
  // slices: a_t = s_t (alpha + p_t' theta_i).
  struct CleanTerm {
    int node;
    Eigen::VectorXd s;  // T, node spins
    Eigen::MatrixXd p;  // T x |parents|, parent spins
  };

  // One parent reference inside the enumeration: either a fixed observed
  // spin column or a bit of the hidden assignment.
  struct ParentRef {
    int bit = -1;            // >= 0: hidden, index into the assignment
    Eigen::VectorXd spins;   // bit < 0: observed spins per slice
  };

  // Terms touching at least one hidden value, evaluated per (slice,
  // assignment) inside the log-sum-exp.
  struct MixedTerm {
    int node;
    int self_bit = -1;       // >= 0 when the node itself is hidden
    Eigen::VectorXd s;       // observed node spins when self_bit < 0
    std::vector<ParentRef> parents;
    double log_rho = 0.0;    // root term for x = +1
    double log_1m_rho = 0.0; // and for x = -1
  };

  BeliefNetwork net_;
  GaussianPrior prior_;
  std::vector<int> offsets_;
  int T_ = 0;
  int n_hidden_ = 0;
  double const_term_ = 0.0;  // observed-root contributions, theta-independent
  std::vector<CleanTerm> clean_;
  std::vector<MixedTerm> mixed_;
};

double log_posterior_unnorm(const BeliefNetwork& net, const GaussianPrior& prior,
                            const Dataset& data, const Eigen::VectorXd& theta,
                            int h_max = kDefaultHMax);

/// Ancestral sampling of T slices. Consumes exactly one uniform per node per
/// slice, nodes in index order within each slice. The complete +-1 table is
/// kept in the result's `truth` field; hidden columns are then masked to
/// Unobserved.
Dataset generate(const BeliefNetwork& net, int T, Rng& rng);
Dataset generate(const BeliefNetwork& net, int T, std::uint64_t seed);

}  // namespace vmc
