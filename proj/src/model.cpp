#include "vmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vmc {

double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_logistic(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf/nan propagates)
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

namespace {

double assigned_spin(const Eigen::VectorXd& slice_values, int i) {
  const double v = slice_values[i];
  if (std::isnan(v) || (v != 1.0 && v != -1.0)) {
    throw std::invalid_argument("incomplete slice");
  }
  return v;
}

}  // namespace

double log_conditional(const BeliefNetwork& net, int node,
                       const Eigen::VectorXd& slice_values) {
  if (slice_values.size() != net.n_nodes()) {
    throw std::invalid_argument("log_conditional: slice length != node count");
  }
  const Node& nd = net.nodes[node];
  const double x = assigned_spin(slice_values, node);
  if (nd.parents.empty() && !std::isnan(nd.root_mean)) {
    const double rho = net.root_prob(node);
    return x > 0 ? std::log(rho) : std::log1p(-rho);
  }
  double act = net.alpha;
  for (size_t k = 0; k < nd.parents.size(); ++k) {
    act += nd.theta[static_cast<Eigen::Index>(k)] *
           assigned_spin(slice_values, nd.parents[k]);
  }
  return log_logistic(x * act);
}

GaussianPrior::GaussianPrior(std::vector<Gaussian> blocks) : blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) dim_ += b.dim();
}

GaussianPrior GaussianPrior::isotropic(const BeliefNetwork& net, double mean, double var) {
  std::vector<Gaussian> blocks;
  blocks.reserve(net.nodes.size());
  for (const auto& node : net.nodes) {
    const int d = static_cast<int>(node.parents.size());
    blocks.emplace_back(Eigen::VectorXd::Constant(d, mean),
                        Eigen::MatrixXd::Identity(d, d) * var);
  }
  return GaussianPrior(std::move(blocks));
}

double GaussianPrior::log_pdf(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim_) throw std::invalid_argument("prior log_pdf: dimension mismatch");
  double lp = 0.0;
  int off = 0;
  for (const auto& b : blocks_) {
    lp += b.log_pdf(theta.segment(off, b.dim()));
    off += b.dim();
  }
  return lp;
}

Gaussian GaussianPrior::full() const {
  Eigen::VectorXd mean(dim_);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim_, dim_);
  int off = 0;
  for (const auto& b : blocks_) {
    mean.segment(off, b.dim()) = b.mean();
    cov.block(off, off, b.dim(), b.dim()) = b.cov();
    off += b.dim();
  }
  return Gaussian(std::move(mean), std::move(cov));
}

double log_prior(const GaussianPrior& prior, const Eigen::VectorXd& theta) {
  return prior.log_pdf(theta);
}

LogPosterior::LogPosterior(const BeliefNetwork& net, const GaussianPrior& prior,
                           const Dataset& data, int h_max)
    : net_(net), prior_(prior), offsets_(net.theta_offsets()), T_(data.T()) {
  net_.validate();
  check_compatible(net_, data);
  if (prior_.n_blocks() != net_.n_nodes() || prior_.dim() != net_.n_theta()) {
    throw std::invalid_argument("log posterior: prior shape does not match network");
  }

  const auto hidden = net_.hidden_nodes();
  n_hidden_ = static_cast<int>(hidden.size());
  if (n_hidden_ > h_max) {
    throw std::invalid_argument("hidden enumeration limit exceeded");
  }
  std::vector<int> bit_of(net_.n_nodes(), -1);
  for (int b = 0; b < n_hidden_; ++b) bit_of[hidden[b]] = b;

  for (int i = 0; i < net_.n_nodes(); ++i) {
    const Node& node = net_.nodes[i];
    const bool self_hidden = node.hidden;
    bool any_parent_hidden = false;
    for (int p : node.parents) any_parent_hidden |= net_.nodes[p].hidden;

    if (!self_hidden && !any_parent_hidden) {
      if (node.parents.empty()) {
        // Observed root: a constant in theta, folded in once.
        const double rho = net_.root_prob(i);
        for (int t = 0; t < T_; ++t) {
          const_term_ +=
              data(t, i) == Cell::Plus ? std::log(rho) : std::log1p(-rho);
        }
      } else {
        CleanTerm term;
        term.node = i;
        term.s.resize(T_);
        term.p.resize(T_, static_cast<Eigen::Index>(node.parents.size()));
        for (int t = 0; t < T_; ++t) {
          term.s[t] = spin(data(t, i));
          for (size_t k = 0; k < node.parents.size(); ++k) {
            term.p(t, static_cast<Eigen::Index>(k)) = spin(data(t, node.parents[k]));
          }
        }
        clean_.push_back(std::move(term));
      }
      continue;
    }

    MixedTerm term;
    term.node = i;
    if (self_hidden) {
      term.self_bit = bit_of[i];
    } else {
      term.s.resize(T_);
      for (int t = 0; t < T_; ++t) term.s[t] = spin(data(t, i));
    }
    if (node.parents.empty()) {
      const double rho = net_.root_prob(i);
      term.log_rho = std::log(rho);
      term.log_1m_rho = std::log1p(-rho);
    }
    for (int p : node.parents) {
      ParentRef ref;
      if (net_.nodes[p].hidden) {
        ref.bit = bit_of[p];
      } else {
        ref.spins.resize(T_);
        for (int t = 0; t < T_; ++t) ref.spins[t] = spin(data(t, p));
      }
      term.parents.push_back(std::move(ref));
    }
    mixed_.push_back(std::move(term));
  }
}

double LogPosterior::log_likelihood(const Eigen::VectorXd& theta) const {
  if (theta.size() != prior_.dim()) {
    throw std::invalid_argument("log_likelihood: dimension mismatch");
  }
  double ll = const_term_;

  for (const auto& term : clean_) {
    const int off = offsets_[term.node];
    const int len = offsets_[term.node + 1] - off;
    Eigen::ArrayXd a =
        term.s.array() * ((term.p * theta.segment(off, len)).array() + net_.alpha);
    for (int t = 0; t < T_; ++t) ll += log_logistic(a[t]);
  }

  if (!mixed_.empty()) {
    const int n_assign = 1 << n_hidden_;
    std::vector<double> logw(static_cast<size_t>(n_assign));
    std::vector<double> hspin(static_cast<size_t>(n_hidden_));
    for (int t = 0; t < T_; ++t) {
      for (int c = 0; c < n_assign; ++c) {
        for (int b = 0; b < n_hidden_; ++b) {
          hspin[static_cast<size_t>(b)] = (c >> b) & 1 ? 1.0 : -1.0;
        }
        double w = 0.0;
        for (const auto& term : mixed_) {
          const double x = term.self_bit >= 0
                               ? hspin[static_cast<size_t>(term.self_bit)]
                               : term.s[t];
          if (term.parents.empty()) {
            w += x > 0 ? term.log_rho : term.log_1m_rho;
            continue;
          }
          const int off = offsets_[term.node];
          double act = net_.alpha;
          for (size_t k = 0; k < term.parents.size(); ++k) {
            const auto& ref = term.parents[k];
            const double ps =
                ref.bit >= 0 ? hspin[static_cast<size_t>(ref.bit)] : ref.spins[t];
            act += theta[off + static_cast<int>(k)] * ps;
          }
          w += log_logistic(x * act);
        }
        logw[static_cast<size_t>(c)] = w;
      }
      ll += log_sum_exp(logw);
    }
  }
  return ll;
}

double LogPosterior::operator()(const Eigen::VectorXd& theta) const {
  return prior_.log_pdf(theta) + log_likelihood(theta);
}

double log_posterior_unnorm(const BeliefNetwork& net, const GaussianPrior& prior,
                            const Dataset& data, const Eigen::VectorXd& theta,
                            int h_max) {
  return LogPosterior(net, prior, data, h_max)(theta);
}

Dataset generate(const BeliefNetwork& net, int T, Rng& rng) {
  net.validate();
  const int n = net.n_nodes();
  Dataset data(T, n);
  data.truth.resize(T, n);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      const Node& node = net.nodes[i];
      double p_plus;
      if (node.parents.empty()) {
        p_plus = net.root_prob(i);
      } else {
        double act = net.alpha;
        for (size_t k = 0; k < node.parents.size(); ++k) {
          act += node.theta[static_cast<Eigen::Index>(k)] *
                 data.truth(t, node.parents[k]);
        }
        p_plus = logistic(act);
      }
      const int x = rng.uniform() < p_plus ? 1 : -1;
      data.truth(t, i) = x;
      data.at(t, i) = node.hidden ? Cell::Unobserved : (x == 1 ? Cell::Plus : Cell::Minus);
    }
  }
  return data;
}

Dataset generate(const BeliefNetwork& net, int T, std::uint64_t seed) {
  Rng rng(seed);
  return generate(net, T, rng);
}

}  // namespace vmc
