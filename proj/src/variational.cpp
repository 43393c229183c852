#include "vmc/variational.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vmc {

namespace {

constexpr double k_lambda_floor = 1e-12;

double clamp_lambda(double l) {
  return std::clamp(l, k_lambda_floor, 1.0 - k_lambda_floor);
}

double bernoulli_entropy(double l) {
  return -(l * std::log(l) + (1.0 - l) * std::log1p(-l));
}

// Per-node slice structure shared by the bound and the EM updates. Observed
// entries are filled once; columns owned by hidden parents (and the node's
// own mean when hidden) are rewritten from lambda before use.
struct NodeWork {
  int node = 0;
  int d = 0;                                   // parent count
  Eigen::MatrixXd pm;                          // T x d parent means
  std::vector<std::pair<int, int>> hidden_cols;  // (column, parent node)
  Eigen::VectorXd s;                           // T node means
  bool node_hidden = false;
};

struct Workspace {
  std::vector<NodeWork> terms;       // nodes with parents, in node order
  std::vector<int> observed_roots;   // theta-independent Bernoulli sums
  std::vector<int> hidden_roots;
  double observed_root_term = 0.0;
  int T = 0;
};

Workspace build_workspace(const BeliefNetwork& net, const Dataset& data) {
  Workspace ws;
  ws.T = data.T();
  for (int i = 0; i < net.n_nodes(); ++i) {
    const Node& node = net.nodes[i];
    if (node.parents.empty()) {
      if (node.hidden) {
        ws.hidden_roots.push_back(i);
      } else {
        ws.observed_roots.push_back(i);
        const double rho = net.root_prob(i);
        for (int t = 0; t < ws.T; ++t) {
          ws.observed_root_term +=
              data(t, i) == Cell::Plus ? std::log(rho) : std::log1p(-rho);
        }
      }
      continue;
    }
    NodeWork w;
    w.node = i;
    w.d = static_cast<int>(node.parents.size());
    w.pm.setZero(ws.T, w.d);
    w.s.setZero(ws.T);
    w.node_hidden = node.hidden;
    for (int k = 0; k < w.d; ++k) {
      const int p = node.parents[static_cast<size_t>(k)];
      if (net.nodes[p].hidden) {
        w.hidden_cols.emplace_back(k, p);
      } else {
        for (int t = 0; t < ws.T; ++t) w.pm(t, k) = spin(data(t, p));
      }
    }
    if (!node.hidden) {
      for (int t = 0; t < ws.T; ++t) w.s[t] = spin(data(t, i));
    }
    ws.terms.push_back(std::move(w));
  }
  return ws;
}

void refresh_workspace(Workspace& ws, const Eigen::VectorXd& lambda) {
  for (auto& w : ws.terms) {
    for (const auto& [col, p] : w.hidden_cols) {
      w.pm.col(col).setConstant(2.0 * lambda[p] - 1.0);
    }
    if (w.node_hidden) w.s.setConstant(2.0 * lambda[w.node] - 1.0);
  }
}

// Expected conditional terms only: quadratic bounds for nodes with parents
// plus exact Bernoulli terms for roots. Excludes the KL and entropy parts,
// which is what makes it the right quantity for the lambda derivative.
double energy(const BeliefNetwork& net, const Dataset&, const VariationalState& state,
              Workspace& ws) {
  refresh_workspace(ws, state.lambda);
  double e = ws.observed_root_term;
  for (int j : ws.hidden_roots) {
    const double rho = net.root_prob(j);
    e += ws.T * (state.lambda[j] * std::log(rho) +
                 (1.0 - state.lambda[j]) * std::log1p(-rho));
  }
  for (const auto& w : ws.terms) {
    const Eigen::VectorXd& mu = state.mu[w.node];
    const Eigen::MatrixXd b =
        state.sigma[w.node] + mu * mu.transpose();  // E[theta theta']
    const Eigen::VectorXd& xi = state.xi[w.node];
    const Eigen::VectorXd pm_mu = w.pm * mu;
    // E[a] = s (alpha + m' mu); E[a^2] = alpha^2 + 2 alpha m' mu + tr(B M)
    // with M = m m' + diag(1 - m^2).
    const Eigen::ArrayXd ea = w.s.array() * (net.alpha + pm_mu.array());
    const Eigen::ArrayXd quad = ((w.pm * b).array() * w.pm.array()).rowwise().sum() +
                                ((1.0 - w.pm.array().square()).matrix() * b.diagonal()).array();
    const Eigen::ArrayXd ea2 = net.alpha * net.alpha +
                               2.0 * net.alpha * pm_mu.array() + quad;
    for (int t = 0; t < ws.T; ++t) {
      const double x = xi[t];
      e += log_logistic(x) + (ea[t] - x) / 2.0 - phi(x) * (ea2[t] - x * x);
    }
  }
  return e;
}

double bound_from_energy(const BeliefNetwork& net, const GaussianPrior& prior,
                         const VariationalState& state, double e, int T) {
  double b = e;
  for (int i = 0; i < net.n_nodes(); ++i) {
    if (net.nodes[i].hidden) b += T * bernoulli_entropy(state.lambda[i]);
    if (!net.nodes[i].parents.empty()) {
      b -= gaussian_kl(Gaussian(state.mu[i], state.sigma[i]), prior.block(i));
    }
  }
  return b;
}

double bound_with_workspace(const BeliefNetwork& net, const GaussianPrior& prior,
                            const Dataset& data, const VariationalState& state,
                            Workspace& ws) {
  return bound_from_energy(net, prior, state, energy(net, data, state, ws), ws.T);
}

void check_state(const BeliefNetwork& net, const VariationalState& state, int T) {
  if (state.n_nodes() != net.n_nodes() || state.T != T) {
    throw std::invalid_argument("variational state shape does not match network/data");
  }
}

}  // namespace

double phi(double xi) {
  if (xi < 0.0) throw std::invalid_argument("phi: xi must be nonnegative");
  if (xi == 0.0) return 0.125;
  return std::tanh(xi / 2.0) / (4.0 * xi);
}

double jj_log_bound(double a, double xi) {
  return log_logistic(xi) + (a - xi) / 2.0 - phi(xi) * (a * a - xi * xi);
}

VariationalState init_state(const BeliefNetwork& net, const GaussianPrior& prior, int T) {
  VariationalState state;
  state.T = T;
  state.lambda = Eigen::VectorXd::Constant(net.n_nodes(),
                                           std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < net.n_nodes(); ++i) {
    state.mu.push_back(prior.block(i).mean());
    state.sigma.push_back(prior.block(i).cov());
    state.xi.push_back(net.nodes[i].parents.empty() ? Eigen::VectorXd()
                                                    : Eigen::VectorXd::Ones(T));
    if (net.nodes[i].hidden) state.lambda[i] = 0.5;
  }
  return state;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments_of_parents(
    const VariationalState& state, const BeliefNetwork& net, const Dataset& data,
    int node, int t) {
  const Node& nd = net.nodes[node];
  const int d = static_cast<int>(nd.parents.size());
  Eigen::VectorXd m(d);
  for (int k = 0; k < d; ++k) {
    const int p = nd.parents[static_cast<size_t>(k)];
    m[k] = net.nodes[p].hidden ? 2.0 * state.lambda[p] - 1.0
                               : static_cast<double>(spin(data(t, p)));
  }
  Eigen::MatrixXd mm = m * m.transpose();
  mm.diagonal().setOnes();
  return {std::move(m), std::move(mm)};
}

double lower_bound(const BeliefNetwork& net, const GaussianPrior& prior,
                   const Dataset& data, const VariationalState& state) {
  check_state(net, state, data.T());
  Workspace ws = build_workspace(net, data);
  return bound_with_workspace(net, prior, data, state, ws);
}

std::pair<VariationalState, BoundReport> em_step(const BeliefNetwork& net,
                                                 const GaussianPrior& prior,
                                                 const Dataset& data,
                                                 const VariationalState& state) {
  check_state(net, state, data.T());
  Workspace ws = build_workspace(net, data);
  const int T = ws.T;
  const double bound_before = bound_with_workspace(net, prior, data, state, ws);

  VariationalState next = state;
  refresh_workspace(ws, state.lambda);

  // (mu, sigma): information-form batch update per node, independent across
  // nodes given the lambdas.
  for (const auto& w : ws.terms) {
    const Gaussian& pb = prior.block(w.node);
    const Eigen::MatrixXd prior_info =
        pb.cov().llt().solve(Eigen::MatrixXd::Identity(w.d, w.d));
    const Eigen::ArrayXd ph = state.xi[w.node].unaryExpr([](double x) { return phi(x); });
    // sum_t phi_t M_t = pm' diag(phi) pm + diag(sum_t phi_t (1 - pm_t^2))
    Eigen::MatrixXd info =
        prior_info + 2.0 * (w.pm.transpose() * ph.matrix().asDiagonal() * w.pm);
    info.diagonal() +=
        2.0 * ((1.0 - w.pm.array().square()).colwise() * ph).colwise().sum().matrix().transpose();
    const Eigen::VectorXd c =
        (w.s.array() / 2.0 - 2.0 * net.alpha * ph).matrix();
    const Eigen::VectorXd h = prior_info * pb.mean() + w.pm.transpose() * c;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("variational covariance not SPD");
    }
    next.sigma[w.node] = llt.solve(Eigen::MatrixXd::Identity(w.d, w.d));
    next.mu[w.node] = llt.solve(h);
  }

  // xi: xi^2 = E[a^2] under the refreshed (mu, sigma).
  for (const auto& w : ws.terms) {
    const Eigen::VectorXd& mu = next.mu[w.node];
    const Eigen::MatrixXd b = next.sigma[w.node] + mu * mu.transpose();
    const Eigen::VectorXd pm_mu = w.pm * mu;
    const Eigen::ArrayXd quad = ((w.pm * b).array() * w.pm.array()).rowwise().sum() +
                                ((1.0 - w.pm.array().square()).matrix() * b.diagonal()).array();
    const Eigen::ArrayXd ea2 =
        net.alpha * net.alpha + 2.0 * net.alpha * pm_mu.array() + quad;
    next.xi[w.node] = ea2.max(0.0).sqrt().matrix();
  }

  // lambda: sequential exact coordinate step from the full bound derivative.
  // The bound is multilinear in each lambda_j, so the energy difference
  // between the endpoints is the exact slope; its own entropy enters the
  // stationarity condition analytically. A damped fallback guards the
  // monotonicity contract against rounding.
  for (int j : net.hidden_nodes()) {
    const double l_old = next.lambda[j];
    const double b_old = bound_with_workspace(net, prior, data, next, ws);
    next.lambda[j] = 1.0;
    const double e1 = energy(net, data, next, ws);
    next.lambda[j] = 0.0;
    const double e0 = energy(net, data, next, ws);
    const double l_new = clamp_lambda(logistic((e1 - e0) / T));
    next.lambda[j] = l_new;
    double b_new = bound_with_workspace(net, prior, data, next, ws);
    if (b_new < b_old - 1e-10) {
      double gamma = 0.5;
      bool ok = false;
      for (int k = 0; k < 20; ++k, gamma /= 2.0) {
        next.lambda[j] = clamp_lambda(l_old + gamma * (l_new - l_old));
        b_new = bound_with_workspace(net, prior, data, next, ws);
        if (b_new >= b_old - 1e-10) {
          ok = true;
          break;
        }
      }
      if (!ok) next.lambda[j] = l_old;
    }
  }

  const double bound_after = bound_with_workspace(net, prior, data, next, ws);
  BoundReport report;
  report.lower_bound = bound_after;
  report.delta = bound_after - bound_before;
  return {std::move(next), report};
}

FitResult fit_variational(const BeliefNetwork& net, const GaussianPrior& prior,
                          const Dataset& data, FitOptions opts) {
  FitResult result;
  result.state = init_state(net, prior, data.T());
  for (int it = 0; it < opts.max_iters; ++it) {
    auto [next, report] = em_step(net, prior, data, result.state);
    report.iteration = it + 1;
    result.state = std::move(next);
    result.reports.push_back(report);
    if (std::abs(report.delta) < opts.tol * (1.0 + std::abs(report.lower_bound))) {
      result.converged = true;
      break;
    }
  }
  return result;
}

Gaussian proposal_from_state(const VariationalState& state, const BeliefNetwork& net) {
  const auto offsets = net.theta_offsets();
  const int dim = offsets.back();
  Eigen::VectorXd mean(dim);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < net.n_nodes(); ++i) {
    const int d = offsets[i + 1] - offsets[i];
    if (d == 0) continue;
    mean.segment(offsets[i], d) = state.mu[i];
    cov.block(offsets[i], offsets[i], d, d) = state.sigma[i];
  }
  return Gaussian(std::move(mean), std::move(cov));
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_state(const VariationalState& state, const std::string& path) {
  std::ostringstream out;
  out << "vmc-varstate 1\n";
  out << "nodes " << state.n_nodes() << " slices " << state.T << "\n";
  for (int i = 0; i < state.n_nodes(); ++i) {
    const int d = static_cast<int>(state.mu[i].size());
    out << "node " << i << " dim " << d << "\n";
    if (d > 0) {
      out << "mu";
      for (int k = 0; k < d; ++k) out << " " << fmt17(state.mu[i][k]);
      out << "\nsigma";
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) out << " " << fmt17(state.sigma[i](r, c));
      }
      out << "\nxi";
      for (int t = 0; t < state.T; ++t) out << " " << fmt17(state.xi[i][t]);
      out << "\n";
    }
    if (!std::isnan(state.lambda[i])) {
      out << "lambda " << fmt17(state.lambda[i]) << "\n";
    }
  }
  atomic_write_file(path, out.str());
}

VariationalState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open state file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "vmc-varstate 1") {
    throw std::runtime_error("state file: bad or missing version header");
  }
  std::string word;
  int n = 0;
  VariationalState state;
  in >> word >> n >> word >> state.T;
  state.mu.resize(static_cast<size_t>(n));
  state.sigma.resize(static_cast<size_t>(n));
  state.xi.resize(static_cast<size_t>(n));
  state.lambda = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  int i = -1;
  while (in >> word) {
    if (word == "node") {
      int d = 0;
      in >> i >> word >> d;
      state.mu[static_cast<size_t>(i)].setZero(d);
      state.sigma[static_cast<size_t>(i)].setZero(d, d);
      state.xi[static_cast<size_t>(i)].setZero(d > 0 ? state.T : 0);
    } else if (word == "mu") {
      for (auto& v : state.mu[static_cast<size_t>(i)]) in >> v;
    } else if (word == "sigma") {
      auto& s = state.sigma[static_cast<size_t>(i)];
      for (int r = 0; r < s.rows(); ++r) {
        for (int c = 0; c < s.cols(); ++c) in >> s(r, c);
      }
    } else if (word == "xi") {
      for (auto& v : state.xi[static_cast<size_t>(i)]) in >> v;
    } else if (word == "lambda") {
      in >> state.lambda[i];
    } else {
      throw std::runtime_error("state file: unknown directive '" + word + "'");
    }
  }
  return state;
}

}  // namespace vmc
