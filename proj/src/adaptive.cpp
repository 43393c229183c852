#include "vmc/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vmc {

double regen_prob_log(double log_w_cur, double log_w_prop, double log_c) {
  const double num = std::min(0.0, log_c - log_w_cur) +
                     std::min(0.0, log_w_prop - log_c);
  const double den = std::min(0.0, log_w_prop - log_w_cur);
  const double log_r = num - den;
  if (std::isnan(log_r)) return 0.0;  // inf - inf from degenerate inputs
  return std::exp(std::min(0.0, log_r));
}

double regen_prob(double w_cur, double w_prop, double c) {
  if (!(w_cur > 0.0 && w_prop > 0.0 && c > 0.0)) {
    throw std::invalid_argument("regen_prob: weights and threshold must be positive");
  }
  return regen_prob_log(std::log(w_cur), std::log(w_prop), std::log(c));
}

namespace {

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

AdaptiveState adapt_proposal(const AdaptiveState& state) {
  const long dim = state.proposal.dim();
  if (state.n_accum < dim + 2) return state;
  AdaptiveState next = state;
  const double n = static_cast<double>(state.n_accum);
  const Eigen::VectorXd mean = state.sum_theta / n;
  Eigen::MatrixXd cov =
      (state.sum_outer - n * (mean * mean.transpose())) / (n - 1.0);
  cov = ((cov + cov.transpose()) * 0.5).eval();
  cov.diagonal().array() += 1e-6;
  next.proposal = Gaussian(mean, std::move(cov));
  if (!state.tour_log_weights.empty()) {
    next.log_c = median(state.tour_log_weights);
  }
  next.adaptations = state.adaptations + 1;
  return next;
}

std::pair<ChainTrace, AdaptiveState> run_adaptive_chain(const Eigen::VectorXd& init,
                                                        const Gaussian& proposal,
                                                        const Target& target,
                                                        const AdaptiveOptions& opts,
                                                        std::uint64_t seed) {
  const int dim = static_cast<int>(init.size());
  if (proposal.dim() != dim) {
    throw std::invalid_argument("adaptive chain: proposal dimension mismatch");
  }
  if (opts.n_samples < 1 || opts.burn_in < 0) {
    throw std::invalid_argument("adaptive chain: need n_samples >= 1 and burn_in >= 0");
  }
  if (!(opts.nu >= 0.0 && opts.nu <= 1.0)) {
    throw std::invalid_argument("adaptive chain: nu must lie in [0,1]");
  }
  double log_p = target(init);
  if (std::isinf(log_p) && log_p < 0.0) {
    throw std::runtime_error("chain at zero-density state");
  }
  const BlockPartition rw_part = opts.rw_partition.blocks.empty()
                                     ? BlockPartition::single(dim)
                                     : opts.rw_partition;
  rw_part.validate(dim);

  AdaptiveState st;
  st.proposal = proposal;
  st.sum_theta = Eigen::VectorXd::Zero(dim);
  st.sum_outer = Eigen::MatrixXd::Zero(dim, dim);

  Rng move_rng(seed_hash(seed, kStreamMove));
  Rng select_rng(seed_hash(seed, kStreamSelect));
  Rng regen_rng(seed_hash(seed, kStreamRegen));

  if (opts.log_c) {
    st.log_c = *opts.log_c;
  } else {
    // Frozen warm-up on its own stream: the main chain's draws are
    // untouched, preserving the adaptation-off bit-equality contract.
    Rng warm_rng(seed_hash(seed, kStreamMove, 1));
    Eigen::VectorXd th = init;
    double lp = log_p;
    std::vector<double> lws;
    lws.reserve(static_cast<size_t>(opts.c_warmup));
    const Block full{0, dim};
    for (int k = 0; k < opts.c_warmup; ++k) {
      var_block_step(th, lp, full, proposal, target, warm_rng);
      lws.push_back(lp - proposal.log_pdf(th));
    }
    st.log_c = median(std::move(lws));
  }

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = opts.burn_in;
  trace.records.reserve(static_cast<size_t>(opts.burn_in + opts.n_samples));

  Eigen::VectorXd theta = init;
  const Block full{0, dim};
  for (long it = 0; it < opts.burn_in + opts.n_samples; ++it) {
    TraceRecord rec;
    const bool var_move = opts.nu >= 1.0 || select_rng.uniform() < opts.nu;
    if (var_move) {
      rec.kernel_id = kKernelVar;
      const double lq_cur = st.proposal.log_pdf(theta);
      const double lw_cur = log_p - lq_cur;
      const bool ok = var_block_step(theta, log_p, full, st.proposal, target, move_rng);
      rec.accepted.push_back(ok ? 1 : 0);
      if (ok) {
        const double lw_prop = log_p - st.proposal.log_pdf(theta);
        const double r = regen_prob_log(lw_cur, lw_prop, st.log_c);
        const bool coin = regen_rng.uniform() < r;
        rec.regen_coin = coin ? 1 : 0;
        if (coin) {
          // The accepted proposal is the atom draw: the new tour starts
          // here, after the kernel (and threshold) are refreshed.
          rec.regeneration = true;
          st.tours += 1;
          if (opts.adapt_enabled) st = adapt_proposal(st);
          st.tour_log_weights.clear();
        }
      }
    } else {
      rec.kernel_id = kKernelRw;
      rec.accepted = cycle_step(theta, log_p, rw_part, KernelKind::RandomWalk,
                                opts.rw_variance, {}, target, move_rng);
    }

    st.n_accum += 1;
    st.sum_theta += theta;
    st.sum_outer += theta * theta.transpose();
    rec.log_weight = log_p - st.proposal.log_pdf(theta);
    st.tour_log_weights.push_back(rec.log_weight);

    rec.iteration = it;
    rec.theta = theta;
    rec.log_posterior = log_p;
    rec.burn_in = it < opts.burn_in;
    rec.adaptations = st.adaptations;
    trace.records.push_back(std::move(rec));
  }
  return {std::move(trace), std::move(st)};
}

std::vector<long> tour_lengths(const ChainTrace& trace) {
  std::vector<long> lengths;
  long since = -1;
  for (const auto& rec : trace.records) {
    if (!rec.regeneration) continue;
    if (since >= 0) lengths.push_back(rec.iteration - since);
    since = rec.iteration;
  }
  return lengths;
}

}  // namespace vmc
