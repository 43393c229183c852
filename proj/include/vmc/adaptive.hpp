#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

#include "vmc/gaussian.hpp"
#include "vmc/kernels.hpp"

namespace vmc {

/// Proposal-adaptation state for the regeneration-gated independence
/// sampler. Moment accumulators run from chain start and are never reset;
/// tour_log_weights holds the importance weights of the states visited
/// since the last regeneration.
struct AdaptiveState {
  Gaussian proposal;
  double log_c = 0.0;  // splitting threshold, log scale
  long tours = 0;      // completed regenerations
  long n_accum = 0;
  Eigen::VectorXd sum_theta;
  Eigen::MatrixXd sum_outer;
  std::vector<double> tour_log_weights;
  int adaptations = 0;  // times adapt_proposal actually fired
};

/// Retrospective regeneration probability of an accepted independence move,
/// for the split with atom nu(dtheta) proportional to min{q, p/c}:
///   r = [min{1, c/w_cur} min{1, w_prop/c}] / min{1, w_prop/w_cur},
/// evaluated in log space and clamped to [0,1].
double regen_prob(double w_cur, double w_prop, double c);
double regen_prob_log(double log_w_cur, double log_w_prop, double log_c);

/// Moment-matched proposal refresh: mean and covariance (+1e-6 I ridge) of
/// every sample accumulated since chain start; the threshold c becomes the
/// median log weight of the last tour when one is buffered. No-op while
/// fewer than dim + 2 samples are accumulated. Accumulators are retained.
AdaptiveState adapt_proposal(const AdaptiveState& state);

struct AdaptiveOptions {
  long n_samples = 2000;
  long burn_in = 0;
  double nu = 1.0;  // probability of the independence move; 1 = pure
  double rw_variance = 0.01;
  BlockPartition rw_partition;  // empty: one full-dimensional block
  bool adapt_enabled = true;
  std::optional<double> log_c;  // estimated from a frozen warm-up when unset
  int c_warmup = 200;
};

/// Independence MH (optionally mixed with a random-walk component) whose
/// proposal is refreshed only at regeneration times. The regeneration coin
/// is flipped on accepted independence moves only, from its own stream, so
/// disabling adaptation leaves the sampled path bit-identical to the plain
/// chain. When opts.log_c is unset, it is set to the median log weight over
/// a c_warmup-step frozen run on a separate stream.
std::pair<ChainTrace, AdaptiveState> run_adaptive_chain(const Eigen::VectorXd& init,
                                                        const Gaussian& proposal,
                                                        const Target& target,
                                                        const AdaptiveOptions& opts,
                                                        std::uint64_t seed);

/// Lengths of completed tours (iterations between consecutive
/// regenerations, the opening partial segment excluded).
std::vector<long> tour_lengths(const ChainTrace& trace);

}  // namespace vmc
