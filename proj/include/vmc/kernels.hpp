#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "vmc/gaussian.hpp"
#include "vmc/rng.hpp"

namespace vmc {

/// Unnormalized log target density; -inf marks zero-density points.
using Target = std::function<double(const Eigen::VectorXd&)>;

struct Block {
  int start = 0;
  int len = 0;
};

/// Ordered contiguous index ranges covering 0..n_theta-1.
struct BlockPartition {
  std::vector<Block> blocks;

  static BlockPartition contiguous(int n_theta, int block_size);
  static BlockPartition single(int n_theta) { return contiguous(n_theta, n_theta); }

  int n_blocks() const { return static_cast<int>(blocks.size()); }
  void validate(int n_theta) const;
};

enum class KernelKind { RandomWalk, VariationalIndependent, BlockCycle, Mixture };

/// Kernel ids as recorded in traces: the random-walk family is 0, the
/// variational independence family is 1.
inline constexpr int kKernelRw = 0;
inline constexpr int kKernelVar = 1;

struct KernelSpec {
  KernelKind kind = KernelKind::Mixture;
  KernelKind inner = KernelKind::VariationalIndependent;  // BlockCycle payload
  double rw_variance = 0.01;  // per-coordinate, isotropic
  double nu = 0.5;            // mixture weight on the variational kernel
  BlockPartition partition;   // BlockCycle and Mixture sweeps
  Gaussian proposal;          // over the full parameter vector

  void validate(int dim) const;
};

struct TraceRecord {
  long iteration = 0;
  Eigen::VectorXd theta;
  double log_posterior = 0.0;
  int kernel_id = kKernelRw;
  std::vector<std::uint8_t> accepted;  // one flag per block proposed
  bool regeneration = false;
  bool burn_in = false;
  // Adaptive-chain extensions; absent (NaN / -1 / 0) on plain chains.
  double log_weight = std::numeric_limits<double>::quiet_NaN();
  int regen_coin = -1;  // -1 not flipped, else the coin outcome
  int adaptations = 0;  // cumulative adaptation events so far
};

struct ChainTrace {
  std::uint64_t seed = 0;
  std::string config_hash;  // empty when the run is not tied to a config
  long burn_in = 0;         // leading records flagged burn_in
  std::vector<TraceRecord> records;

  long n_retained() const { return static_cast<long>(records.size()) - burn_in; }
};

/// min{1, exp(log_p_prop + log_q_cur_given_prop - log_p_cur -
/// log_q_prop_given_cur)} in log space. Throws "chain at zero-density
/// state" when log_p_cur = -inf.
double mh_accept_prob(double log_p_cur, double log_p_prop,
                      double log_q_cur_given_prop, double log_q_prop_given_cur);

// Single-block moves. (theta, log_p) is the chain state, updated in place on
// acceptance; log_p always holds target(theta). Draw order is part of the
// contract: block.len normals in coordinate order, then one accept uniform,
// consumed on every call.

/// Symmetric random walk on the block: theta_block += N(0, rw_variance I).
bool rw_block_step(Eigen::VectorXd& theta, double& log_p, const Block& block,
                   double rw_variance, const Target& target, Rng& rng);

/// Independence proposal on the block from the given Gaussian (dimension
/// block.len); acceptance uses the full ratio including proposal densities.
bool var_block_step(Eigen::VectorXd& theta, double& log_p, const Block& block,
                    const Gaussian& proposal, const Target& target, Rng& rng);

/// One sweep over the partition in ascending order with the inner move kind.
/// block_proposals holds one per-block Gaussian (unused for RandomWalk).
std::vector<std::uint8_t> cycle_step(Eigen::VectorXd& theta, double& log_p,
                                     const BlockPartition& partition, KernelKind inner,
                                     double rw_variance,
                                     const std::vector<Gaussian>& block_proposals,
                                     const Target& target, Rng& rng);

struct StepMeta {
  int kernel_id = kKernelRw;
  std::vector<std::uint8_t> accepted;
};

/// One select-stream uniform picks the variational cycle (probability nu) or
/// the random-walk cycle; move draws come from move_rng only, which is what
/// makes nu in {0,1} bit-identical to the pure kernels.
StepMeta mixture_step(Eigen::VectorXd& theta, double& log_p, double nu,
                      const BlockPartition& partition, double rw_variance,
                      const std::vector<Gaussian>& block_proposals,
                      const Target& target, Rng& move_rng, Rng& select_rng);

/// burn_in + n_samples transitions from init (init itself is not recorded);
/// the first burn_in records are flagged and retained. Deterministic for a
/// fixed seed: the move and mixture-selection streams are derived from it
/// independently.
ChainTrace run_chain(const Eigen::VectorXd& init, const KernelSpec& spec,
                     const Target& target, long n_samples, long burn_in,
                     std::uint64_t seed);

// Estimators over retained (post burn-in) records. All throw "empty
// retained set" when nothing is retained.
double estimate(const ChainTrace& trace,
                const std::function<double(const Eigen::VectorXd&)>& f);
Eigen::VectorXd posterior_mean(const ChainTrace& trace);
Eigen::MatrixXd posterior_covariance(const ChainTrace& trace);

struct AcceptanceRates {
  std::array<double, 2> rate{std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN()};
  std::array<long, 2> proposals{0, 0};  // block proposals counted per kernel id
};
AcceptanceRates acceptance_rates(const ChainTrace& trace);

/// Counts of retained samples per bin; edges ascending, out-of-range dropped.
Eigen::VectorXd histogram1d(const ChainTrace& trace, int coord,
                            const std::vector<double>& edges);
Eigen::MatrixXd histogram2d(const ChainTrace& trace, int coord_x, int coord_y,
                            const std::vector<double>& edges_x,
                            const std::vector<double>& edges_y);

// Newline-delimited trace file: a JSON header object carrying seed and
// config hash, then one JSON record per iteration with doubles at 17
// significant digits (bit round-trip).
void save_trace(const ChainTrace& trace, const std::string& path);
ChainTrace load_trace(const std::string& path);

}  // namespace vmc
