#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vmc/config.hpp"
#include "vmc/kernels.hpp"
#include "vmc/model.hpp"
#include "vmc/network.hpp"
#include "vmc/oracle.hpp"

namespace vmc {

// Child-seed derivation tags. Every consumer hashes (master, experiment,
// cell, purpose) so adding dims, repeats, or methods never shifts the
// streams of existing cells.
inline constexpr std::uint64_t kExpUnimodal = 1;
inline constexpr std::uint64_t kExpMultimodal = 2;
inline constexpr std::uint64_t kExpAdaptive = 3;
inline constexpr std::uint64_t kPurposeTheta = 0;
inline constexpr std::uint64_t kPurposeData = 1;
inline constexpr std::uint64_t kPurposeInit = 2;
inline constexpr std::uint64_t kPurposeMethodBase = 3;  // + method id
inline constexpr std::uint64_t kMethodRw = 0;
inline constexpr std::uint64_t kMethodVar = 1;
inline constexpr std::uint64_t kMethodMix = 2;

std::uint64_t cell_seed(std::uint64_t master, std::uint64_t experiment,
                        std::uint64_t cell, std::uint64_t purpose);
std::uint64_t pack_cell(int dim, int repeat);

/// One observed child under fan_in observed Bernoulli roots.
BeliefNetwork make_unimodal_network(int fan_in, double alpha, double root_mean,
                                    const Eigen::VectorXd& theta);

/// One observed child with a hidden root (mean hidden_mean) and an observed
/// root (mean observed_mean); theta = (weight on hidden, weight on observed).
BeliefNetwork make_multimodal_network(double alpha, double hidden_mean,
                                      double observed_mean, const Eigen::VectorXd& theta);

/// Uniform draw on (0,1]^n, one uniform per coordinate.
Eigen::VectorXd uniform_positive(int n, Rng& rng);

/// Per-method outcome within one unimodal cell. rel_ll is the log likelihood
/// at the method's posterior-mean estimate minus the random-walk baseline's.
struct MethodResult {
  double rel_ll = std::numeric_limits<double>::quiet_NaN();
  double log_lik = std::numeric_limits<double>::quiet_NaN();
  double accept_rw = std::numeric_limits<double>::quiet_NaN();
  double accept_var = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;  // reported in the timings sidecar only
};

struct UnimodalCellResult {
  bool ok = false;
  std::string error;
  int em_iterations = 0;
  bool em_converged = false;
  double em_lower_bound = std::numeric_limits<double>::quiet_NaN();
  // Fixed order: em, rw, var, mix.
  std::vector<std::pair<std::string, MethodResult>> methods;
};

/// Draws the cell's problem instance, fits the variational proposal, runs
/// the three samplers (the baseline from a prior draw, the variational
/// samplers from one shared proposal draw), and scores every method against
/// the random-walk baseline. Failures are captured, never thrown.
UnimodalCellResult run_unimodal_cell(const ExperimentConfig& cfg, long n_samples,
                                     int dim, int repeat);

/// Sample or grid statistics of one posterior basin.
struct BasinStats {
  int label = -1;  // flat grid index of the basin's mode cell
  double fraction = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd mcse;  // batch-means error of the within-basin mean
};

struct MultimodalMethodResult {
  std::string name;
  std::vector<BasinStats> basins;  // aligned with MultimodalResult::modes
  int dominant = -1;               // index into basins, largest fraction
  long n_outside = 0;              // retained samples off the grid box
  double accept_rw = std::numeric_limits<double>::quiet_NaN();
  double accept_var = std::numeric_limits<double>::quiet_NaN();
  ChainTrace trace;
};

struct MultimodalResult {
  BeliefNetwork net;
  Dataset data;
  GridPosterior grid;
  std::vector<int> labels;
  std::vector<int> modes;
  std::vector<BasinStats> grid_basins;
  Eigen::VectorXd variational_mean;
  Eigen::MatrixXd variational_cov;
  int em_iterations = 0;
  bool em_converged = false;
  std::vector<MultimodalMethodResult> methods;  // rw, var, mix
};

/// Two-parent posterior study: grid reference, basin decomposition, and the
/// per-basin coverage of each sampler.
MultimodalResult run_multimodal(const ExperimentConfig& cfg);

struct AdaptiveCellResult {
  bool ok = false;
  std::string error;
  double accept_rate = std::numeric_limits<double>::quiet_NaN();
  double initial_var = std::numeric_limits<double>::quiet_NaN();  // mean diag
  double adapted_var = std::numeric_limits<double>::quiet_NaN();
  int adaptations = 0;
  long tours = 0;
  Eigen::VectorXd initial_mean, adapted_mean;
  Eigen::MatrixXd initial_cov, adapted_cov;
  ChainTrace trace;
};

/// One regeneration-adaptive run on a fresh unimodal instance of the given
/// fan-in, started from a proposal draw. Failures are captured, never
/// thrown.
AdaptiveCellResult run_adaptive_cell(const ExperimentConfig& cfg, int fan_in,
                                     int repeat, bool adapt_enabled = true);

// Experiment commands. Each writes CSV outputs (plus traces where noted)
// under out_dir, embedding the resolved config hash in every header, and
// returns the number of failed cells (0 on full success).
int cmd_generate(const ExperimentConfig& config, const std::string& out_dir);
int cmd_experiment_unimodal(const ExperimentConfig& config, const std::string& out_dir);
int cmd_experiment_multimodal(const ExperimentConfig& config, const std::string& out_dir);
int cmd_experiment_adaptive(const ExperimentConfig& config, const std::string& out_dir);

/// Runs fn(0..n_items-1) over the given number of worker threads; fn must
/// not throw and must write results to per-item slots so scheduling cannot
/// reorder them.
void run_parallel(int threads, int n_items, const std::function<void(int)>& fn);

}  // namespace vmc
