#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vmc {

/// Every knob of the experiment harness, with the generating-model and
/// sampler constants the experiments use by default. The canonical dump
/// (and therefore the hash embedded in every output file) always reflects
/// the fully resolved values.
struct ExperimentConfig {
  std::string experiment = "unimodal";  // unimodal | multimodal | adaptive | custom

  // Model and data generation.
  std::vector<int> dims = {1, 5, 10, 20, 50};  // parent counts (fan-in sweep)
  int T = 1000;                                // observation slices
  double alpha = 0.5;                          // shared bias
  double root_mean = 0.5;                      // observed-root Bernoulli mean
  double hidden_root_mean = 0.6;               // hidden-root mean (multimodal)
  double prior_mean = 0.0;
  double prior_var = 100.0;

  // Samplers.
  std::vector<long> n_samples = {500, 5000};  // retained per chain
  int repeats = 10;
  double rw_variance = 0.01;
  double nu = 0.5;
  int block_size = 5;
  double burn_in_frac = 0.1;  // extra transitions, flagged in traces

  // Variational EM.
  int em_max_iters = 200;
  double em_tol = 1e-8;

  // Grid oracle.
  double grid_lo = -5.0;
  double grid_hi = 8.0;
  int grid_resolution = 400;
  double basin_threshold = 0.95;

  // Adaptive experiment.
  int fanin_lo = 1;
  int fanin_hi = 10;
  long adaptive_samples = 2000;
  int c_warmup = 200;
  double adaptive_nu = 1.0;  // pure independence component

  std::uint64_t seed = 36;
  int threads = 1;

  void validate() const;

  /// Deterministic "key = value" listing of every field, fixed order.
  std::string canonical() const;

  /// FNV-1a 64-bit hash of the canonical listing, as 16 hex digits.
  std::string hash_hex() const;
};

std::uint64_t fnv1a64(const std::string& bytes);

/// Applies multimodal-experiment constants (bias 2, T = 50, prior N(3,10I))
/// on top of the given base config.
ExperimentConfig multimodal_preset(ExperimentConfig base);

}  // namespace vmc
