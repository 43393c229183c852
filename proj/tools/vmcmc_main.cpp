#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "vmc/adaptive.hpp"
#include "vmc/diagnostics.hpp"
#include "vmc/experiments.hpp"
#include "vmc/kernels.hpp"
#include "vmc/model.hpp"
#include "vmc/network.hpp"
#include "vmc/oracle.hpp"
#include "vmc/variational.hpp"

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Standalone (non-experiment) commands derive their streams under this tag.
constexpr std::uint64_t kExpStandalone = 0;

struct LoadedProblem {
  vmc::BeliefNetwork net;
  vmc::Dataset data;
  vmc::GaussianPrior prior;

  LoadedProblem(const std::string& network_path, const std::string& data_path,
                const vmc::ExperimentConfig& cfg)
      : net(vmc::load_network(network_path)),
        data(vmc::load_dataset(data_path, net)),
        prior(vmc::GaussianPrior::isotropic(net, cfg.prior_mean, cfg.prior_var)) {}
};

std::string preamble(const vmc::ExperimentConfig& cfg) {
  return "# config=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed) + "\n";
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int run_fit_var(const vmc::ExperimentConfig& cfg, const std::string& network_path,
                const std::string& data_path, const std::string& out_dir) {
  const LoadedProblem p(network_path, data_path, cfg);
  vmc::FitOptions fo;
  fo.max_iters = cfg.em_max_iters;
  fo.tol = cfg.em_tol;
  const vmc::FitResult fit = vmc::fit_variational(p.net, p.prior, p.data, fo);
  std::filesystem::create_directories(out_dir);
  vmc::save_state(fit.state, join_path(out_dir, "varstate.txt"));

  std::ostringstream em;
  em << preamble(cfg) << "iteration,lower_bound,delta\n";
  for (const vmc::BoundReport& r : fit.reports)
    em << r.iteration << ',' << fmt17(r.lower_bound) << ',' << fmt17(r.delta) << '\n';
  vmc::atomic_write_file(join_path(out_dir, "em_trace.csv"), em.str());

  const vmc::Gaussian prop = vmc::proposal_from_state(fit.state, p.net);
  std::cout << (fit.converged ? "converged" : "max iterations") << " after "
            << fit.reports.size() << " iterations, lower bound "
            << fmt17(fit.reports.empty() ? 0.0 : fit.reports.back().lower_bound)
            << ", proposal dim " << prop.dim() << "\n";
  return 0;
}

int run_sample(const vmc::ExperimentConfig& cfg, const std::string& network_path,
               const std::string& data_path, const std::string& state_path,
               const std::string& kernel, long n_opt, long burn_opt,
               const std::string& out_dir) {
  const LoadedProblem p(network_path, data_path, cfg);
  const vmc::LogPosterior lp(p.net, p.prior, p.data);
  const vmc::Target target = [&lp](const Eigen::VectorXd& th) { return lp(th); };

  const long n = n_opt > 0 ? n_opt : cfg.n_samples.front();
  const long burn = burn_opt >= 0
                        ? burn_opt
                        : static_cast<long>(std::ceil(cfg.burn_in_frac * static_cast<double>(n)));

  vmc::KernelSpec spec;
  spec.rw_variance = cfg.rw_variance;
  spec.nu = cfg.nu;
  spec.partition = vmc::BlockPartition::contiguous(lp.dim(), cfg.block_size);
  if (kernel == "rw") {
    spec.kind = vmc::KernelKind::BlockCycle;
    spec.inner = vmc::KernelKind::RandomWalk;
  } else {
    spec.kind = kernel == "var" ? vmc::KernelKind::BlockCycle : vmc::KernelKind::Mixture;
    spec.inner = vmc::KernelKind::VariationalIndependent;
    if (state_path.empty())
      throw std::runtime_error("kernel '" + kernel + "' needs --state from fit-var");
    const vmc::VariationalState state = vmc::load_state(state_path);
    spec.proposal = vmc::proposal_from_state(state, p.net);
  }

  vmc::Rng init_rng(vmc::cell_seed(cfg.seed, kExpStandalone, 0, vmc::kPurposeInit));
  const Eigen::VectorXd init = p.prior.full().sample(init_rng);
  vmc::ChainTrace trace =
      vmc::run_chain(init, spec, target, n, burn,
                     vmc::cell_seed(cfg.seed, kExpStandalone, 0, vmc::kPurposeMethodBase));
  trace.config_hash = cfg.hash_hex();
  std::filesystem::create_directories(out_dir);
  vmc::save_trace(trace, join_path(out_dir, "trace.json"));

  const Eigen::VectorXd mean = vmc::posterior_mean(trace);
  const vmc::AcceptanceRates ar = vmc::acceptance_rates(trace);
  std::cout << "retained " << trace.n_retained() << " samples, posterior mean [";
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    std::cout << (i ? ", " : "") << fmt17(mean[i]);
  std::cout << "], acceptance rw=" << fmt17(ar.rate[vmc::kKernelRw])
            << " var=" << fmt17(ar.rate[vmc::kKernelVar]) << "\n";
  return 0;
}

int run_grid(const vmc::ExperimentConfig& cfg, const std::string& network_path,
             const std::string& data_path, const std::string& out_dir) {
  const LoadedProblem p(network_path, data_path, cfg);
  const vmc::LogPosterior lp(p.net, p.prior, p.data);
  const vmc::Target target = [&lp](const Eigen::VectorXd& th) { return lp(th); };

  std::vector<std::pair<double, double>> box(static_cast<std::size_t>(lp.dim()),
                                             {cfg.grid_lo, cfg.grid_hi});
  const vmc::GridPosterior grid = vmc::build_grid(target, box, cfg.grid_resolution);
  std::filesystem::create_directories(out_dir);
  vmc::save_grid(grid, join_path(out_dir, "grid.csv"),
                 "config=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed));

  const std::vector<int> labels = vmc::basin_partition(grid);
  const std::vector<int> modes = vmc::basin_modes(labels);
  std::ostringstream basins;
  basins << preamble(cfg) << "label,mass,mode_x,mode_y,mean_x,mean_y,cov_xx,cov_xy,cov_yy\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int mode : modes) {
    const Eigen::VectorXd at = grid.midpoint(mode);
    const auto [bm, bc] = vmc::basin_moments(grid, labels, mode);
    const bool two = grid.dims == 2;
    basins << mode << ',' << fmt17(vmc::basin_mass(grid, labels, mode)) << ','
           << fmt17(at[0]) << ',' << fmt17(two ? at[1] : nan) << ',' << fmt17(bm[0]) << ','
           << fmt17(two ? bm[1] : nan) << ',' << fmt17(bc(0, 0)) << ','
           << fmt17(two ? bc(0, 1) : nan) << ',' << fmt17(two ? bc(1, 1) : nan) << '\n';
  }
  vmc::atomic_write_file(join_path(out_dir, "grid_basins.csv"), basins.str());
  std::cout << "grid over " << grid.dims << " dims, " << modes.size() << " mode(s), log norm "
            << fmt17(grid.log_norm) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  vmc::ExperimentConfig cfg;
  std::string out_dir = "out";

  CLI::App app{"Variational-proposal MCMC for sigmoid belief networks"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "options file (INI/TOML, long option names as keys)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--threads", cfg.threads, "worker threads for independent cells");
  app.add_option("--experiment", cfg.experiment, "unimodal | multimodal | adaptive | custom");
  app.add_option("--dims", cfg.dims, "parent counts (fan-in sweep)")->delimiter(',');
  app.add_option("--slices", cfg.T, "observation slices");
  app.add_option("--alpha", cfg.alpha, "shared bias");
  app.add_option("--root-mean", cfg.root_mean, "observed-root Bernoulli mean");
  app.add_option("--hidden-root-mean", cfg.hidden_root_mean, "hidden-root mean");
  app.add_option("--prior-mean", cfg.prior_mean, "prior mean per weight");
  app.add_option("--prior-var", cfg.prior_var, "prior variance per weight");
  app.add_option("--n-samples", cfg.n_samples, "retained samples per chain")->delimiter(',');
  app.add_option("--repeats", cfg.repeats, "repeats per cell");
  app.add_option("--rw-variance", cfg.rw_variance, "random-walk step variance");
  app.add_option("--nu", cfg.nu, "mixture weight on the variational kernel");
  app.add_option("--block-size", cfg.block_size, "coordinates per update block");
  app.add_option("--burn-in-frac", cfg.burn_in_frac, "burn-in fraction of n_samples");
  app.add_option("--em-max-iters", cfg.em_max_iters, "variational EM iteration cap");
  app.add_option("--em-tol", cfg.em_tol, "relative bound-change tolerance");
  app.add_option("--grid-lo", cfg.grid_lo, "grid box lower edge");
  app.add_option("--grid-hi", cfg.grid_hi, "grid box upper edge");
  app.add_option("--grid-resolution", cfg.grid_resolution, "grid cells per dimension");
  app.add_option("--basin-threshold", cfg.basin_threshold, "trapped-fraction threshold");
  app.add_option("--fanin-lo", cfg.fanin_lo, "adaptive sweep start");
  app.add_option("--fanin-hi", cfg.fanin_hi, "adaptive sweep end");
  app.add_option("--adaptive-samples", cfg.adaptive_samples, "adaptive chain length");
  app.add_option("--c-warmup", cfg.c_warmup, "frozen steps for the split threshold");
  app.add_option("--adaptive-nu", cfg.adaptive_nu, "independence weight in adaptive runs");
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a network and a sampled dataset");
  gen->fallthrough();

  std::string network_path, data_path, state_path, kernel = "mix";
  long n_opt = -1, burn_opt = -1;

  auto* fit = app.add_subcommand("fit-var", "variational EM fit of the weight posterior");
  fit->fallthrough();
  fit->add_option("--network", network_path, "network file")->required();
  fit->add_option("--data", data_path, "dataset CSV")->required();

  auto* sample = app.add_subcommand("sample", "run one MCMC chain and save its trace");
  sample->fallthrough();
  sample->add_option("--network", network_path, "network file")->required();
  sample->add_option("--data", data_path, "dataset CSV")->required();
  sample->add_option("--state", state_path, "variational state from fit-var");
  sample->add_option("--kernel", kernel, "rw | var | mix")
      ->check(CLI::IsMember({"rw", "var", "mix"}));
  sample->add_option("--n", n_opt, "retained samples (default: first of --n-samples)");
  sample->add_option("--burn", burn_opt, "burn-in transitions (default: fraction of --n)");

  auto* grid = app.add_subcommand("grid", "tabulate the posterior on a dense grid");
  grid->fallthrough();
  grid->add_option("--network", network_path, "network file")->required();
  grid->add_option("--data", data_path, "dataset CSV")->required();

  auto* exp = app.add_subcommand("experiment", "run a full study");
  exp->fallthrough();
  std::string which = "unimodal";
  exp->add_option("which", which, "unimodal | multimodal | adaptive")
      ->required()
      ->check(CLI::IsMember({"unimodal", "multimodal", "adaptive"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (cfg.experiment == "multimodal") cfg = vmc::multimodal_preset(cfg);
      cfg.validate();
      return vmc::cmd_generate(cfg, out_dir);
    }
    if (fit->parsed()) {
      cfg.validate();
      return run_fit_var(cfg, network_path, data_path, out_dir);
    }
    if (sample->parsed()) {
      cfg.validate();
      return run_sample(cfg, network_path, data_path, state_path, kernel, n_opt, burn_opt,
                        out_dir);
    }
    if (grid->parsed()) {
      cfg.validate();
      return run_grid(cfg, network_path, data_path, out_dir);
    }
    if (exp->parsed()) {
      // The named study pins its own preset; "custom" keeps the flags as given.
      if (cfg.experiment != "custom") cfg.experiment = which;
      if (which == "multimodal" && cfg.experiment != "custom") {
        const double user_lo = cfg.grid_lo, user_hi = cfg.grid_hi;
        const bool lo_set = app.count("--grid-lo") > 0;
        const bool hi_set = app.count("--grid-hi") > 0;
        cfg = vmc::multimodal_preset(cfg);
        if (lo_set) cfg.grid_lo = user_lo;
        if (hi_set) cfg.grid_hi = user_hi;
      }
      cfg.validate();
      int failures = 0;
      if (which == "unimodal") failures = vmc::cmd_experiment_unimodal(cfg, out_dir);
      else if (which == "multimodal") failures = vmc::cmd_experiment_multimodal(cfg, out_dir);
      else failures = vmc::cmd_experiment_adaptive(cfg, out_dir);
      if (failures > 0) {
        std::cerr << failures << " cell(s) failed; see the error column in " << out_dir
                  << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
