#include "vmc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vmc/adaptive.hpp"
#include "vmc/diagnostics.hpp"
#include "vmc/variational.hpp"

namespace vmc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string preamble(const ExperimentConfig& cfg) {
  return "# config=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed) + "\n";
}

std::filesystem::path out_path(const std::string& out_dir, const std::string& name) {
  std::filesystem::create_directories(out_dir);
  return std::filesystem::path(out_dir) / name;
}

// Error text goes into one CSV field; keep the delimiter structure intact.
std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return kNaN;
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stderr_of(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  if (xs.size() < 2) return kNaN;
  const double m = mean_of(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / (n - 1.0) / n);
}

Target make_target(const LogPosterior& lp) {
  return [&lp](const Eigen::VectorXd& th) { return lp(th); };
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t master, std::uint64_t experiment,
                        std::uint64_t cell, std::uint64_t purpose) {
  return seed_hash(master, experiment, cell, purpose);
}

std::uint64_t pack_cell(int dim, int repeat) {
  return (static_cast<std::uint64_t>(dim) << 20) | static_cast<std::uint64_t>(repeat);
}

BeliefNetwork make_unimodal_network(int fan_in, double alpha, double root_mean,
                                    const Eigen::VectorXd& theta) {
  if (fan_in < 1) throw std::invalid_argument("fan_in must be positive");
  if (theta.size() != fan_in)
    throw std::invalid_argument("theta length does not match fan_in");
  BeliefNetwork net;
  net.alpha = alpha;
  for (int i = 0; i < fan_in; ++i) {
    Node r;
    r.name = "p" + std::to_string(i);
    r.root_mean = root_mean;
    net.nodes.push_back(std::move(r));
  }
  Node child;
  child.name = "y";
  child.parents.resize(fan_in);
  for (int i = 0; i < fan_in; ++i) child.parents[i] = i;
  child.theta = theta;
  net.nodes.push_back(std::move(child));
  net.validate();
  return net;
}

BeliefNetwork make_multimodal_network(double alpha, double hidden_mean,
                                      double observed_mean, const Eigen::VectorXd& theta) {
  if (theta.size() != 2) throw std::invalid_argument("theta must have two weights");
  BeliefNetwork net;
  net.alpha = alpha;
  Node h;
  h.name = "h";
  h.hidden = true;
  h.root_mean = hidden_mean;
  Node v;
  v.name = "v";
  v.root_mean = observed_mean;
  Node y;
  y.name = "y";
  y.parents = {0, 1};
  y.theta = theta;
  net.nodes = {std::move(h), std::move(v), std::move(y)};
  net.validate();
  return net;
}

Eigen::VectorXd uniform_positive(int n, Rng& rng) {
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = 1.0 - rng.uniform();  // (0, 1]
  return u;
}

void run_parallel(int threads, int n_items, const std::function<void(int)>& fn) {
  if (threads <= 1 || n_items <= 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  const int n_workers = std::min(threads, n_items);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n_items;) fn(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  BeliefNetwork net;
  Dataset data;
  if (cfg.experiment == "multimodal") {
    Eigen::VectorXd th(2);
    th << 2.0, -1.0;
    net = make_multimodal_network(cfg.alpha, cfg.hidden_root_mean, cfg.root_mean, th);
    data = generate(net, cfg.T, cell_seed(cfg.seed, kExpMultimodal, 0, kPurposeData));
  } else {
    const int dim = cfg.dims.front();
    const std::uint64_t cell = pack_cell(dim, 0);
    Rng theta_rng(cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeTheta));
    const Eigen::VectorXd theta = uniform_positive(dim, theta_rng);
    net = make_unimodal_network(dim, cfg.alpha, cfg.root_mean, theta);
    data = generate(net, cfg.T, cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeData));
  }
  save_network(net, out_path(out_dir, "network.txt").string());
  save_dataset(data, net, out_path(out_dir, "dataset.csv").string());
  atomic_write_file(out_path(out_dir, "config.txt").string(),
                    preamble(cfg) + cfg.canonical());
  return 0;
}

// ---------------------------------------------------------------------------
// unimodal comparison

UnimodalCellResult run_unimodal_cell(const ExperimentConfig& cfg, long n_samples,
                                     int dim, int repeat) {
  UnimodalCellResult out;
  try {
    const std::uint64_t cell = pack_cell(dim, repeat);
    Rng theta_rng(cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeTheta));
    const Eigen::VectorXd theta_true = uniform_positive(dim, theta_rng);
    const BeliefNetwork net =
        make_unimodal_network(dim, cfg.alpha, cfg.root_mean, theta_true);
    const Dataset data =
        generate(net, cfg.T, cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeData));
    const GaussianPrior prior = GaussianPrior::isotropic(net, cfg.prior_mean, cfg.prior_var);
    const LogPosterior lp(net, prior, data);
    const Target target = make_target(lp);

    Timer em_timer;
    FitOptions fo;
    fo.max_iters = cfg.em_max_iters;
    fo.tol = cfg.em_tol;
    const FitResult fit = fit_variational(net, prior, data, fo);
    const double em_wall = em_timer.elapsed();
    const Gaussian prop = proposal_from_state(fit.state, net);
    out.em_iterations = fit.reports.empty() ? 0 : fit.reports.back().iteration;
    out.em_converged = fit.converged;
    out.em_lower_bound = fit.reports.empty() ? kNaN : fit.reports.back().lower_bound;

    // The baseline walker has no variational fit to lean on, so it starts
    // from a prior draw; the variational samplers start from one shared
    // proposal draw, the natural entry point of an independence kernel.
    Rng init_rng(cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeInit));
    const Eigen::VectorXd rw_init = prior.full().sample(init_rng);
    const Eigen::VectorXd var_init = prop.sample(init_rng);
    // n_samples counts retained (post-burn-in) draws; the burn-in is run on top.
    const long total = static_cast<long>(
        std::ceil(static_cast<double>(n_samples) / (1.0 - cfg.burn_in_frac)));
    const long burn = total - n_samples;
    const BlockPartition part = BlockPartition::contiguous(dim, cfg.block_size);

    const auto run_method = [&](std::uint64_t mid, const KernelSpec& spec,
                                const Eigen::VectorXd& init) {
      Timer t;
      const ChainTrace tr =
          run_chain(init, spec, target, total, burn,
                    cell_seed(cfg.seed, kExpUnimodal, cell, kPurposeMethodBase + mid));
      MethodResult mr;
      mr.wall_seconds = t.elapsed();
      const AcceptanceRates ar = acceptance_rates(tr);
      mr.accept_rw = ar.rate[kKernelRw];
      mr.accept_var = ar.rate[kKernelVar];
      mr.log_lik = lp.log_likelihood(posterior_mean(tr));
      return mr;
    };

    KernelSpec rw_spec;
    rw_spec.kind = KernelKind::BlockCycle;
    rw_spec.inner = KernelKind::RandomWalk;
    rw_spec.rw_variance = cfg.rw_variance;
    rw_spec.partition = part;

    KernelSpec var_spec;
    var_spec.kind = KernelKind::BlockCycle;
    var_spec.inner = KernelKind::VariationalIndependent;
    var_spec.partition = part;
    var_spec.proposal = prop;

    KernelSpec mix_spec;
    mix_spec.kind = KernelKind::Mixture;
    mix_spec.inner = KernelKind::VariationalIndependent;
    mix_spec.nu = cfg.nu;
    mix_spec.rw_variance = cfg.rw_variance;
    mix_spec.partition = part;
    mix_spec.proposal = prop;

    MethodResult rw_r = run_method(kMethodRw, rw_spec, rw_init);
    MethodResult var_r = run_method(kMethodVar, var_spec, var_init);
    MethodResult mix_r = run_method(kMethodMix, mix_spec, var_init);
    MethodResult em_r;
    em_r.wall_seconds = em_wall;
    em_r.log_lik = lp.log_likelihood(prop.mean());

    const double base = rw_r.log_lik;
    em_r.rel_ll = em_r.log_lik - base;
    rw_r.rel_ll = 0.0;
    var_r.rel_ll = var_r.log_lik - base;
    mix_r.rel_ll = mix_r.log_lik - base;

    out.methods = {{"em", em_r}, {"rw", rw_r}, {"var", var_r}, {"mix", mix_r}};
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.methods.clear();
  }
  return out;
}

int cmd_experiment_unimodal(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  struct CellKey {
    long n;
    int dim, rep;
  };
  std::vector<CellKey> keys;
  for (long n : cfg.n_samples)
    for (int d : cfg.dims)
      for (int r = 0; r < cfg.repeats; ++r) keys.push_back({n, d, r});

  std::vector<UnimodalCellResult> results(keys.size());
  run_parallel(cfg.threads, static_cast<int>(keys.size()),
               [&](int i) { results[static_cast<std::size_t>(i)] =
                                run_unimodal_cell(cfg, keys[static_cast<std::size_t>(i)].n,
                                                  keys[static_cast<std::size_t>(i)].dim,
                                                  keys[static_cast<std::size_t>(i)].rep); });

  std::ostringstream cells, timings;
  cells << preamble(cfg)
        << "n_samples,dim,repeat,method,status,rel_ll,log_lik,accept_rw,accept_var,"
           "em_iterations,em_converged,error\n";
  timings << preamble(cfg) << "n_samples,dim,repeat,method,wall_seconds\n";
  int failures = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const CellKey& k = keys[i];
    const UnimodalCellResult& r = results[i];
    if (!r.ok) {
      ++failures;
      cells << k.n << ',' << k.dim << ',' << k.rep << ",,error,,,,,"
            << r.em_iterations << ',' << (r.em_converged ? 1 : 0) << ','
            << csv_safe(r.error) << '\n';
      continue;
    }
    for (const auto& [name, m] : r.methods) {
      cells << k.n << ',' << k.dim << ',' << k.rep << ',' << name << ",ok,"
            << fmt17(m.rel_ll) << ',' << fmt17(m.log_lik) << ',' << fmt17(m.accept_rw)
            << ',' << fmt17(m.accept_var) << ',' << r.em_iterations << ','
            << (r.em_converged ? 1 : 0) << ",\n";
      timings << k.n << ',' << k.dim << ',' << k.rep << ',' << name << ','
              << fmt17(m.wall_seconds) << '\n';
    }
  }

  // Mean and standard error of the relative log likelihood across repeats.
  std::ostringstream summary;
  summary << preamble(cfg)
          << "n_samples,dim,method,n_ok,n_positive,mean_rel_ll,se_rel_ll\n";
  const std::vector<std::string> method_names = {"em", "rw", "var", "mix"};
  for (long n : cfg.n_samples)
    for (int d : cfg.dims)
      for (const std::string& name : method_names) {
        std::vector<double> vals;
        int n_positive = 0;
        for (std::size_t i = 0; i < keys.size(); ++i) {
          if (keys[i].n != n || keys[i].dim != d || !results[i].ok) continue;
          for (const auto& [mname, m] : results[i].methods)
            if (mname == name) {
              vals.push_back(m.rel_ll);
              if (m.rel_ll > 0.0) ++n_positive;
            }
        }
        summary << n << ',' << d << ',' << name << ',' << vals.size() << ','
                << n_positive << ',' << fmt17(mean_of(vals)) << ','
                << fmt17(stderr_of(vals)) << '\n';
      }

  atomic_write_file(out_path(out_dir, "unimodal_cells.csv").string(), cells.str());
  atomic_write_file(out_path(out_dir, "unimodal_summary.csv").string(), summary.str());
  atomic_write_file(out_path(out_dir, "unimodal_timings.csv").string(), timings.str());
  return failures;
}

// ---------------------------------------------------------------------------
// multimodal coverage

namespace {

// Basin statistics of a chain against the grid's partition. Fractions are
// over all retained samples (off-grid ones count in the denominator); the
// within-basin mean error comes from batch means on the basin subsequence.
MultimodalMethodResult basin_coverage(std::string name, ChainTrace trace,
                                      const GridPosterior& grid,
                                      const std::vector<int>& labels,
                                      const std::vector<int>& modes) {
  MultimodalMethodResult mr;
  mr.name = std::move(name);
  const AcceptanceRates ar = acceptance_rates(trace);
  mr.accept_rw = ar.rate[kKernelRw];
  mr.accept_var = ar.rate[kKernelVar];

  const int d = grid.dims;
  std::map<int, std::vector<Eigen::VectorXd>> members;
  long retained = 0;
  for (const TraceRecord& rec : trace.records) {
    if (rec.burn_in) continue;
    ++retained;
    const int c = grid.cell_of(rec.theta);
    if (c < 0) {
      ++mr.n_outside;
      continue;
    }
    members[labels[static_cast<std::size_t>(c)]].push_back(rec.theta);
  }

  for (int mode : modes) {
    BasinStats b;
    b.label = mode;
    const auto it = members.find(mode);
    const long n = it == members.end() ? 0 : static_cast<long>(it->second.size());
    b.fraction = retained > 0 ? static_cast<double>(n) / static_cast<double>(retained) : kNaN;
    b.mean = Eigen::VectorXd::Constant(d, kNaN);
    b.cov = Eigen::MatrixXd::Constant(d, d, kNaN);
    b.mcse = Eigen::VectorXd::Constant(d, kNaN);
    if (n > 0) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      for (const auto& x : it->second) mean += x;
      mean /= static_cast<double>(n);
      b.mean = mean;
      if (n > 1) {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (const auto& x : it->second) {
          const Eigen::VectorXd c0 = x - mean;
          cov += c0 * c0.transpose();
        }
        b.cov = cov / static_cast<double>(n - 1);
      }
      if (n >= 4) {
        std::vector<double> coord(static_cast<std::size_t>(n));
        for (int k = 0; k < d; ++k) {
          for (long t = 0; t < n; ++t)
            coord[static_cast<std::size_t>(t)] = it->second[static_cast<std::size_t>(t)][k];
          b.mcse[k] = mcse_batch_means(coord);
        }
      }
    }
    mr.basins.push_back(std::move(b));
  }

  mr.dominant = 0;
  for (std::size_t i = 1; i < mr.basins.size(); ++i)
    if (mr.basins[i].fraction > mr.basins[static_cast<std::size_t>(mr.dominant)].fraction)
      mr.dominant = static_cast<int>(i);
  mr.trace = std::move(trace);
  return mr;
}

}  // namespace

MultimodalResult run_multimodal(const ExperimentConfig& cfg) {
  cfg.validate();
  MultimodalResult R;
  Eigen::VectorXd th(2);
  th << 2.0, -1.0;
  R.net = make_multimodal_network(cfg.alpha, cfg.hidden_root_mean, cfg.root_mean, th);
  R.data = generate(R.net, cfg.T, cell_seed(cfg.seed, kExpMultimodal, 0, kPurposeData));
  const GaussianPrior prior = GaussianPrior::isotropic(R.net, cfg.prior_mean, cfg.prior_var);
  const LogPosterior lp(R.net, prior, R.data);
  const Target target = make_target(lp);

  R.grid = build_grid(target, {{cfg.grid_lo, cfg.grid_hi}, {cfg.grid_lo, cfg.grid_hi}},
                      cfg.grid_resolution);
  R.labels = basin_partition(R.grid);
  R.modes = basin_modes(R.labels);
  for (int mode : R.modes) {
    BasinStats b;
    b.label = mode;
    b.fraction = basin_mass(R.grid, R.labels, mode);
    const auto [bm, bc] = basin_moments(R.grid, R.labels, mode);
    b.mean = bm;
    b.cov = bc;
    b.mcse = Eigen::VectorXd::Zero(2);  // deterministic reference
    R.grid_basins.push_back(std::move(b));
  }

  FitOptions fo;
  fo.max_iters = cfg.em_max_iters;
  fo.tol = cfg.em_tol;
  const FitResult fit = fit_variational(R.net, prior, R.data, fo);
  const Gaussian prop = proposal_from_state(fit.state, R.net);
  R.variational_mean = prop.mean();
  R.variational_cov = prop.cov();
  R.em_iterations = fit.reports.empty() ? 0 : fit.reports.back().iteration;
  R.em_converged = fit.converged;

  const long n_samples = cfg.n_samples.front();
  const long burn =
      static_cast<long>(std::ceil(cfg.burn_in_frac * static_cast<double>(n_samples)));
  // Same start policy as the unimodal study: prior draw for the baseline,
  // shared proposal draw for the variational samplers.
  Rng init_rng(cell_seed(cfg.seed, kExpMultimodal, 0, kPurposeInit));
  const Eigen::VectorXd rw_init = prior.full().sample(init_rng);
  const Eigen::VectorXd var_init = prop.sample(init_rng);
  const BlockPartition part = BlockPartition::contiguous(2, cfg.block_size);

  KernelSpec rw_spec;
  rw_spec.kind = KernelKind::BlockCycle;
  rw_spec.inner = KernelKind::RandomWalk;
  rw_spec.rw_variance = cfg.rw_variance;
  rw_spec.partition = part;

  KernelSpec var_spec;
  var_spec.kind = KernelKind::BlockCycle;
  var_spec.inner = KernelKind::VariationalIndependent;
  var_spec.partition = part;
  var_spec.proposal = prop;

  KernelSpec mix_spec;
  mix_spec.kind = KernelKind::Mixture;
  mix_spec.inner = KernelKind::VariationalIndependent;
  mix_spec.nu = cfg.nu;
  mix_spec.rw_variance = cfg.rw_variance;
  mix_spec.partition = part;
  mix_spec.proposal = prop;

  const auto run_method = [&](const char* name, std::uint64_t mid, const KernelSpec& spec,
                              const Eigen::VectorXd& init) {
    ChainTrace tr = run_chain(init, spec, target, n_samples, burn,
                              cell_seed(cfg.seed, kExpMultimodal, 0, kPurposeMethodBase + mid));
    tr.config_hash = cfg.hash_hex();
    return basin_coverage(name, std::move(tr), R.grid, R.labels, R.modes);
  };
  R.methods.push_back(run_method("rw", kMethodRw, rw_spec, rw_init));
  R.methods.push_back(run_method("var", kMethodVar, var_spec, var_init));
  R.methods.push_back(run_method("mix", kMethodMix, mix_spec, var_init));
  return R;
}

int cmd_experiment_multimodal(const ExperimentConfig& cfg, const std::string& out_dir) {
  try {
    const MultimodalResult R = run_multimodal(cfg);

    save_grid(R.grid, out_path(out_dir, "grid.csv").string(),
              "config=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed));

    std::ostringstream modes;
    modes << preamble(cfg)
          << "source,mode_label,mode_x,mode_y,fraction,n_outside,mean_x,mean_y,"
             "cov_xx,cov_xy,cov_yy,det_cov,mcse_x,mcse_y,accept_rw,accept_var\n";
    const auto row = [&](const std::string& source, const BasinStats& b, long n_outside,
                         double acc_rw, double acc_var) {
      const Eigen::VectorXd mode_xy =
          b.label >= 0 ? R.grid.midpoint(b.label) : Eigen::VectorXd::Constant(2, kNaN);
      const double det = b.cov.allFinite() ? b.cov.determinant() : kNaN;
      modes << source << ',' << b.label << ',' << fmt17(mode_xy[0]) << ','
            << fmt17(mode_xy[1]) << ',' << fmt17(b.fraction) << ',' << n_outside << ','
            << fmt17(b.mean[0]) << ',' << fmt17(b.mean[1]) << ',' << fmt17(b.cov(0, 0))
            << ',' << fmt17(b.cov(0, 1)) << ',' << fmt17(b.cov(1, 1)) << ',' << fmt17(det)
            << ',' << fmt17(b.mcse[0]) << ',' << fmt17(b.mcse[1]) << ','
            << fmt17(acc_rw) << ',' << fmt17(acc_var) << '\n';
    };
    for (const BasinStats& b : R.grid_basins) row("grid", b, 0, kNaN, kNaN);
    BasinStats varb;
    varb.label = -1;
    varb.mean = R.variational_mean;
    varb.cov = R.variational_cov;
    varb.mcse = Eigen::VectorXd::Zero(2);
    row("variational", varb, 0, kNaN, kNaN);
    for (const MultimodalMethodResult& m : R.methods)
      for (const BasinStats& b : m.basins)
        row(m.name, b, m.n_outside, m.accept_rw, m.accept_var);
    atomic_write_file(out_path(out_dir, "multimodal_modes.csv").string(), modes.str());

    for (const MultimodalMethodResult& m : R.methods) {
      const Eigen::MatrixXd hist =
          histogram2d(m.trace, 0, 1, R.grid.edges(0), R.grid.edges(1));
      std::ostringstream hs;
      hs << preamble(cfg);
      for (Eigen::Index i = 0; i < hist.rows(); ++i) {
        for (Eigen::Index j = 0; j < hist.cols(); ++j)
          hs << (j ? "," : "") << hist(i, j);
        hs << '\n';
      }
      atomic_write_file(out_path(out_dir, "multimodal_hist_" + m.name + ".csv").string(),
                        hs.str());
      save_trace(m.trace, out_path(out_dir, "multimodal_trace_" + m.name + ".json").string());
    }
    return 0;
  } catch (const std::exception& e) {
    atomic_write_file(out_path(out_dir, "multimodal_error.txt").string(),
                      preamble(cfg) + e.what() + "\n");
    return 1;
  }
}

// ---------------------------------------------------------------------------
// adaptive independence sampler

AdaptiveCellResult run_adaptive_cell(const ExperimentConfig& cfg, int fan_in,
                                     int repeat, bool adapt_enabled) {
  AdaptiveCellResult out;
  try {
    const std::uint64_t cell = pack_cell(fan_in, repeat);
    Rng theta_rng(cell_seed(cfg.seed, kExpAdaptive, cell, kPurposeTheta));
    const Eigen::VectorXd theta_true = uniform_positive(fan_in, theta_rng);
    const BeliefNetwork net =
        make_unimodal_network(fan_in, cfg.alpha, cfg.root_mean, theta_true);
    const Dataset data =
        generate(net, cfg.T, cell_seed(cfg.seed, kExpAdaptive, cell, kPurposeData));
    const GaussianPrior prior = GaussianPrior::isotropic(net, cfg.prior_mean, cfg.prior_var);
    const LogPosterior lp(net, prior, data);
    const Target target = make_target(lp);

    FitOptions fo;
    fo.max_iters = cfg.em_max_iters;
    fo.tol = cfg.em_tol;
    const FitResult fit = fit_variational(net, prior, data, fo);
    const Gaussian prop = proposal_from_state(fit.state, net);

    Rng init_rng(cell_seed(cfg.seed, kExpAdaptive, cell, kPurposeInit));
    const Eigen::VectorXd init = prop.sample(init_rng);

    AdaptiveOptions ao;
    ao.n_samples = cfg.adaptive_samples;
    ao.burn_in = 0;
    ao.nu = cfg.adaptive_nu;
    ao.rw_variance = cfg.rw_variance;
    ao.adapt_enabled = adapt_enabled;
    ao.c_warmup = cfg.c_warmup;
    auto [trace, st] = run_adaptive_chain(
        init, prop, target, ao,
        cell_seed(cfg.seed, kExpAdaptive, cell, kPurposeMethodBase + kMethodVar));
    trace.config_hash = cfg.hash_hex();

    out.accept_rate = acceptance_rates(trace).rate[kKernelVar];
    out.initial_mean = prop.mean();
    out.initial_cov = prop.cov();
    out.adapted_mean = st.proposal.mean();
    out.adapted_cov = st.proposal.cov();
    out.initial_var = prop.cov().diagonal().mean();
    out.adapted_var = st.proposal.cov().diagonal().mean();
    out.adaptations = st.adaptations;
    out.tours = st.tours;
    out.trace = std::move(trace);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

int cmd_experiment_adaptive(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  struct CellKey {
    int fan_in, rep;
  };
  std::vector<CellKey> keys;
  for (int f = cfg.fanin_lo; f <= cfg.fanin_hi; ++f)
    for (int r = 0; r < cfg.repeats; ++r) keys.push_back({f, r});

  std::vector<AdaptiveCellResult> results(keys.size());
  run_parallel(cfg.threads, static_cast<int>(keys.size()), [&](int i) {
    results[static_cast<std::size_t>(i)] =
        run_adaptive_cell(cfg, keys[static_cast<std::size_t>(i)].fan_in,
                          keys[static_cast<std::size_t>(i)].rep);
  });

  std::ostringstream cells;
  cells << preamble(cfg)
        << "fan_in,repeat,status,accept_rate,initial_var,adapted_var,adaptations,"
           "tours,error\n";
  int failures = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const CellKey& k = keys[i];
    const AdaptiveCellResult& r = results[i];
    if (!r.ok) {
      ++failures;
      cells << k.fan_in << ',' << k.rep << ",error,,,,,," << csv_safe(r.error) << '\n';
      continue;
    }
    cells << k.fan_in << ',' << k.rep << ",ok," << fmt17(r.accept_rate) << ','
          << fmt17(r.initial_var) << ',' << fmt17(r.adapted_var) << ',' << r.adaptations
          << ',' << r.tours << ",\n";
  }
  atomic_write_file(out_path(out_dir, "adaptive_cells.csv").string(), cells.str());

  std::ostringstream summary;
  summary << preamble(cfg)
          << "fan_in,n_ok,mean_accept,se_accept,mean_initial_var,mean_adapted_var\n";
  for (int f = cfg.fanin_lo; f <= cfg.fanin_hi; ++f) {
    std::vector<double> acc, iv, av;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].fan_in != f || !results[i].ok) continue;
      acc.push_back(results[i].accept_rate);
      iv.push_back(results[i].initial_var);
      av.push_back(results[i].adapted_var);
    }
    summary << f << ',' << acc.size() << ',' << fmt17(mean_of(acc)) << ','
            << fmt17(stderr_of(acc)) << ',' << fmt17(mean_of(iv)) << ','
            << fmt17(mean_of(av)) << '\n';
  }
  atomic_write_file(out_path(out_dir, "adaptive_summary.csv").string(), summary.str());

  // Density summary for the first cell: the same chain with adaptation
  // disabled against the adaptive run, first coordinate.
  const AdaptiveCellResult frozen = run_adaptive_cell(cfg, cfg.fanin_lo, 0, false);
  const AdaptiveCellResult* adapted = nullptr;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i].fan_in == cfg.fanin_lo && keys[i].rep == 0 && results[i].ok)
      adapted = &results[i];
  if (frozen.ok && adapted != nullptr) {
    const auto coord0 = [](const ChainTrace& tr) {
      std::vector<double> xs;
      for (const TraceRecord& rec : tr.records)
        if (!rec.burn_in) xs.push_back(rec.theta[0]);
      return xs;
    };
    const std::vector<double> before = coord0(frozen.trace);
    const std::vector<double> after = coord0(adapted->trace);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : before) lo = std::min(lo, x), hi = std::max(hi, x);
    for (double x : after) lo = std::min(lo, x), hi = std::max(hi, x);
    const double pad = 0.05 * (hi - lo);
    const auto [xs, before_d] = kde1d(before, lo - pad, hi + pad, 256);
    const auto [xs2, after_d] = kde1d(after, lo - pad, hi + pad, 256);
    std::ostringstream kde;
    kde << preamble(cfg) << "x,density_frozen,density_adaptive\n";
    for (Eigen::Index i = 0; i < xs.size(); ++i)
      kde << fmt17(xs[i]) << ',' << fmt17(before_d[i]) << ',' << fmt17(after_d[i]) << '\n';
    atomic_write_file(out_path(out_dir, "adaptive_kde.csv").string(), kde.str());
  }
  return failures;
}

}  // namespace vmc
