#include "vmc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vmc/network.hpp"

namespace vmc {

BlockPartition BlockPartition::contiguous(int n_theta, int block_size) {
  if (n_theta < 1 || block_size < 1) {
    throw std::invalid_argument("block partition: sizes must be positive");
  }
  BlockPartition part;
  for (int start = 0; start < n_theta; start += block_size) {
    part.blocks.push_back({start, std::min(block_size, n_theta - start)});
  }
  return part;
}

void BlockPartition::validate(int n_theta) const {
  int expect = 0;
  for (const auto& b : blocks) {
    if (b.start != expect || b.len < 1) {
      throw std::invalid_argument("block partition: blocks must be nonempty, "
                                  "contiguous and ascending");
    }
    expect += b.len;
  }
  if (expect != n_theta) {
    throw std::invalid_argument("block partition: blocks do not cover the "
                                "parameter vector");
  }
}

void KernelSpec::validate(int dim) const {
  if (!(rw_variance > 0.0)) {
    throw std::invalid_argument("kernel spec: rw_variance must be positive");
  }
  if (!(nu >= 0.0 && nu <= 1.0)) {
    throw std::invalid_argument("kernel spec: nu must lie in [0,1]");
  }
  const bool blocked = kind == KernelKind::BlockCycle || kind == KernelKind::Mixture;
  if (blocked) partition.validate(dim);
  const bool uses_proposal =
      kind == KernelKind::VariationalIndependent || kind == KernelKind::Mixture ||
      (kind == KernelKind::BlockCycle && inner == KernelKind::VariationalIndependent);
  if (uses_proposal && proposal.dim() != dim) {
    throw std::invalid_argument("kernel spec: proposal dimension mismatch");
  }
  if (kind == KernelKind::BlockCycle &&
      inner != KernelKind::RandomWalk && inner != KernelKind::VariationalIndependent) {
    throw std::invalid_argument("kernel spec: cycle inner kind must be a block move");
  }
}

double mh_accept_prob(double log_p_cur, double log_p_prop,
                      double log_q_cur_given_prop, double log_q_prop_given_cur) {
  if (std::isinf(log_p_cur) && log_p_cur < 0.0) {
    throw std::runtime_error("chain at zero-density state");
  }
  if (std::isinf(log_p_prop) && log_p_prop < 0.0) return 0.0;
  const double log_ratio =
      (log_p_prop - log_p_cur) + (log_q_cur_given_prop - log_q_prop_given_cur);
  return std::exp(std::min(0.0, log_ratio));
}

bool rw_block_step(Eigen::VectorXd& theta, double& log_p, const Block& block,
                   double rw_variance, const Target& target, Rng& rng) {
  const double sd = std::sqrt(rw_variance);
  Eigen::VectorXd prop = theta;
  for (int k = 0; k < block.len; ++k) prop[block.start + k] += sd * rng.normal();
  const double log_p_prop = target(prop);
  const double a = mh_accept_prob(log_p, log_p_prop, 0.0, 0.0);
  if (rng.uniform() < a) {
    theta = std::move(prop);
    log_p = log_p_prop;
    return true;
  }
  return false;
}

bool var_block_step(Eigen::VectorXd& theta, double& log_p, const Block& block,
                    const Gaussian& proposal, const Target& target, Rng& rng) {
  if (proposal.dim() != block.len) {
    throw std::invalid_argument("var_block_step: proposal dimension != block length");
  }
  Eigen::VectorXd prop = theta;
  prop.segment(block.start, block.len) = proposal.sample(rng);
  const double log_p_prop = target(prop);
  const double log_q_prop = proposal.log_pdf(prop.segment(block.start, block.len));
  const double log_q_cur = proposal.log_pdf(theta.segment(block.start, block.len));
  const double a = mh_accept_prob(log_p, log_p_prop, log_q_cur, log_q_prop);
  if (rng.uniform() < a) {
    theta = std::move(prop);
    log_p = log_p_prop;
    return true;
  }
  return false;
}

std::vector<std::uint8_t> cycle_step(Eigen::VectorXd& theta, double& log_p,
                                     const BlockPartition& partition, KernelKind inner,
                                     double rw_variance,
                                     const std::vector<Gaussian>& block_proposals,
                                     const Target& target, Rng& rng) {
  std::vector<std::uint8_t> accepted;
  accepted.reserve(partition.blocks.size());
  for (size_t j = 0; j < partition.blocks.size(); ++j) {
    bool ok;
    if (inner == KernelKind::RandomWalk) {
      ok = rw_block_step(theta, log_p, partition.blocks[j], rw_variance, target, rng);
    } else if (inner == KernelKind::VariationalIndependent) {
      ok = var_block_step(theta, log_p, partition.blocks[j], block_proposals[j],
                          target, rng);
    } else {
      throw std::invalid_argument("cycle_step: inner kind must be a block move");
    }
    accepted.push_back(ok ? 1 : 0);
  }
  return accepted;
}

StepMeta mixture_step(Eigen::VectorXd& theta, double& log_p, double nu,
                      const BlockPartition& partition, double rw_variance,
                      const std::vector<Gaussian>& block_proposals,
                      const Target& target, Rng& move_rng, Rng& select_rng) {
  StepMeta meta;
  meta.kernel_id = select_rng.uniform() < nu ? kKernelVar : kKernelRw;
  const KernelKind inner = meta.kernel_id == kKernelVar
                               ? KernelKind::VariationalIndependent
                               : KernelKind::RandomWalk;
  meta.accepted = cycle_step(theta, log_p, partition, inner, rw_variance,
                             block_proposals, target, move_rng);
  return meta;
}

namespace {

std::vector<Gaussian> marginals_per_block(const Gaussian& proposal,
                                          const BlockPartition& partition) {
  std::vector<Gaussian> out;
  out.reserve(partition.blocks.size());
  for (const auto& b : partition.blocks) out.push_back(proposal.marginal(b.start, b.len));
  return out;
}

}  // namespace

ChainTrace run_chain(const Eigen::VectorXd& init, const KernelSpec& spec,
                     const Target& target, long n_samples, long burn_in,
                     std::uint64_t seed) {
  const int dim = static_cast<int>(init.size());
  spec.validate(dim);
  if (n_samples < 1 || burn_in < 0) {
    throw std::invalid_argument("run_chain: need n_samples >= 1 and burn_in >= 0");
  }
  double log_p = target(init);
  if (std::isinf(log_p) && log_p < 0.0) {
    throw std::runtime_error("chain at zero-density state");
  }

  const bool blocked = spec.kind == KernelKind::BlockCycle || spec.kind == KernelKind::Mixture;
  const BlockPartition part = blocked ? spec.partition : BlockPartition::single(dim);
  const KernelKind inner = spec.kind == KernelKind::RandomWalk ? KernelKind::RandomWalk
                           : spec.kind == KernelKind::VariationalIndependent
                               ? KernelKind::VariationalIndependent
                           : spec.kind == KernelKind::BlockCycle ? spec.inner
                                                                 : KernelKind::Mixture;
  const bool needs_proposals = spec.kind == KernelKind::Mixture ||
                               inner == KernelKind::VariationalIndependent;
  const std::vector<Gaussian> proposals =
      needs_proposals ? marginals_per_block(spec.proposal, part) : std::vector<Gaussian>();

  Rng move_rng(seed_hash(seed, kStreamMove));
  Rng select_rng(seed_hash(seed, kStreamSelect));

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = burn_in;
  trace.records.reserve(static_cast<size_t>(burn_in + n_samples));

  Eigen::VectorXd theta = init;
  for (long it = 0; it < burn_in + n_samples; ++it) {
    TraceRecord rec;
    if (spec.kind == KernelKind::Mixture) {
      StepMeta meta = mixture_step(theta, log_p, spec.nu, part, spec.rw_variance,
                                   proposals, target, move_rng, select_rng);
      rec.kernel_id = meta.kernel_id;
      rec.accepted = std::move(meta.accepted);
    } else {
      rec.kernel_id =
          inner == KernelKind::VariationalIndependent ? kKernelVar : kKernelRw;
      rec.accepted = cycle_step(theta, log_p, part, inner, spec.rw_variance,
                                proposals, target, move_rng);
    }
    rec.iteration = it;
    rec.theta = theta;
    rec.log_posterior = log_p;
    rec.burn_in = it < burn_in;
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

namespace {

// Iteration over retained records with the shared emptiness check.
template <typename Fn>
void for_retained(const ChainTrace& trace, Fn&& fn) {
  bool any = false;
  for (const auto& rec : trace.records) {
    if (rec.burn_in) continue;
    any = true;
    fn(rec);
  }
  if (!any) throw std::runtime_error("empty retained set");
}

}  // namespace

double estimate(const ChainTrace& trace,
                const std::function<double(const Eigen::VectorXd&)>& f) {
  double sum = 0.0;
  long n = 0;
  for_retained(trace, [&](const TraceRecord& rec) {
    sum += f(rec.theta);
    ++n;
  });
  return sum / static_cast<double>(n);
}

Eigen::VectorXd posterior_mean(const ChainTrace& trace) {
  Eigen::VectorXd sum;
  long n = 0;
  for_retained(trace, [&](const TraceRecord& rec) {
    if (n == 0) sum = Eigen::VectorXd::Zero(rec.theta.size());
    sum += rec.theta;
    ++n;
  });
  return sum / static_cast<double>(n);
}

Eigen::MatrixXd posterior_covariance(const ChainTrace& trace) {
  const Eigen::VectorXd mean = posterior_mean(trace);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(mean.size(), mean.size());
  long n = 0;
  for_retained(trace, [&](const TraceRecord& rec) {
    const Eigen::VectorXd d = rec.theta - mean;
    acc += d * d.transpose();
    ++n;
  });
  if (n < 2) throw std::runtime_error("covariance needs at least two retained samples");
  return acc / static_cast<double>(n - 1);
}

AcceptanceRates acceptance_rates(const ChainTrace& trace) {
  std::array<long, 2> hits{0, 0};
  AcceptanceRates out;
  for_retained(trace, [&](const TraceRecord& rec) {
    const int k = rec.kernel_id;
    for (std::uint8_t a : rec.accepted) {
      out.proposals[static_cast<size_t>(k)] += 1;
      hits[static_cast<size_t>(k)] += a ? 1 : 0;
    }
  });
  for (int k = 0; k < 2; ++k) {
    if (out.proposals[static_cast<size_t>(k)] > 0) {
      out.rate[static_cast<size_t>(k)] =
          static_cast<double>(hits[static_cast<size_t>(k)]) /
          static_cast<double>(out.proposals[static_cast<size_t>(k)]);
    }
  }
  return out;
}

namespace {

int bin_of(double x, const std::vector<double>& edges) {
  if (x < edges.front() || x >= edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<int>(it - edges.begin()) - 1;
}

}  // namespace

Eigen::VectorXd histogram1d(const ChainTrace& trace, int coord,
                            const std::vector<double>& edges) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<long>(edges.size()) - 1);
  for_retained(trace, [&](const TraceRecord& rec) {
    const int b = bin_of(rec.theta[coord], edges);
    if (b >= 0) counts[b] += 1.0;
  });
  return counts;
}

Eigen::MatrixXd histogram2d(const ChainTrace& trace, int coord_x, int coord_y,
                            const std::vector<double>& edges_x,
                            const std::vector<double>& edges_y) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<long>(edges_x.size()) - 1,
                                                 static_cast<long>(edges_y.size()) - 1);
  for_retained(trace, [&](const TraceRecord& rec) {
    const int bx = bin_of(rec.theta[coord_x], edges_x);
    const int by = bin_of(rec.theta[coord_y], edges_y);
    if (bx >= 0 && by >= 0) counts(bx, by) += 1.0;
  });
  return counts;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_trace(const ChainTrace& trace, const std::string& path) {
  std::ostringstream out;
  out << "{\"format\":\"vmc-trace\",\"version\":1,\"seed\":\"" << trace.seed
      << "\",\"config_hash\":\"" << trace.config_hash << "\",\"burn_in\":"
      << trace.burn_in << "}\n";
  for (const auto& rec : trace.records) {
    out << "{\"it\":" << rec.iteration << ",\"theta\":[";
    for (Eigen::Index k = 0; k < rec.theta.size(); ++k) {
      if (k) out << ",";
      out << fmt17(rec.theta[k]);
    }
    out << "],\"lp\":" << fmt17(rec.log_posterior) << ",\"k\":" << rec.kernel_id
        << ",\"acc\":[";
    for (size_t k = 0; k < rec.accepted.size(); ++k) {
      if (k) out << ",";
      out << static_cast<int>(rec.accepted[k]);
    }
    out << "],\"regen\":" << (rec.regeneration ? 1 : 0)
        << ",\"burn\":" << (rec.burn_in ? 1 : 0);
    if (!std::isnan(rec.log_weight)) out << ",\"logw\":" << fmt17(rec.log_weight);
    if (rec.regen_coin >= 0) out << ",\"coin\":" << rec.regen_coin;
    if (rec.adaptations > 0) out << ",\"adapt\":" << rec.adaptations;
    out << "}\n";
  }
  atomic_write_file(path, out.str());
}

ChainTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace file: empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "vmc-trace") {
    throw std::runtime_error("trace file: bad header");
  }
  ChainTrace trace;
  trace.seed = std::stoull(header.at("seed").get<std::string>());
  trace.config_hash = header.value("config_hash", "");
  trace.burn_in = header.at("burn_in").get<long>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TraceRecord rec;
    rec.iteration = j.at("it").get<long>();
    const auto& th = j.at("theta");
    rec.theta.resize(static_cast<Eigen::Index>(th.size()));
    for (size_t k = 0; k < th.size(); ++k) {
      rec.theta[static_cast<Eigen::Index>(k)] = th[k].get<double>();
    }
    rec.log_posterior = j.at("lp").get<double>();
    rec.kernel_id = j.at("k").get<int>();
    for (const auto& a : j.at("acc")) {
      rec.accepted.push_back(static_cast<std::uint8_t>(a.get<int>()));
    }
    rec.regeneration = j.at("regen").get<int>() != 0;
    rec.burn_in = j.at("burn").get<int>() != 0;
    if (j.contains("logw")) rec.log_weight = j.at("logw").get<double>();
    if (j.contains("coin")) rec.regen_coin = j.at("coin").get<int>();
    if (j.contains("adapt")) rec.adaptations = j.at("adapt").get<int>();
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace vmc
