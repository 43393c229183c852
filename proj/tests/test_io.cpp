#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "vmc/adaptive.hpp"
#include "vmc/config.hpp"
#include "vmc/kernels.hpp"
#include "vmc/model.hpp"
#include "vmc/network.hpp"

using vmc::BeliefNetwork;
using vmc::Cell;
using vmc::Dataset;
using vmc::ExperimentConfig;
using vmc::Node;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Visible root, hidden root with explicit mean, and a two-parent child.
BeliefNetwork mixed_network() {
  BeliefNetwork net;
  net.alpha = 0.37;
  Node r;
  r.name = "r1";
  r.root_mean = 0.61803398874989479;
  net.nodes.push_back(r);
  Node h;
  h.name = "h";
  h.hidden = true;
  h.root_mean = 0.3;
  net.nodes.push_back(h);
  Node y;
  y.name = "y";
  y.parents = {0, 1};
  y.theta = Eigen::Vector2d(0.8, -2.5e-7);
  net.nodes.push_back(y);
  net.validate();
  return net;
}

}  // namespace

TEST_CASE("atomic_write_file: exact content, overwrite, no temp residue") {
  vmctest::TempDir dir("atomic");
  const std::string path = dir.file("out.txt");
  vmc::atomic_write_file(path, "first\nversion\n");
  CHECK(read_text(path) == "first\nversion\n");
  vmc::atomic_write_file(path, "second");
  CHECK(read_text(path) == "second");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK_THROWS_AS(
      vmc::atomic_write_file(dir.file("no_such_dir/out.txt"), "x"),
      std::runtime_error);
}

TEST_CASE("network file: round trip preserves every field") {
  vmctest::TempDir dir("net");
  const BeliefNetwork net = mixed_network();
  const std::string path = dir.file("net.txt");
  vmc::save_network(net, path);

  const BeliefNetwork back = vmc::load_network(path);
  CHECK(back.alpha == net.alpha);
  REQUIRE(back.n_nodes() == net.n_nodes());
  for (int i = 0; i < net.n_nodes(); ++i) {
    CAPTURE(i);
    CHECK(back.nodes[i].name == net.nodes[i].name);
    CHECK(back.nodes[i].parents == net.nodes[i].parents);
    CHECK(back.nodes[i].hidden == net.nodes[i].hidden);
    if (std::isnan(net.nodes[i].root_mean)) {
      CHECK(std::isnan(back.nodes[i].root_mean));
    } else {
      CHECK(back.nodes[i].root_mean == net.nodes[i].root_mean);
    }
    CHECK(back.nodes[i].theta == net.nodes[i].theta);
  }
  // Saving the reloaded network reproduces the file byte for byte.
  const std::string again = dir.file("net2.txt");
  vmc::save_network(back, again);
  CHECK(read_text(again) == read_text(path));
}

TEST_CASE("network file: unset root mean is omitted and restored as NaN") {
  vmctest::TempDir dir("netnan");
  BeliefNetwork net;
  net.alpha = -1.25;
  Node r;
  r.name = "only";
  net.nodes.push_back(r);
  const std::string path = dir.file("net.txt");
  vmc::save_network(net, path);
  CHECK(read_text(path).find("mean=") == std::string::npos);
  CHECK(std::isnan(vmc::load_network(path).nodes[0].root_mean));
}

TEST_CASE("network file: comments and blank lines are ignored") {
  vmctest::TempDir dir("netc");
  const std::string path = dir.file("net.txt");
  write_text(path,
             "vmc-network 1\n"
             "# a comment line\n"
             "alpha 0.5\n"
             "\n"
             "node a hidden=0 mean=0.25\n"
             "node b hidden=0 parents=a theta=1.5\n");
  const BeliefNetwork net = vmc::load_network(path);
  CHECK(net.alpha == 0.5);
  REQUIRE(net.n_nodes() == 2);
  CHECK(net.nodes[1].parents == std::vector<int>{0});
  CHECK(net.nodes[1].theta[0] == 1.5);
}

TEST_CASE("network file: malformed inputs throw") {
  vmctest::TempDir dir("netbad");
  const std::string path = dir.file("net.txt");

  CHECK_THROWS_AS(vmc::load_network(dir.file("missing.txt")), std::runtime_error);

  write_text(path, "something-else 1\nalpha 0\n");
  CHECK_THROWS_WITH_AS(vmc::load_network(path),
                       "network file: bad or missing version header",
                       std::runtime_error);

  write_text(path, "vmc-network 1\nnode a hidden=0 shape=3\n");
  CHECK_THROWS_WITH_AS(vmc::load_network(path),
                       "network file: unknown field 'shape'", std::runtime_error);

  write_text(path, "vmc-network 1\nnode b hidden=0 parents=zz theta=1\n");
  CHECK_THROWS_AS(vmc::load_network(path), std::runtime_error);

  write_text(path, "vmc-network 1\nedge a b\n");
  CHECK_THROWS_WITH_AS(vmc::load_network(path),
                       "network file: unknown directive 'edge'",
                       std::runtime_error);

  // Structurally readable but semantically invalid: validate() rejects it.
  write_text(path, "vmc-network 1\nnode a hidden=0 mean=1.5\n");
  CHECK_THROWS_AS(vmc::load_network(path), std::invalid_argument);
}

TEST_CASE("dataset file: round trip, hidden column masked, truth not serialized") {
  vmctest::TempDir dir("data");
  const BeliefNetwork net = mixed_network();
  const Dataset data = vmc::generate(net, 25, 424242);
  REQUIRE(data.truth.rows() == 25);  // generate records the complete draw

  const std::string path = dir.file("data.csv");
  vmc::save_dataset(data, net, path);
  const Dataset back = vmc::load_dataset(path, net);
  CHECK(back == data);  // cell-wise equality; truth is excluded by contract
  CHECK(back.truth.size() == 0);
  for (int t = 0; t < back.T(); ++t) CHECK(back(t, 1) == Cell::Unobserved);
}

TEST_CASE("dataset file: +1 accepted as an alias for 1") {
  vmctest::TempDir dir("dataplus");
  const BeliefNetwork net = mixed_network();
  const std::string path = dir.file("data.csv");
  write_text(path, "r1,h,y\n+1,?,-1\n1,?,1\n");
  const Dataset data = vmc::load_dataset(path, net);
  REQUIRE(data.T() == 2);
  CHECK(data(0, 0) == Cell::Plus);
  CHECK(data(0, 2) == Cell::Minus);
  CHECK(data(1, 0) == Cell::Plus);
}

TEST_CASE("dataset file: malformed inputs throw") {
  vmctest::TempDir dir("databad");
  const BeliefNetwork net = mixed_network();
  const std::string path = dir.file("data.csv");

  CHECK_THROWS_AS(vmc::load_dataset(dir.file("missing.csv"), net),
                  std::runtime_error);

  write_text(path, "");
  CHECK_THROWS_WITH_AS(vmc::load_dataset(path, net), "dataset file: empty",
                       std::runtime_error);

  write_text(path, "r1,h\n1,?\n");
  CHECK_THROWS_AS(vmc::load_dataset(path, net), std::runtime_error);

  write_text(path, "r1,hh,y\n1,?,1\n");
  CHECK_THROWS_AS(vmc::load_dataset(path, net), std::runtime_error);

  write_text(path, "r1,h,y\n1,?\n");
  CHECK_THROWS_WITH_AS(vmc::load_dataset(path, net),
                       "dataset file: row width mismatch", std::runtime_error);

  write_text(path, "r1,h,y\n1,?,2\n");
  CHECK_THROWS_WITH_AS(vmc::load_dataset(path, net), "dataset file: bad cell '2'",
                       std::runtime_error);

  // Visibility invariant: a value in the hidden column is rejected.
  write_text(path, "r1,h,y\n1,1,1\n");
  CHECK_THROWS_AS(vmc::load_dataset(path, net), std::invalid_argument);
}

TEST_CASE("trace file: adaptive-chain fields survive the round trip") {
  vmctest::TempDir dir("trace");
  Eigen::VectorXd m(2);
  m << 0.5, -0.5;
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.2, 0.2, 0.6;
  const Eigen::MatrixXd prec = c.inverse();
  vmc::Target target = [m, prec](const Eigen::VectorXd& x) {
    const Eigen::VectorXd d = x - m;
    return -0.5 * d.dot(prec * d);
  };
  vmc::AdaptiveOptions opts;
  opts.n_samples = 60;
  opts.burn_in = 5;
  // Seed above 2^63 exercises full-width integer serialization.
  const std::uint64_t seed = (1ull << 63) + 12345ull;
  auto [trace, state] =
      vmc::run_adaptive_chain(m, vmc::Gaussian(m, (c * 1.3).eval()), target, opts, seed);
  trace.config_hash = "0123456789abcdef";

  const std::string path = dir.file("trace.ndjson");
  vmc::save_trace(trace, path);
  const vmc::ChainTrace back = vmc::load_trace(path);

  CHECK(back.seed == seed);
  CHECK(back.config_hash == trace.config_hash);
  CHECK(back.burn_in == trace.burn_in);
  REQUIRE(back.records.size() == trace.records.size());
  bool saw_coin = false;
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const auto& a = trace.records[k];
    const auto& b = back.records[k];
    CHECK(a.iteration == b.iteration);
    CHECK(a.theta == b.theta);
    CHECK(a.log_posterior == b.log_posterior);
    CHECK(a.kernel_id == b.kernel_id);
    CHECK(a.accepted == b.accepted);
    CHECK(a.regeneration == b.regeneration);
    CHECK(a.burn_in == b.burn_in);
    CHECK(a.log_weight == b.log_weight);
    CHECK(a.regen_coin == b.regen_coin);
    CHECK(a.adaptations == b.adaptations);
    saw_coin = saw_coin || a.regen_coin != -1;
  }
  CHECK(saw_coin);  // the fixture actually exercised the optional fields
}

TEST_CASE("trace file: malformed inputs throw") {
  vmctest::TempDir dir("tracebad");
  const std::string path = dir.file("trace.ndjson");

  CHECK_THROWS_AS(vmc::load_trace(dir.file("missing.ndjson")), std::runtime_error);

  write_text(path, "");
  CHECK_THROWS_WITH_AS(vmc::load_trace(path), "trace file: empty",
                       std::runtime_error);

  write_text(path, "{\"format\":\"other\",\"seed\":\"1\",\"burn_in\":0}\n");
  CHECK_THROWS_WITH_AS(vmc::load_trace(path), "trace file: bad header",
                       std::runtime_error);

  write_text(path, "not json at all\n");
  CHECK_THROWS(vmc::load_trace(path));
}

TEST_CASE("config: canonical listing is deterministic and complete") {
  ExperimentConfig cfg;
  CHECK(cfg.canonical() == ExperimentConfig{}.canonical());
  const std::string text = cfg.canonical();
  // One "key = value" line per field, fixed order.
  for (const char* key :
       {"experiment", "dims", "T", "alpha", "root_mean", "hidden_root_mean",
        "prior_mean", "prior_var", "n_samples", "repeats", "rw_variance", "nu",
        "block_size", "burn_in_frac", "em_max_iters", "em_tol", "grid_lo",
        "grid_hi", "grid_resolution", "basin_threshold", "fanin_lo", "fanin_hi",
        "adaptive_samples", "c_warmup", "adaptive_nu", "seed", "threads"}) {
    CAPTURE(key);
    CHECK(text.find(std::string(key) + " = ") != std::string::npos);
  }
  CHECK(text.find("dims = 1,5,10,20,50\n") != std::string::npos);
}

TEST_CASE("config: FNV-1a hash matches the reference vectors") {
  CHECK(vmc::fnv1a64("") == 14695981039346656037ull);
  CHECK(vmc::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(vmc::fnv1a64("foobar") == 0x85944171f73967e8ull);

  ExperimentConfig cfg;
  const std::string hex = cfg.hash_hex();
  REQUIRE(hex.size() == 16);
  for (char ch : hex) CHECK(((ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f')));
  char expect[17];
  std::snprintf(expect, sizeof(expect), "%016llx",
                static_cast<unsigned long long>(vmc::fnv1a64(cfg.canonical())));
  CHECK(hex == std::string(expect));
}

TEST_CASE("config: every field participates in the hash") {
  const std::string base = ExperimentConfig{}.hash_hex();
  using Mut = void (*)(ExperimentConfig&);
  const std::vector<Mut> mutations = {
      [](ExperimentConfig& c) { c.experiment = "adaptive"; },
      [](ExperimentConfig& c) { c.dims = {2, 3}; },
      [](ExperimentConfig& c) { c.T = 999; },
      [](ExperimentConfig& c) { c.alpha = 0.51; },
      [](ExperimentConfig& c) { c.root_mean = 0.49; },
      [](ExperimentConfig& c) { c.hidden_root_mean = 0.55; },
      [](ExperimentConfig& c) { c.prior_mean = 0.1; },
      [](ExperimentConfig& c) { c.prior_var = 99.0; },
      [](ExperimentConfig& c) { c.n_samples = {501}; },
      [](ExperimentConfig& c) { c.repeats = 11; },
      [](ExperimentConfig& c) { c.rw_variance = 0.02; },
      [](ExperimentConfig& c) { c.nu = 0.25; },
      [](ExperimentConfig& c) { c.block_size = 4; },
      [](ExperimentConfig& c) { c.burn_in_frac = 0.2; },
      [](ExperimentConfig& c) { c.em_max_iters = 50; },
      [](ExperimentConfig& c) { c.em_tol = 1e-6; },
      [](ExperimentConfig& c) { c.grid_lo = -6.0; },
      [](ExperimentConfig& c) { c.grid_hi = 9.0; },
      [](ExperimentConfig& c) { c.grid_resolution = 128; },
      [](ExperimentConfig& c) { c.basin_threshold = 0.9; },
      [](ExperimentConfig& c) { c.fanin_lo = 2; },
      [](ExperimentConfig& c) { c.fanin_hi = 9; },
      [](ExperimentConfig& c) { c.adaptive_samples = 1999; },
      [](ExperimentConfig& c) { c.c_warmup = 100; },
      [](ExperimentConfig& c) { c.adaptive_nu = 0.8; },
      [](ExperimentConfig& c) { c.seed = 7; },
      [](ExperimentConfig& c) { c.threads = 2; },
  };
  std::vector<std::string> hashes = {base};
  for (std::size_t k = 0; k < mutations.size(); ++k) {
    ExperimentConfig cfg;
    mutations[k](cfg);
    CAPTURE(k);
    const std::string h = cfg.hash_hex();
    CHECK(h != base);
    hashes.push_back(h);
  }
  std::sort(hashes.begin(), hashes.end());
  CHECK(std::adjacent_find(hashes.begin(), hashes.end()) == hashes.end());
}

TEST_CASE("config: validation accepts defaults and rejects bad fields") {
  CHECK_NOTHROW(ExperimentConfig{}.validate());
  CHECK_NOTHROW(vmc::multimodal_preset({}).validate());

  auto reject = [](void (*mut)(ExperimentConfig&)) {
    ExperimentConfig cfg;
    mut(cfg);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  };
  reject([](ExperimentConfig& c) { c.experiment = "bogus"; });
  reject([](ExperimentConfig& c) { c.dims = {}; });
  reject([](ExperimentConfig& c) { c.dims = {0}; });
  reject([](ExperimentConfig& c) { c.T = -1; });
  reject([](ExperimentConfig& c) { c.repeats = 0; });
  reject([](ExperimentConfig& c) { c.n_samples = {}; });
  reject([](ExperimentConfig& c) { c.n_samples = {0}; });
  reject([](ExperimentConfig& c) { c.rw_variance = 0.0; });
  reject([](ExperimentConfig& c) { c.nu = 1.5; });
  reject([](ExperimentConfig& c) { c.block_size = 0; });
  reject([](ExperimentConfig& c) { c.burn_in_frac = -0.1; });
  reject([](ExperimentConfig& c) { c.prior_var = 0.0; });
  reject([](ExperimentConfig& c) { c.root_mean = 1.0; });
  reject([](ExperimentConfig& c) { c.hidden_root_mean = 0.0; });
  reject([](ExperimentConfig& c) { c.em_max_iters = 0; });
  reject([](ExperimentConfig& c) { c.em_tol = 0.0; });
  reject([](ExperimentConfig& c) { c.grid_resolution = 15; });
  reject([](ExperimentConfig& c) { c.grid_hi = c.grid_lo; });
  reject([](ExperimentConfig& c) { c.basin_threshold = 0.0; });
  reject([](ExperimentConfig& c) { c.fanin_lo = 0; });
  reject([](ExperimentConfig& c) { c.fanin_hi = 0; });
  reject([](ExperimentConfig& c) { c.adaptive_samples = 0; });
  reject([](ExperimentConfig& c) { c.c_warmup = 0; });
  reject([](ExperimentConfig& c) { c.adaptive_nu = -0.5; });
  reject([](ExperimentConfig& c) { c.threads = 0; });
}

TEST_CASE("config: multimodal preset applies the two-parent study constants") {
  ExperimentConfig base;
  base.seed = 555;  // preserved by the preset
  const ExperimentConfig cfg = vmc::multimodal_preset(base);
  CHECK(cfg.experiment == "multimodal");
  CHECK(cfg.alpha == 2.0);
  CHECK(cfg.T == 50);
  CHECK(cfg.prior_mean == 3.0);
  CHECK(cfg.prior_var == 10.0);
  CHECK(cfg.root_mean == 0.5);
  CHECK(cfg.hidden_root_mean == 0.6);
  CHECK(cfg.n_samples == std::vector<long>{5000});
  CHECK(cfg.grid_lo < cfg.grid_hi);
  CHECK(cfg.seed == 555);
}
