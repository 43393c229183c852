#include "vmc/network.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "vmc/model.hpp"

namespace vmc {

int BeliefNetwork::n_theta() const {
  int n = 0;
  for (const auto& node : nodes) n += static_cast<int>(node.parents.size());
  return n;
}

std::vector<int> BeliefNetwork::theta_offsets() const {
  std::vector<int> off(nodes.size() + 1, 0);
  for (size_t i = 0; i < nodes.size(); ++i) {
    off[i + 1] = off[i] + static_cast<int>(nodes[i].parents.size());
  }
  return off;
}

std::vector<int> BeliefNetwork::hidden_nodes() const {
  std::vector<int> h;
  for (int i = 0; i < n_nodes(); ++i) {
    if (nodes[i].hidden) h.push_back(i);
  }
  return h;
}

double BeliefNetwork::root_prob(int i) const {
  const Node& node = nodes[i];
  if (!node.parents.empty()) {
    throw std::invalid_argument("root_prob: node has parents");
  }
  if (std::isnan(node.root_mean)) return logistic(alpha);
  return node.root_mean;
}

Eigen::VectorXd BeliefNetwork::theta_vector() const {
  Eigen::VectorXd theta(n_theta());
  int k = 0;
  for (const auto& node : nodes) {
    theta.segment(k, node.theta.size()) = node.theta;
    k += static_cast<int>(node.theta.size());
  }
  return theta;
}

void BeliefNetwork::set_theta_vector(const Eigen::VectorXd& theta) {
  if (theta.size() != n_theta()) {
    throw std::invalid_argument("set_theta_vector: dimension mismatch");
  }
  int k = 0;
  for (auto& node : nodes) {
    node.theta = theta.segment(k, node.parents.size());
    k += static_cast<int>(node.parents.size());
  }
}

void BeliefNetwork::validate() const {
  for (int i = 0; i < n_nodes(); ++i) {
    const Node& node = nodes[i];
    if (node.theta.size() != static_cast<Eigen::Index>(node.parents.size())) {
      throw std::invalid_argument("network: theta length != parent count at node " +
                                  node.name);
    }
    for (int p : node.parents) {
      // Topological node order doubles as the acyclicity proof.
      if (p < 0 || p >= i) {
        throw std::invalid_argument("network: parent must precede child, node " +
                                    node.name);
      }
    }
    if (node.parents.empty() && !std::isnan(node.root_mean)) {
      if (!(node.root_mean > 0.0 && node.root_mean < 1.0)) {
        throw std::invalid_argument("network: root mean outside (0,1) at node " +
                                    node.name);
      }
    }
    if (!node.parents.empty() && !std::isnan(node.root_mean)) {
      throw std::invalid_argument("network: root mean set on a node with parents: " +
                                  node.name);
    }
  }
}

void check_compatible(const BeliefNetwork& net, const Dataset& data) {
  if (data.n_nodes() != net.n_nodes()) {
    throw std::invalid_argument("dataset: column count != node count");
  }
  for (int i = 0; i < net.n_nodes(); ++i) {
    for (int t = 0; t < data.T(); ++t) {
      const bool unobserved = data(t, i) == Cell::Unobserved;
      if (unobserved != net.nodes[i].hidden) {
        throw std::invalid_argument(
            "dataset: visibility of column " + net.nodes[i].name +
            " does not match the node's hidden flag");
      }
    }
  }
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Splits "key=value" tokens; value may contain commas but no spaces.
std::pair<std::string, std::string> split_kv(const std::string& tok) {
  const auto eq = tok.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("network file: expected key=value, got '" + tok + "'");
  }
  return {tok.substr(0, eq), tok.substr(eq + 1)};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_network(const BeliefNetwork& net, const std::string& path) {
  std::ostringstream out;
  out << "vmc-network 1\n";
  out << "alpha " << fmt17(net.alpha) << "\n";
  for (const auto& node : net.nodes) {
    out << "node " << node.name << " hidden=" << (node.hidden ? 1 : 0);
    if (node.parents.empty()) {
      if (!std::isnan(node.root_mean)) out << " mean=" << fmt17(node.root_mean);
    } else {
      out << " parents=";
      for (size_t k = 0; k < node.parents.size(); ++k) {
        if (k) out << ",";
        out << net.nodes[node.parents[k]].name;
      }
      out << " theta=";
      for (Eigen::Index k = 0; k < node.theta.size(); ++k) {
        if (k) out << ",";
        out << fmt17(node.theta[k]);
      }
    }
    out << "\n";
  }
  atomic_write_file(path, out.str());
}

BeliefNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "vmc-network 1") {
    throw std::runtime_error("network file: bad or missing version header");
  }
  BeliefNetwork net;
  std::map<std::string, int> index;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "alpha") {
      ls >> net.alpha;
    } else if (word == "node") {
      Node node;
      ls >> node.name;
      std::string tok;
      std::vector<std::string> parent_names;
      std::vector<double> theta;
      while (ls >> tok) {
        auto [key, value] = split_kv(tok);
        if (key == "hidden") {
          node.hidden = value == "1";
        } else if (key == "mean") {
          node.root_mean = std::stod(value);
        } else if (key == "parents") {
          parent_names = split_csv(value);
        } else if (key == "theta") {
          for (const auto& v : split_csv(value)) theta.push_back(std::stod(v));
        } else {
          throw std::runtime_error("network file: unknown field '" + key + "'");
        }
      }
      for (const auto& p : parent_names) {
        auto it = index.find(p);
        if (it == index.end()) {
          throw std::runtime_error("network file: parent '" + p +
                                   "' not declared before node " + node.name);
        }
        node.parents.push_back(it->second);
      }
      node.theta = Eigen::Map<Eigen::VectorXd>(theta.data(), theta.size());
      index[node.name] = net.n_nodes();
      net.nodes.push_back(std::move(node));
    } else {
      throw std::runtime_error("network file: unknown directive '" + word + "'");
    }
  }
  net.validate();
  return net;
}

void save_dataset(const Dataset& data, const BeliefNetwork& net, const std::string& path) {
  if (data.n_nodes() != net.n_nodes()) {
    throw std::invalid_argument("save_dataset: column count != node count");
  }
  std::ostringstream out;
  for (int i = 0; i < net.n_nodes(); ++i) {
    if (i) out << ",";
    out << net.nodes[i].name;
  }
  out << "\n";
  for (int t = 0; t < data.T(); ++t) {
    for (int i = 0; i < data.n_nodes(); ++i) {
      if (i) out << ",";
      switch (data(t, i)) {
        case Cell::Minus: out << "-1"; break;
        case Cell::Plus: out << "1"; break;
        case Cell::Unobserved: out << "?"; break;
      }
    }
    out << "\n";
  }
  atomic_write_file(path, out.str());
}

Dataset load_dataset(const std::string& path, const BeliefNetwork& net) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file: empty");
  const auto names = split_csv(line);
  if (static_cast<int>(names.size()) != net.n_nodes()) {
    throw std::runtime_error("dataset file: header column count != node count");
  }
  for (int i = 0; i < net.n_nodes(); ++i) {
    if (names[i] != net.nodes[i].name) {
      throw std::runtime_error("dataset file: header name mismatch at column " +
                               std::to_string(i));
    }
  }
  std::vector<std::vector<Cell>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != net.n_nodes()) {
      throw std::runtime_error("dataset file: row width mismatch");
    }
    std::vector<Cell> row;
    for (const auto& c : cells) {
      if (c == "-1") row.push_back(Cell::Minus);
      else if (c == "1" || c == "+1") row.push_back(Cell::Plus);
      else if (c == "?") row.push_back(Cell::Unobserved);
      else throw std::runtime_error("dataset file: bad cell '" + c + "'");
    }
    rows.push_back(std::move(row));
  }
  Dataset data(static_cast<int>(rows.size()), net.n_nodes());
  for (int t = 0; t < data.T(); ++t) {
    for (int i = 0; i < data.n_nodes(); ++i) data.at(t, i) = rows[t][i];
  }
  check_compatible(net, data);
  return data;
}

}  // namespace vmc
