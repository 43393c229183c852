#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace vmc {

/// One node of a logistic belief network. Nodes with parents follow a
/// Bernoulli conditional with logistic link on alpha + theta' x_parents.
/// Parentless nodes are Bernoulli with mean `root_mean`; when root_mean is
/// unset (NaN) it defaults to logistic(alpha), which is the value the
/// conditional formula yields for an empty parent set.
struct Node {
  std::string name;
  std::vector<int> parents;
  Eigen::VectorXd theta;
  bool hidden = false;
  double root_mean = std::numeric_limits<double>::quiet_NaN();
};

class BeliefNetwork {
 public:
  double alpha = 0.0;
  std::vector<Node> nodes;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  bool is_root(int i) const { return nodes[i].parents.empty(); }
  int n_theta() const;

  /// Per-node offsets into the stacked parameter vector; size n_nodes()+1.
  std::vector<int> theta_offsets() const;

  /// Indices of hidden nodes, in node order.
  std::vector<int> hidden_nodes() const;

  /// P(x_i = +1) for a parentless node.
  double root_prob(int i) const;

  Eigen::VectorXd theta_vector() const;
  void set_theta_vector(const Eigen::VectorXd& theta);

  /// Throws std::invalid_argument on a malformed network: parent ids out of
  /// range or not preceding their child, or theta length != parent count.
  void validate() const;
};

enum class Cell : std::int8_t { Minus = 0, Plus = 1, Unobserved = 2 };

inline int spin(Cell c) { return c == Cell::Plus ? 1 : -1; }

/// T observation slices over the network's nodes. Hidden nodes are
/// Unobserved in every slice, visible nodes fully observed.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int T, int n_nodes)
      : T_(T), n_(n_nodes), cells_(static_cast<size_t>(T) * n_nodes, Cell::Minus) {}

  int T() const { return T_; }
  int n_nodes() const { return n_; }
  Cell operator()(int t, int i) const { return cells_[static_cast<size_t>(t) * n_ + i]; }
  Cell& at(int t, int i) { return cells_[static_cast<size_t>(t) * n_ + i]; }

  bool operator==(const Dataset& other) const {
    return T_ == other.T_ && n_ == other.n_ && cells_ == other.cells_;
  }

  /// Complete +-1 values recorded by generate() before masking; diagnostic
  /// only, not serialized and not part of equality.
  Eigen::MatrixXd truth;

 private:
  int T_ = 0;
  int n_ = 0;
  std::vector<Cell> cells_;
};

/// Checks the visibility invariant: a column is Unobserved in every slice
/// iff its node is flagged hidden. Throws std::invalid_argument.
void check_compatible(const BeliefNetwork& net, const Dataset& data);

// Structured text network file (versioned header line "vmc-network 1").
BeliefNetwork load_network(const std::string& path);
void save_network(const BeliefNetwork& net, const std::string& path);

// CSV dataset file: header row of node names, cells in {-1, 1, ?}.
Dataset load_dataset(const std::string& path, const BeliefNetwork& net);
void save_dataset(const Dataset& data, const BeliefNetwork& net, const std::string& path);

/// Writes `content` to `path` via a temp file and atomic rename.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace vmc
