#include "vmc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vmc/model.hpp"
#include "vmc/network.hpp"

namespace vmc {

Eigen::VectorXd GridPosterior::midpoint(int cell) const {
  Eigen::VectorXd p(dims);
  if (dims == 1) {
    p[0] = box[0].first + (cell + 0.5) * step(0);
  } else {
    p[0] = box[0].first + (cell / resolution + 0.5) * step(0);
    p[1] = box[1].first + (cell % resolution + 0.5) * step(1);
  }
  return p;
}

int GridPosterior::cell_of(const Eigen::VectorXd& point) const {
  int flat = 0;
  for (int d = 0; d < dims; ++d) {
    const int i = static_cast<int>(std::floor((point[d] - box[d].first) / step(d)));
    if (i < 0 || i >= resolution) return -1;
    flat = flat * resolution + i;
  }
  return flat;
}

std::vector<double> GridPosterior::edges(int d) const {
  std::vector<double> e(static_cast<size_t>(resolution) + 1);
  for (int i = 0; i <= resolution; ++i) e[static_cast<size_t>(i)] = box[d].first + i * step(d);
  return e;
}

GridPosterior build_grid(const Target& target,
                         const std::vector<std::pair<double, double>>& box,
                         int resolution) {
  const int dims = static_cast<int>(box.size());
  if (dims < 1 || dims > 2) throw std::invalid_argument("grid: dimensions must be 1 or 2");
  if (resolution < 16) throw std::invalid_argument("grid: resolution must be >= 16");
  for (const auto& [lo, hi] : box) {
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
      throw std::invalid_argument("grid: box must be finite with lo < hi");
    }
  }

  GridPosterior grid;
  grid.dims = dims;
  grid.box = box;
  grid.resolution = resolution;
  grid.cell_volume = 1.0;
  for (int d = 0; d < dims; ++d) grid.cell_volume *= grid.step(d);

  const int n = dims == 1 ? resolution : resolution * resolution;
  grid.log_values.resize(n);
  for (int c = 0; c < n; ++c) grid.log_values[c] = target(grid.midpoint(c));

  grid.log_norm =
      log_sum_exp({grid.log_values.data(), static_cast<size_t>(n)}) +
      std::log(grid.cell_volume);

  // Mass touching the box boundary signals that the box clips the target.
  std::vector<double> boundary;
  for (int c = 0; c < n; ++c) {
    bool edge;
    if (dims == 1) {
      edge = c == 0 || c == resolution - 1;
    } else {
      const int ix = c / resolution, iy = c % resolution;
      edge = ix == 0 || iy == 0 || ix == resolution - 1 || iy == resolution - 1;
    }
    if (edge) boundary.push_back(grid.log_values[c]);
  }
  const double log_total = grid.log_norm - std::log(grid.cell_volume);
  if (std::exp(log_sum_exp(boundary) - log_total) > 1e-6) {
    throw std::runtime_error("grid box too small");
  }
  return grid;
}

namespace {

// Normalized cell probabilities; stable because log_norm subtracts the max
// implicitly through the log-sum-exp.
Eigen::VectorXd cell_weights(const GridPosterior& grid) {
  const double log_total = grid.log_norm - std::log(grid.cell_volume);
  return (grid.log_values.array() - log_total).exp();
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> weighted_moments(
    const GridPosterior& grid, const Eigen::VectorXd& w) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(grid.dims);
  for (int c = 0; c < grid.n_cells(); ++c) mean += w[c] * grid.midpoint(c);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(grid.dims, grid.dims);
  for (int c = 0; c < grid.n_cells(); ++c) {
    const Eigen::VectorXd d = grid.midpoint(c) - mean;
    cov += w[c] * (d * d.transpose());
  }
  return {std::move(mean), std::move(cov)};
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::MatrixXd> grid_moments(const GridPosterior& grid) {
  return weighted_moments(grid, cell_weights(grid));
}

std::vector<int> basin_partition(const GridPosterior& grid) {
  const int n = grid.n_cells();
  const int res = grid.resolution;
  std::vector<int> label(static_cast<size_t>(n), -1);

  // Best strictly-uphill neighbor, or -1 at a local maximum. Ties broken by
  // the smallest flat index so labeling is deterministic.
  auto uphill = [&](int c) {
    int best = -1;
    double best_v = grid.log_values[c];
    if (grid.dims == 1) {
      for (int dx = -1; dx <= 1; dx += 2) {
        const int nx = c + dx;
        if (nx < 0 || nx >= res) continue;
        if (grid.log_values[nx] > best_v) {
          best_v = grid.log_values[nx];
          best = nx;
        }
      }
      return best;
    }
    const int ix = c / res, iy = c % res;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        const int nx = ix + dx, ny = iy + dy;
        if (nx < 0 || ny < 0 || nx >= res || ny >= res) continue;
        const int nc = nx * res + ny;
        if (grid.log_values[nc] > best_v) {
          best_v = grid.log_values[nc];
          best = nc;
        }
      }
    }
    return best;
  };

  std::vector<int> path;
  for (int c = 0; c < n; ++c) {
    if (label[static_cast<size_t>(c)] >= 0) continue;
    path.clear();
    int cur = c;
    while (label[static_cast<size_t>(cur)] < 0) {
      path.push_back(cur);
      const int next = uphill(cur);
      if (next < 0) {
        label[static_cast<size_t>(cur)] = cur;  // local maximum labels itself
        break;
      }
      cur = next;
    }
    const int mode = label[static_cast<size_t>(cur)];
    for (int p : path) label[static_cast<size_t>(p)] = mode;
  }
  return label;
}

std::vector<int> basin_modes(const std::vector<int>& labels) {
  std::vector<int> modes(labels);
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  return modes;
}

double basin_mass(const GridPosterior& grid, const std::vector<int>& labels, int label) {
  const Eigen::VectorXd w = cell_weights(grid);
  double mass = 0.0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    if (labels[static_cast<size_t>(c)] == label) mass += w[c];
  }
  return mass;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> basin_moments(
    const GridPosterior& grid, const std::vector<int>& labels, int label) {
  Eigen::VectorXd w = cell_weights(grid);
  double mass = 0.0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    if (labels[static_cast<size_t>(c)] != label) w[c] = 0.0;
    mass += w[c];
  }
  if (mass <= 0.0) throw std::invalid_argument("basin_moments: empty basin");
  return weighted_moments(grid, Eigen::VectorXd(w / mass));
}

void save_grid(const GridPosterior& grid, const std::string& path,
               const std::string& header_comment) {
  const Eigen::VectorXd w = cell_weights(grid);
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  char buf[64];
  out << (grid.dims == 1 ? "x,density\n" : "x,y,density\n");
  for (int c = 0; c < grid.n_cells(); ++c) {
    const Eigen::VectorXd p = grid.midpoint(c);
    const double density = w[c] / grid.cell_volume;
    for (int d = 0; d < grid.dims; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g,", p[d]);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g\n", density);
    out << buf;
  }
  atomic_write_file(path, out.str());
}

}  // namespace vmc
