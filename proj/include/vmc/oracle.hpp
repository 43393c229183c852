#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "vmc/kernels.hpp"

namespace vmc {

/// Dense midpoint-rule evaluation of a 1-D or 2-D unnormalized log target.
/// Cells are indexed flat: ix for 1-D, ix * resolution + iy for 2-D.
struct GridPosterior {
  int dims = 1;
  std::vector<std::pair<double, double>> box;  // per-dimension [lo, hi]
  int resolution = 0;                          // points per dimension
  Eigen::VectorXd log_values;                  // per cell, unnormalized
  double log_norm = 0.0;  // log of (sum of exp(log_values)) * cell_volume
  double cell_volume = 0.0;

  int n_cells() const { return static_cast<int>(log_values.size()); }
  double step(int d) const { return (box[d].second - box[d].first) / resolution; }

  /// Midpoint coordinates of a flat cell index.
  Eigen::VectorXd midpoint(int cell) const;

  /// Flat cell index containing the point, or -1 outside the box.
  int cell_of(const Eigen::VectorXd& point) const;

  /// Bin edges per dimension (resolution + 1 values), matching the cells.
  std::vector<double> edges(int d) const;
};

/// Evaluates the target at cell midpoints and normalizes by log-sum-exp.
/// Throws "grid box too small" when boundary cells carry more than 1e-6 of
/// the total mass, and rejects resolution < 16.
GridPosterior build_grid(const Target& target,
                         const std::vector<std::pair<double, double>>& box,
                         int resolution);

/// Discrete mean and covariance under the normalized grid weights.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> grid_moments(const GridPosterior& grid);

/// Labels every cell with the flat index of the local maximum reached by
/// discrete steepest ascent (8-neighborhood in 2-D, strict increase only).
std::vector<int> basin_partition(const GridPosterior& grid);

/// Distinct labels in ascending order — one per local mode.
std::vector<int> basin_modes(const std::vector<int>& labels);

/// Total normalized mass of the cells carrying the given label.
double basin_mass(const GridPosterior& grid, const std::vector<int>& labels, int label);

/// Moments of the grid distribution restricted to one basin (renormalized).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> basin_moments(
    const GridPosterior& grid, const std::vector<int>& labels, int label);

/// CSV of cell midpoints and normalized density (x[,y],density).
void save_grid(const GridPosterior& grid, const std::string& path,
               const std::string& header_comment = "");

}  // namespace vmc
