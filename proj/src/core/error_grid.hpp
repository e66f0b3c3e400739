#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "core/activation_stats.hpp"
#include "core/oracle.hpp"

namespace momentflow {

// Sweep of the bivariate mean grid comparing the truncated covariance series
// against the quadrature oracle, per truncation order.
struct ErrorGridSpec {
  ActivationKind kind = ActivationKind::relu();
  double mu_min = -5.0, mu_max = 5.0, mu_step = 0.1;
  double sigma_i = 1.0, sigma_j = 1.0;
  double rho = 0.5;
  std::vector<int> orders{1, 4};
  SeriesConfig series;
  QuadratureConfig quad;
  bool keep_cells = false;  // retain the full per-cell error matrices
};

struct ErrorGridReport {
  std::vector<double> mu_values;
  std::vector<int> orders;
  std::vector<double> max_abs_error;   // per order
  std::vector<double> mean_abs_error;  // per order
  // row-major grids, filled only when keep_cells is set
  std::vector<double> oracle;
  std::vector<std::vector<double>> series_values;  // one grid per order
};

ErrorGridReport error_grid(const ErrorGridSpec& spec);

/// One row per (order, mu_i, mu_j) cell with the oracle and series values.
void write_error_grid_csv(const ErrorGridReport& report,
                          const std::filesystem::path& path);

}  // namespace momentflow
