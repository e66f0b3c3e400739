#include "core/error_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/common.hpp"
#include "core/parallel.hpp"

namespace momentflow {

ErrorGridReport error_grid(const ErrorGridSpec& spec) {
  require(spec.mu_step > 0.0, Status::invalid_argument, "mu_step must be > 0");
  require(spec.mu_max >= spec.mu_min, Status::invalid_argument,
          "mu_max must be >= mu_min");
  require(!spec.orders.empty(), Status::invalid_argument, "orders must be nonempty");
  require(std::is_sorted(spec.orders.begin(), spec.orders.end()),
          Status::invalid_argument, "orders must be sorted ascending");
  require(spec.sigma_i > 0.0 && spec.sigma_j > 0.0, Status::domain_error,
          "sigmas must be positive");
  require(std::fabs(spec.rho) <= 1.0, Status::domain_error, "|rho| must be <= 1");
  for (int k : spec.orders) {
    require(k >= 1, Status::invalid_argument, "orders must be >= 1");
    require(k <= spec.kind.max_series_order(), Status::unsupported,
            "order " + std::to_string(k) + " exceeds the limit for '" +
                spec.kind.name() + "'");
  }

  ErrorGridReport report;
  report.orders = spec.orders;
  const std::size_t count = static_cast<std::size_t>(
      std::floor((spec.mu_max - spec.mu_min) / spec.mu_step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    report.mu_values.push_back(spec.mu_min + static_cast<double>(i) * spec.mu_step);
  }
  const std::size_t n = report.mu_values.size();
  const std::size_t cells = n * n;
  const int k_max = spec.orders.back();

  // Derivative-term vectors depend only on mu, so each grid line is computed
  // once per axis.
  std::vector<std::vector<double>> terms_i(n), terms_j(n);
  for (std::size_t i = 0; i < n; ++i) {
    terms_i[i].resize(static_cast<std::size_t>(k_max));
    derivative_terms(spec.kind, {report.mu_values[i], spec.sigma_i}, k_max, terms_i[i]);
    terms_j[i].resize(static_cast<std::size_t>(k_max));
    derivative_terms(spec.kind, {report.mu_values[i], spec.sigma_j}, k_max, terms_j[i]);
  }
  std::vector<double> factorial(static_cast<std::size_t>(k_max) + 1, 1.0);
  for (int k = 1; k <= k_max; ++k) factorial[k] = factorial[k - 1] * k;

  std::vector<double> oracle(cells);
  parallel_for(cells, [&](std::size_t cell) {
    const std::size_t i = cell / n, j = cell % n;
    CorrelatedPair pair{{report.mu_values[i], spec.sigma_i},
                        {report.mu_values[j], spec.sigma_j},
                        spec.rho};
    oracle[cell] = quad_cross_moment(spec.kind, spec.kind, pair, spec.quad).covariance;
  });

  report.max_abs_error.assign(spec.orders.size(), 0.0);
  report.mean_abs_error.assign(spec.orders.size(), 0.0);
  if (spec.keep_cells) {
    report.oracle = oracle;
    report.series_values.assign(spec.orders.size(), std::vector<double>(cells));
  }
  for (std::size_t oi = 0; oi < spec.orders.size(); ++oi) {
    const int K = spec.orders[oi];
    double max_err = 0.0, sum_err = 0.0;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const std::size_t i = cell / n, j = cell % n;
      double series = 0.0, rho_pow = 1.0;
      for (int k = 1; k <= K; ++k) {
        rho_pow *= spec.rho;
        series += rho_pow / factorial[k] * (terms_i[i][k - 1] * terms_j[j][k - 1]);
      }
      const double err = std::fabs(series - oracle[cell]);
      max_err = std::max(max_err, err);
      sum_err += err;
      if (spec.keep_cells) report.series_values[oi][cell] = series;
    }
    report.max_abs_error[oi] = max_err;
    report.mean_abs_error[oi] = sum_err / static_cast<double>(cells);
  }
  return report;
}

void write_error_grid_csv(const ErrorGridReport& report,
                          const std::filesystem::path& path) {
  require(!report.series_values.empty(), Status::invalid_argument,
          "per-cell export requires keep_cells");
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Status::io_error, "cannot open '" + path.string() + "'");
  out << "order,mu_i,mu_j,oracle_cov,series_cov,abs_error\n";
  char buf[64];
  auto field = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  const std::size_t n = report.mu_values.size();
  for (std::size_t oi = 0; oi < report.orders.size(); ++oi) {
    for (std::size_t cell = 0; cell < n * n; ++cell) {
      const std::size_t i = cell / n, j = cell % n;
      out << report.orders[oi] << ',';
      field(report.mu_values[i]); out << ',';
      field(report.mu_values[j]); out << ',';
      field(report.oracle[cell]); out << ',';
      field(report.series_values[oi][cell]); out << ',';
      field(std::fabs(report.series_values[oi][cell] - report.oracle[cell]));
      out << '\n';
    }
  }
  require(out.good(), Status::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace momentflow
