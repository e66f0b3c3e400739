#include "core/activation_stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/parallel.hpp"
#include "core/special_math.hpp"

namespace momentflow {

namespace {

void check_gaussian(const UnivariateGaussian& g) {
  require(std::isfinite(g.mu) && std::isfinite(g.sigma), Status::domain_error,
          "Gaussian parameters must be finite");
  require(g.sigma >= 0.0, Status::domain_error,
          "standard deviation must be >= 0");
}

int capped_order(ActivationKind kind, int order) {
  return std::min(order, kind.max_series_order());
}

// k-th derivative of the logistic function. The numerator polynomial in
// e^u carries the Eulerian numbers with alternating signs; evaluation is
// reflected onto u <= 0 so e^u never overflows.
double logistic_derivative(int k, double u) {
  static const double eulerian[5][5] = {
      {1, 0, 0, 0, 0},
      {1, -1, 0, 0, 0},
      {1, -4, 1, 0, 0},
      {1, -11, 11, -1, 0},
      {1, -26, 66, -26, 1},
  };
  double sign = 1.0;
  if (u > 0.0) {
    // s(-u) = 1 - s(u) gives s^(k)(u) = (-1)^(k+1) s^(k)(-u)
    if (k % 2 == 0) sign = -1.0;
    u = -u;
  }
  const double e = std::exp(u);
  double num = 0.0;
  double epow = e;
  for (int m = 0; m < k; ++m) {
    num += eulerian[k - 1][m] * epow;
    epow *= e;
  }
  return sign * num / std::pow(1.0 + e, k + 1);
}

}  // namespace

double activation_mean(ActivationKind kind, const UnivariateGaussian& g,
                       double sigma_floor) {
  check_gaussian(g);
  if (kind.tag == ActivationKind::Tag::identity) return g.mu;
  if (g.sigma <= sigma_floor) return kind.raw(g.mu);
  const double mu = g.mu, sigma = g.sigma;
  switch (kind.tag) {
    case ActivationKind::Tag::heaviside:
      return Phi(mu / sigma);
    case ActivationKind::Tag::relu:
      return mu * Phi(mu / sigma) + sigma * phi(mu / sigma);
    case ActivationKind::Tag::gelu: {
      const double c = std::sqrt(1.0 + sigma * sigma);
      return mu * Phi(mu / c) + sigma * sigma / c * phi(mu / c);
    }
    case ActivationKind::Tag::sigmoid_approx: {
      const double beta = std::sqrt(1.0 + kind.alpha * sigma * sigma);
      return kind.raw(mu / beta);
    }
    default:
      break;
  }
  fail(Status::internal_error, "unknown activation tag");
}

double derivative_term(ActivationKind kind, const UnivariateGaussian& g, int k) {
  check_gaussian(g);
  require(k >= 1, Status::invalid_argument, "derivative order k must be >= 1");
  if (kind.tag == ActivationKind::Tag::identity) {
    return k == 1 ? g.sigma : 0.0;
  }
  require(k <= kind.max_series_order(), Status::unsupported,
          "activation '" + kind.name() + "' supports derivative terms up to k = " +
              std::to_string(kind.max_series_order()));
  require(g.sigma > 0.0, Status::domain_error,
          "derivative terms require sigma > 0");
  const double mu = g.mu, sigma = g.sigma;
  switch (kind.tag) {
    case ActivationKind::Tag::heaviside: {
      const double x = mu / sigma;
      const double s = (k % 2 == 1) ? 1.0 : -1.0;  // (-1)^(k-1)
      return s * hermite_he(k - 1, x) * phi(x);
    }
    case ActivationKind::Tag::relu: {
      const double x = mu / sigma;
      if (k == 1) return sigma * Phi(x);
      const double s = (k % 2 == 0) ? 1.0 : -1.0;  // (-1)^k
      return sigma * s * hermite_he(k - 2, x) * phi(x);
    }
    case ActivationKind::Tag::gelu: {
      const double a = sigma / std::sqrt(1.0 + sigma * sigma);
      const double t = a * mu / sigma;  // = mu / sqrt(1 + sigma^2)
      if (k == 1) return sigma * Phi(t) + a * (1.0 - a * a) * mu * phi(t);
      const double s = (k % 2 == 0) ? 1.0 : -1.0;
      return std::pow(a, k - 1) * sigma * s *
             (hermite_he(k - 2, t) - (1.0 - a * a) * hermite_he(k, t)) * phi(t);
    }
    case ActivationKind::Tag::sigmoid_approx: {
      const double beta = std::sqrt(1.0 + kind.alpha * sigma * sigma);
      return std::pow(sigma / beta, k) * logistic_derivative(k, mu / beta);
    }
    default:
      break;
  }
  fail(Status::internal_error, "unknown activation tag");
}

void derivative_terms(ActivationKind kind, const UnivariateGaussian& g, int K,
                      std::span<double> out) {
  check_gaussian(g);
  require(K >= 1 && out.size() >= static_cast<std::size_t>(K),
          Status::invalid_argument, "derivative_terms output too small");
  require(K <= kind.max_series_order(), Status::unsupported,
          "series order exceeds the limit for '" + kind.name() + "'");

  // Hermite-backed kinds share one recurrence pass; the rest defer to the
  // scalar path.
  const double mu = g.mu, sigma = g.sigma;
  switch (kind.tag) {
    case ActivationKind::Tag::heaviside: {
      require(sigma > 0.0, Status::domain_error, "derivative terms require sigma > 0");
      const double x = mu / sigma;
      const double p = phi(x);
      std::vector<double> he(static_cast<std::size_t>(K));
      hermite_he_sequence(K - 1, x, he);
      for (int k = 1; k <= K; ++k) {
        out[k - 1] = ((k % 2 == 1) ? 1.0 : -1.0) * he[k - 1] * p;
      }
      return;
    }
    case ActivationKind::Tag::relu: {
      require(sigma > 0.0, Status::domain_error, "derivative terms require sigma > 0");
      const double x = mu / sigma;
      const double p = phi(x);
      out[0] = sigma * Phi(x);
      if (K >= 2) {
        std::vector<double> he(static_cast<std::size_t>(K) - 1);
        hermite_he_sequence(K - 2, x, he);
        for (int k = 2; k <= K; ++k) {
          out[k - 1] = sigma * ((k % 2 == 0) ? 1.0 : -1.0) * he[k - 2] * p;
        }
      }
      return;
    }
    case ActivationKind::Tag::gelu: {
      require(sigma > 0.0, Status::domain_error, "derivative terms require sigma > 0");
      const double a = sigma / std::sqrt(1.0 + sigma * sigma);
      const double t = a * mu / sigma;
      const double p = phi(t);
      out[0] = sigma * Phi(t) + a * (1.0 - a * a) * mu * p;
      if (K >= 2) {
        std::vector<double> he(static_cast<std::size_t>(K) + 1);
        hermite_he_sequence(K, t, he);
        double apow = a;  // a^(k-1)
        for (int k = 2; k <= K; ++k) {
          const double s = (k % 2 == 0) ? 1.0 : -1.0;
          out[k - 1] = apow * sigma * s * (he[k - 2] - (1.0 - a * a) * he[k]) * p;
          apow *= a;
        }
      }
      return;
    }
    default:
      for (int k = 1; k <= K; ++k) out[k - 1] = derivative_term(kind, g, k);
      return;
  }
}

double activation_variance(ActivationKind kind, const UnivariateGaussian& g,
                           const SeriesConfig& cfg) {
  check_gaussian(g);
  require(cfg.order >= 1, Status::invalid_argument, "series order must be >= 1");
  if (kind.tag == ActivationKind::Tag::identity) return g.sigma * g.sigma;
  if (g.sigma <= cfg.sigma_floor) return 0.0;
  const double mu = g.mu, sigma = g.sigma;
  switch (kind.tag) {
    case ActivationKind::Tag::heaviside: {
      const double m = Phi(mu / sigma);
      return std::max(0.0, m * (1.0 - m));
    }
    case ActivationKind::Tag::relu: {
      const double x = mu / sigma;
      const double mean = mu * Phi(x) + sigma * phi(x);
      const double second = (mu * mu + sigma * sigma) * Phi(x) + mu * sigma * phi(x);
      return std::max(0.0, second - mean * mean);
    }
    case ActivationKind::Tag::gelu:
    case ActivationKind::Tag::sigmoid_approx: {
      const int K = capped_order(kind, cfg.order);
      std::vector<double> terms(static_cast<std::size_t>(K));
      derivative_terms(kind, g, K, terms);
      double sum = 0.0, factorial = 1.0;
      for (int k = 1; k <= K; ++k) {
        factorial *= k;
        sum += terms[k - 1] * terms[k - 1] / factorial;
      }
      return std::max(0.0, sum);
    }
    default:
      break;
  }
  fail(Status::internal_error, "unknown activation tag");
}

double pair_covariance(ActivationKind kind_a, ActivationKind kind_b,
                       const CorrelatedPair& pair, const SeriesConfig& cfg) {
  check_gaussian(pair.a);
  check_gaussian(pair.b);
  require(std::isfinite(pair.rho) && std::fabs(pair.rho) <= 1.0,
          Status::domain_error, "correlation must satisfy |rho| <= 1");
  require(cfg.order >= 1, Status::invalid_argument, "series order must be >= 1");
  if (pair.a.sigma <= cfg.sigma_floor || pair.b.sigma <= cfg.sigma_floor) return 0.0;
  if (pair.rho == 0.0) return 0.0;
  if (kind_a.tag == ActivationKind::Tag::identity &&
      kind_b.tag == ActivationKind::Tag::identity) {
    return pair.rho * pair.a.sigma * pair.b.sigma;
  }

  const int K = std::min(capped_order(kind_a, cfg.order),
                         capped_order(kind_b, cfg.order));
  std::vector<double> ta(static_cast<std::size_t>(K)), tb(static_cast<std::size_t>(K));
  derivative_terms(kind_a, pair.a, K, ta);
  derivative_terms(kind_b, pair.b, K, tb);
  double sum = 0.0, rho_pow = 1.0, factorial = 1.0;
  for (int k = 1; k <= K; ++k) {
    rho_pow *= pair.rho;
    factorial *= k;
    // product first: bitwise symmetric in the argument order
    sum += rho_pow / factorial * (ta[k - 1] * tb[k - 1]);
  }
  return sum;
}

GaussianMoments layer_output_moments(ActivationKind kind,
                                     const GaussianMoments& input,
                                     const SeriesConfig& cfg,
                                     LayerMomentsDiagnostics* diag) {
  input.validate();
  require(cfg.order >= 1, Status::invalid_argument, "series order must be >= 1");
  const int n = input.dim();
  LayerMomentsDiagnostics local;
  LayerMomentsDiagnostics& d = diag ? *diag : local;
  d = {};

  if (kind.tag == ActivationKind::Tag::identity) {
    GaussianMoments out = input;
    out.cov = 0.5 * (input.cov + input.cov.transpose()).eval();
    return out;
  }

  const int K = capped_order(kind, cfg.order);
  GaussianMoments out;
  out.mean.resize(n);
  out.cov = Eigen::MatrixXd::Zero(n, n);

  std::vector<double> sigmas(static_cast<std::size_t>(n));
  std::vector<bool> degenerate(static_cast<std::size_t>(n));
  Eigen::MatrixXd terms(K, n);  // column i: k = 1..K factors for element i
  for (int i = 0; i < n; ++i) {
    double var = input.cov(i, i);
    if (var < 0.0) {
      ++d.clamped_variances;
      var = 0.0;
    }
    const double sigma = std::sqrt(var);
    sigmas[i] = sigma;
    const UnivariateGaussian g{input.mean(i), sigma};
    if (sigma <= cfg.sigma_floor) {
      degenerate[i] = true;
      ++d.degenerate_inputs;
      out.mean(i) = kind.raw(g.mu);
      out.cov(i, i) = 0.0;
      continue;
    }
    out.mean(i) = activation_mean(kind, g, cfg.sigma_floor);
    double v = activation_variance(kind, g, cfg);
    if (v < 0.0) {
      ++d.clamped_variances;
      v = 0.0;
    }
    out.cov(i, i) = v;
    derivative_terms(kind, g, K, std::span<double>(terms.col(i).data(), K));
  }

  // Pairwise series; rows are independent so they parallelize without any
  // accumulation-order hazard.
  std::vector<int> row_clamps(static_cast<std::size_t>(n), 0);
  std::vector<double> factorial(static_cast<std::size_t>(K) + 1, 1.0);
  for (int k = 1; k <= K; ++k) factorial[k] = factorial[k - 1] * k;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    if (degenerate[i]) return;
    for (int j = i + 1; j < n; ++j) {
      if (degenerate[j]) continue;
      double rho = input.cov(i, j) / (sigmas[i] * sigmas[j]);
      if (rho > 1.0 || rho < -1.0) {
        ++row_clamps[i];
        rho = std::clamp(rho, -1.0, 1.0);
      }
      if (rho == 0.0) continue;
      double sum = 0.0, rho_pow = 1.0;
      for (int k = 1; k <= K; ++k) {
        rho_pow *= rho;
        sum += rho_pow / factorial[k] * (terms(k - 1, i) * terms(k - 1, j));
      }
      out.cov(i, j) = sum;
      out.cov(j, i) = sum;
    }
  });
  for (int c : row_clamps) d.clamped_correlations += c;

  if (cfg.psd_policy == PsdPolicy::clip_eigenvalues) {
    double adjustment = 0.0;
    out.cov = psd_repair(out.cov, PsdPolicy::clip_eigenvalues, &adjustment);
    d.psd_adjustment = adjustment;
  }
  // symmetric by construction for none/symmetrize
  return out;
}

}  // namespace momentflow
