#pragma once

#include <span>

#include "core/activation.hpp"
#include "core/gaussian_layer.hpp"

namespace momentflow {

struct UnivariateGaussian {
  double mu = 0.0;
  double sigma = 0.0;  // standard deviation, >= 0
};

inline constexpr double kDefaultSigmaFloor = 1e-8;

// Controls the truncated covariance/variance series.
struct SeriesConfig {
  int order = 4;
  double sigma_floor = kDefaultSigmaFloor;
  PsdPolicy psd_policy = PsdPolicy::symmetrize;
};

struct CorrelatedPair {
  UnivariateGaussian a;
  UnivariateGaussian b;
  double rho = 0.0;
};

/// E[g(y)] for y ~ N(mu, sigma^2). Below `sigma_floor` the input is treated
/// as deterministic and the raw activation of mu is returned.
double activation_mean(ActivationKind kind, const UnivariateGaussian& g,
                       double sigma_floor = kDefaultSigmaFloor);

/// Var(g(y)). Heaviside, ReLU and Identity use their closed forms; GELU and
/// the sigmoid approximation use the truncated sum of squared derivative
/// terms. Tiny negative truncation artifacts are clamped to zero.
double activation_variance(ActivationKind kind, const UnivariateGaussian& g,
                           const SeriesConfig& cfg);

/// The series factor sigma^k d^k E[g(y)] / d mu^k for k >= 1.
double derivative_term(ActivationKind kind, const UnivariateGaussian& g, int k);

/// Fills out[0..K-1] with the factors for k = 1..K in one pass.
void derivative_terms(ActivationKind kind, const UnivariateGaussian& g, int K,
                      std::span<double> out);

/// Covariance of (g_a(y_i), g_b(y_j)) for jointly Gaussian inputs with
/// correlation rho: sum_{k=1..K} rho^k / k! * term_a(k) * term_b(k).
/// Heterogeneous kind pairs are supported; the order is capped by the lowest
/// per-kind limit. Returns 0 when either input is below the sigma floor.
double pair_covariance(ActivationKind kind_a, ActivationKind kind_b,
                       const CorrelatedPair& pair, const SeriesConfig& cfg);

struct LayerMomentsDiagnostics {
  int clamped_variances = 0;    // negative variances clamped to 0
  int clamped_correlations = 0; // |rho| pushed back into [-1, 1]
  int degenerate_inputs = 0;    // elements routed to the deterministic branch
  double psd_adjustment = 0.0;  // Frobenius norm moved by psd_repair
};

/// Full activation-layer moment map: means element-wise, variances on the
/// diagonal, the covariance series pairwise, then the configured PSD policy.
GaussianMoments layer_output_moments(ActivationKind kind,
                                     const GaussianMoments& input,
                                     const SeriesConfig& cfg,
                                     LayerMomentsDiagnostics* diag = nullptr);

}  // namespace momentflow
