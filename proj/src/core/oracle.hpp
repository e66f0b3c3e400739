#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/activation.hpp"
#include "core/activation_stats.hpp"
#include "core/gaussian_layer.hpp"
#include "core/network.hpp"

namespace momentflow {

// gauss_hermite: classic tensor-product rule in the whitened coordinates.
// gauss_hermite_split: same substitution, but the weight exp(-t^2) is carried
// explicitly on Gauss-Legendre panels that split at activation breakpoints,
// so discontinuous and kinked activations integrate at spectral accuracy.
// The split scheme is the default; the plain rule cannot reach the required
// tolerances for Heaviside or ReLU.
enum class QuadScheme { gauss_hermite, gauss_hermite_split };

struct QuadratureConfig {
  int nodes_per_axis = 60;  // per panel under the split scheme
  QuadScheme scheme = QuadScheme::gauss_hermite_split;
  double tail = 8.0;             // integrate t in [-tail, tail]
  double max_panel_width = 4.0;  // split scheme only
};

/// E[g(y)] for y ~ N(mu, sigma^2) via the substitution y = mu + sqrt(2) sigma t.
double quad_mean(ActivationKind kind, const UnivariateGaussian& g,
                 const QuadratureConfig& q);

/// E[g(y)^2]; same machinery applied to the squared activation.
double quad_second_moment(ActivationKind kind, const UnivariateGaussian& g,
                          const QuadratureConfig& q);

double quad_variance(ActivationKind kind, const UnivariateGaussian& g,
                     const QuadratureConfig& q);

struct CrossMomentResult {
  double cross_moment = 0.0;  // E[g_a(y_i) g_b(y_j)]
  double covariance = 0.0;
};

/// Tensor-product quadrature of the bivariate expectation under the
/// whitening substitution y_i = mu_i + sqrt(2) s_i t_i,
/// y_j = mu_j + sqrt(2) s_j (rho t_i + sqrt(1-rho^2) t_j). rho = +-1 falls
/// back to a one-dimensional rule along the degenerate direction.
CrossMomentResult quad_cross_moment(ActivationKind kind_a, ActivationKind kind_b,
                                    const CorrelatedPair& pair,
                                    const QuadratureConfig& q);

struct CrossMomentRecord {
  ActivationKind kind_a, kind_b;
  double mu_i, mu_j, sigma_i, sigma_j, rho;
  double cross_moment, covariance;
};

void export_cross_moments_csv(const std::vector<CrossMomentRecord>& records,
                              const std::filesystem::path& path);

struct McConfig {
  long long samples = 20000;
  std::uint64_t seed = 0;
  long long chunk = 4096;
};

struct MomentEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd cov;
  long long samples = 0;
  Eigen::VectorXd standard_error;  // of the mean, per output
};

/// Draws mu + L xi with L the Cholesky factor of the (clip-repaired) input
/// covariance, pushes every sample through the deterministic network and
/// returns unbiased estimators. Chunks use independent derived substreams
/// and are reduced in index order, so results are bit-identical for any
/// worker count.
MomentEstimate mc_propagate(const NetworkSpec& net, const GaussianMoments& input,
                            const McConfig& mc);

}  // namespace momentflow
