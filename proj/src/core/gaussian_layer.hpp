#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace momentflow {

// Mean vector plus full covariance matrix at one layer interface.
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }

  // Throws unless cov is n x n, symmetric to `tol` (relative to the largest
  // entry) and has a nonnegative diagonal.
  void validate(double tol = 1e-9) const;
};

struct AffineLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

// Affine map whose weights and biases are independent factorized Gaussians.
struct FactorizedGaussianAffine {
  Eigen::MatrixXd W_mean;
  Eigen::MatrixXd W_var;  // elementwise Var(W_ij) >= 0
  Eigen::VectorXd b_mean;
  Eigen::VectorXd b_var;
};

enum class PsdPolicy { none, symmetrize, clip_eigenvalues };

/// y = Wx + b: mean -> W mu + b, cov -> W Sigma W^T (symmetrized).
GaussianMoments affine_propagate(const AffineLayer& layer,
                                 const GaussianMoments& in);

/// Affine propagation with uncertain parameters. The factorized-Gaussian
/// assumption kills every weight cross-covariance except Var(W_ij), so
///   Cov(y)_ik = delta_ik (Var(b_i) + sum_j E[x_j^2] Var(W_ij))
///              + (E[W] Sigma_x E[W]^T)_ik.
GaussianMoments dvi_affine_propagate(const FactorizedGaussianAffine& layer,
                                     const GaussianMoments& in);

enum class Padding { same, valid };

struct ConvShape {
  int h = 0, w = 0, c = 0;
  int flat() const { return h * w * c; }
};

// Dense 4-D kernel, row-major over (out_ch, in_ch, kh, kw), channels-last
// tensor layout: a feature map (h, w, c) flattens to index (i*w + j)*c + k.
struct Conv2dKernel {
  std::vector<double> weights;
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  int stride = 1;
  Padding padding = Padding::same;
  ConvShape input_shape;
  Eigen::VectorXd bias;  // length out_ch (may be empty for zero bias)

  ConvShape output_shape() const;
  double at(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_ch + ic) * kh + ky) * kw + kx];
  }
};

inline constexpr std::size_t kDefaultConvElementBudget = std::size_t{1} << 26;

/// Materializes the convolution as an explicit affine layer acting on
/// flattened channels-last inputs. Refuses to build matrices larger than
/// `element_budget` entries.
AffineLayer conv2d_as_matrix(const Conv2dKernel& kernel,
                             std::size_t element_budget = kDefaultConvElementBudget);

// Reproducible random SPD matrices: uniform(0,1] eigenvalues in a random
// orthogonal basis, rescaled so the largest diagonal entry equals
// max_variance.
struct CovFactory {
  std::uint64_t seed = 0;
  int n = 1;
  double max_variance = 1.0;
};

Eigen::MatrixXd random_covariance(const CovFactory& factory);

/// Symmetrizes always; under clip_eigenvalues additionally projects negative
/// eigenvalues to zero. If `frobenius_adjustment` is non-null it receives the
/// Frobenius norm of the applied change.
Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& cov, PsdPolicy policy,
                           double* frobenius_adjustment = nullptr);

}  // namespace momentflow
