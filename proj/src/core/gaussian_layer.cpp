#include "core/gaussian_layer.hpp"

#include <cmath>
#include <string>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace momentflow {

void GaussianMoments::validate(double tol) const {
  const int n = dim();
  require(cov.rows() == n && cov.cols() == n, Status::dimension_mismatch,
          "covariance shape does not match mean length");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  require(asym <= tol * scale, Status::invalid_argument,
          "covariance is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  for (int i = 0; i < n; ++i) {
    require(cov(i, i) >= -tol * scale, Status::invalid_argument,
            "covariance diagonal entry " + std::to_string(i) + " is negative");
  }
}

GaussianMoments affine_propagate(const AffineLayer& layer,
                                 const GaussianMoments& in) {
  require(layer.W.cols() == in.mean.size(), Status::dimension_mismatch,
          "affine layer expects input dim " + std::to_string(layer.W.cols()) +
              ", got " + std::to_string(in.mean.size()));
  require(layer.b.size() == 0 || layer.b.size() == layer.W.rows(),
          Status::dimension_mismatch, "bias length does not match output dim");
  GaussianMoments out;
  out.mean = layer.W * in.mean;
  if (layer.b.size() > 0) out.mean += layer.b;
  Eigen::MatrixXd cov = layer.W * in.cov * layer.W.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

GaussianMoments dvi_affine_propagate(const FactorizedGaussianAffine& layer,
                                     const GaussianMoments& in) {
  const int n = static_cast<int>(layer.W_mean.cols());
  const int m = static_cast<int>(layer.W_mean.rows());
  require(in.mean.size() == n, Status::dimension_mismatch,
          "dvi layer expects input dim " + std::to_string(n));
  require(layer.W_var.rows() == m && layer.W_var.cols() == n &&
              layer.b_mean.size() == m && layer.b_var.size() == m,
          Status::dimension_mismatch, "dvi parameter shapes inconsistent");
  require(layer.W_var.minCoeff() >= 0.0 && layer.b_var.minCoeff() >= 0.0,
          Status::invalid_argument, "dvi parameter variances must be >= 0");

  GaussianMoments out;
  out.mean = layer.W_mean * in.mean + layer.b_mean;
  Eigen::MatrixXd cov = layer.W_mean * in.cov * layer.W_mean.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  // E[x_j^2] = Sigma_jj + mu_j^2 feeds the weight-variance term (diagonal
  // because the weights are factorized).
  Eigen::VectorXd second_moment = in.cov.diagonal() + in.mean.cwiseAbs2();
  cov.diagonal() += layer.b_var + layer.W_var * second_moment;
  out.cov = std::move(cov);
  return out;
}

ConvShape Conv2dKernel::output_shape() const {
  ConvShape out;
  out.c = out_ch;
  if (padding == Padding::valid) {
    out.h = (input_shape.h - kh) / stride + 1;
    out.w = (input_shape.w - kw) / stride + 1;
  } else {
    out.h = (input_shape.h + stride - 1) / stride;
    out.w = (input_shape.w + stride - 1) / stride;
  }
  return out;
}

AffineLayer conv2d_as_matrix(const Conv2dKernel& k, std::size_t element_budget) {
  require(k.out_ch > 0 && k.in_ch > 0 && k.kh > 0 && k.kw > 0,
          Status::invalid_argument, "conv kernel dims must be positive");
  require(k.stride >= 1, Status::invalid_argument, "conv stride must be >= 1");
  require(k.input_shape.c == k.in_ch, Status::dimension_mismatch,
          "conv input channels do not match kernel");
  require(k.weights.size() == static_cast<std::size_t>(k.out_ch) * k.in_ch * k.kh * k.kw,
          Status::shape_error, "conv kernel weight count inconsistent");
  const ConvShape out = k.output_shape();
  require(out.h > 0 && out.w > 0, Status::invalid_argument,
          "conv output has non-positive spatial size");

  const std::size_t rows = static_cast<std::size_t>(out.flat());
  const std::size_t cols = static_cast<std::size_t>(k.input_shape.flat());
  require(rows * cols <= element_budget, Status::budget_exceeded,
          "conv matrix would need " + std::to_string(rows * cols) +
              " elements (budget " + std::to_string(element_budget) + ")");

  // TensorFlow-style 'same': total padding (out-1)*s + k - in, split with the
  // smaller half on the leading edge.
  int pad_top = 0, pad_left = 0;
  if (k.padding == Padding::same) {
    const int pad_h = std::max(0, (out.h - 1) * k.stride + k.kh - k.input_shape.h);
    const int pad_w = std::max(0, (out.w - 1) * k.stride + k.kw - k.input_shape.w);
    pad_top = pad_h / 2;
    pad_left = pad_w / 2;
  }

  AffineLayer layer;
  layer.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
  layer.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  const bool has_bias = k.bias.size() > 0;
  if (has_bias) {
    require(k.bias.size() == k.out_ch, Status::dimension_mismatch,
            "conv bias length must equal out_ch");
  }

  for (int oy = 0; oy < out.h; ++oy) {
    for (int ox = 0; ox < out.w; ++ox) {
      for (int oc = 0; oc < k.out_ch; ++oc) {
        const Eigen::Index row = (static_cast<Eigen::Index>(oy) * out.w + ox) * k.out_ch + oc;
        if (has_bias) layer.b(row) = k.bias(oc);
        for (int ky = 0; ky < k.kh; ++ky) {
          const int iy = oy * k.stride - pad_top + ky;
          if (iy < 0 || iy >= k.input_shape.h) continue;
          for (int kx = 0; kx < k.kw; ++kx) {
            const int ix = ox * k.stride - pad_left + kx;
            if (ix < 0 || ix >= k.input_shape.w) continue;
            for (int ic = 0; ic < k.in_ch; ++ic) {
              const Eigen::Index col =
                  (static_cast<Eigen::Index>(iy) * k.input_shape.w + ix) * k.in_ch + ic;
              layer.W(row, col) = k.at(oc, ic, ky, kx);
            }
          }
        }
      }
    }
  }
  return layer;
}

Eigen::MatrixXd random_covariance(const CovFactory& factory) {
  require(factory.n >= 1, Status::invalid_argument, "covariance dim must be >= 1");
  require(factory.max_variance > 0.0, Status::invalid_argument,
          "max_variance must be > 0");
  const int n = factory.n;
  Rng rng(derive_seed(factory.seed, 0x636f76ULL));
  Eigen::VectorXd eigenvalues(n);
  for (int i = 0; i < n; ++i) eigenvalues(i) = rng.uniform_open_closed();
  Eigen::MatrixXd gauss(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) gauss(i, j) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix the column signs so the basis is a deterministic function of the
  // Gaussian draw (Q is otherwise unique only up to column signs).
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }

  Eigen::MatrixXd cov = q * eigenvalues.asDiagonal() * q.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  const double max_diag = cov.diagonal().maxCoeff();
  cov *= factory.max_variance / max_diag;
  return cov;
}

Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& cov, PsdPolicy policy,
                           double* frobenius_adjustment) {
  require(cov.rows() == cov.cols(), Status::dimension_mismatch,
          "psd_repair expects a square matrix");
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  if (policy != PsdPolicy::clip_eigenvalues) {
    if (frobenius_adjustment) *frobenius_adjustment = (sym - cov).norm();
    return sym;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  require(eig.info() == Eigen::Success, Status::numerical_failure,
          "eigendecomposition failed in psd_repair");
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd repaired =
      eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  repaired = 0.5 * (repaired + repaired.transpose()).eval();
  if (frobenius_adjustment) *frobenius_adjustment = (repaired - cov).norm();
  return repaired;
}

}  // namespace momentflow
