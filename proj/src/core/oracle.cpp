#include "core/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

#include "core/common.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace momentflow {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
const double kInvSqrtPi = 1.0 / std::sqrt(std::numbers::pi);

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch on the Jacobi matrix; deterministic and accurate for the node
// counts used here.
Rule gauss_rule(int n, bool hermite) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = hermite
                         ? std::sqrt(k / 2.0)
                         : k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k - 1, k) = b;
    jacobi(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  require(eig.info() == Eigen::Success, Status::numerical_failure,
          "quadrature rule eigensolve failed");
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mass = hermite ? std::sqrt(std::numbers::pi) : 2.0;
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = eig.eigenvalues()(i);
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = mass * v0 * v0;
  }
  return rule;
}

const Rule& cached_rule(int n, bool hermite) {
  static std::mutex mutex;
  static std::map<std::pair<int, bool>, Rule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.try_emplace({n, hermite});
  if (inserted) it->second = gauss_rule(n, hermite);
  return it->second;
}

// Panel edges over [-T, T]: split at the requested interior points, then
// subdivide to the maximum panel width.
std::vector<double> panel_edges(double tail, double max_width,
                                std::span<const double> splits) {
  std::vector<double> edges{-tail, tail};
  for (double s : splits) {
    if (s > -tail && s < tail) edges.push_back(s);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<double> out;
  out.push_back(edges.front());
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double a = edges[i], b = edges[i + 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
    for (int p = 1; p <= pieces; ++p) out.push_back(a + (b - a) * p / pieces);
  }
  return out;
}

// Nodes and weights (including the exp(-t^2) factor) for the split scheme.
struct PanelGrid {
  std::vector<double> t;
  std::vector<double> w;
};

PanelGrid build_panel_grid(const QuadratureConfig& q, std::span<const double> splits) {
  const Rule& gl = cached_rule(q.nodes_per_axis, /*hermite=*/false);
  const auto edges = panel_edges(q.tail, q.max_panel_width, splits);
  PanelGrid grid;
  grid.t.reserve((edges.size() - 1) * gl.nodes.size());
  grid.w.reserve(grid.t.capacity());
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double a = edges[e], b = edges[e + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double t = half * gl.nodes[i] + mid;
      grid.t.push_back(t);
      grid.w.push_back(half * gl.weights[i] * std::exp(-t * t));
    }
  }
  return grid;
}

// Breakpoints of g(mu + sqrt(2) sigma t) in t.
std::vector<double> breaks_in_t(ActivationKind kind, double mu, double sigma) {
  std::vector<double> out;
  for (double b : kind.breakpoints()) out.push_back((b - mu) / (kSqrt2 * sigma));
  return out;
}

double integrate_1d(ActivationKind kind, double mu, double sigma,
                    const QuadratureConfig& q, bool squared) {
  if (q.scheme == QuadScheme::gauss_hermite) {
    const Rule& gh = cached_rule(q.nodes_per_axis, /*hermite=*/true);
    double sum = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      double v = kind.raw(mu + kSqrt2 * sigma * gh.nodes[i]);
      if (squared) v *= v;
      sum += gh.weights[i] * v;
    }
    return sum * kInvSqrtPi;
  }
  const auto splits = breaks_in_t(kind, mu, sigma);
  const PanelGrid grid = build_panel_grid(q, splits);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.t.size(); ++i) {
    double v = kind.raw(mu + kSqrt2 * sigma * grid.t[i]);
    if (squared) v *= v;
    sum += grid.w[i] * v;
  }
  return sum * kInvSqrtPi;
}

void check_quad_config(const QuadratureConfig& q) {
  require(q.nodes_per_axis >= 2, Status::invalid_argument,
          "quadrature needs at least 2 nodes per axis");
  require(q.tail > 0 && q.max_panel_width > 0, Status::invalid_argument,
          "quadrature tail and panel width must be positive");
}

}  // namespace

double quad_mean(ActivationKind kind, const UnivariateGaussian& g,
                 const QuadratureConfig& q) {
  check_quad_config(q);
  require(g.sigma > 0.0, Status::domain_error, "quad_mean requires sigma > 0");
  return integrate_1d(kind, g.mu, g.sigma, q, /*squared=*/false);
}

double quad_second_moment(ActivationKind kind, const UnivariateGaussian& g,
                          const QuadratureConfig& q) {
  check_quad_config(q);
  require(g.sigma > 0.0, Status::domain_error, "quad_second_moment requires sigma > 0");
  return integrate_1d(kind, g.mu, g.sigma, q, /*squared=*/true);
}

double quad_variance(ActivationKind kind, const UnivariateGaussian& g,
                     const QuadratureConfig& q) {
  const double m = quad_mean(kind, g, q);
  return quad_second_moment(kind, g, q) - m * m;
}

CrossMomentResult quad_cross_moment(ActivationKind kind_a, ActivationKind kind_b,
                                    const CorrelatedPair& pair,
                                    const QuadratureConfig& q) {
  check_quad_config(q);
  require(pair.a.sigma > 0.0 && pair.b.sigma > 0.0, Status::domain_error,
          "quad_cross_moment requires positive sigmas");
  require(std::isfinite(pair.rho) && std::fabs(pair.rho) <= 1.0,
          Status::domain_error, "correlation must satisfy |rho| <= 1");
  const double rho = pair.rho;
  CrossMomentResult result;

  if (std::fabs(rho) == 1.0) {
    // Degenerate direction: y_j is an affine function of the single variable.
    const double sgn = rho > 0 ? 1.0 : -1.0;
    std::vector<double> splits = breaks_in_t(kind_a, pair.a.mu, pair.a.sigma);
    for (double b : kind_b.breakpoints()) {
      splits.push_back(sgn * (b - pair.b.mu) / (kSqrt2 * pair.b.sigma));
    }
    if (q.scheme == QuadScheme::gauss_hermite) {
      const Rule& gh = cached_rule(q.nodes_per_axis, /*hermite=*/true);
      double sum = 0.0;
      for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        const double t = gh.nodes[i];
        sum += gh.weights[i] * kind_a.raw(pair.a.mu + kSqrt2 * pair.a.sigma * t) *
               kind_b.raw(pair.b.mu + kSqrt2 * pair.b.sigma * sgn * t);
      }
      result.cross_moment = sum * kInvSqrtPi;
    } else {
      const PanelGrid grid = build_panel_grid(q, splits);
      double sum = 0.0;
      for (std::size_t i = 0; i < grid.t.size(); ++i) {
        const double t = grid.t[i];
        sum += grid.w[i] * kind_a.raw(pair.a.mu + kSqrt2 * pair.a.sigma * t) *
               kind_b.raw(pair.b.mu + kSqrt2 * pair.b.sigma * sgn * t);
      }
      result.cross_moment = sum * kInvSqrtPi;
    }
  } else if (q.scheme == QuadScheme::gauss_hermite) {
    const Rule& gh = cached_rule(q.nodes_per_axis, /*hermite=*/true);
    const double r2 = std::sqrt(1.0 - rho * rho);
    double outer = 0.0;
    for (std::size_t p = 0; p < gh.nodes.size(); ++p) {
      const double ti = gh.nodes[p];
      const double ga = kind_a.raw(pair.a.mu + kSqrt2 * pair.a.sigma * ti);
      double inner = 0.0;
      for (std::size_t r = 0; r < gh.nodes.size(); ++r) {
        const double yj = pair.b.mu + kSqrt2 * pair.b.sigma * (rho * ti + r2 * gh.nodes[r]);
        inner += gh.weights[r] * kind_b.raw(yj);
      }
      outer += gh.weights[p] * ga * inner;
    }
    result.cross_moment = outer / std::numbers::pi;
  } else {
    const double r2 = std::sqrt(1.0 - rho * rho);
    const auto outer_splits = breaks_in_t(kind_a, pair.a.mu, pair.a.sigma);
    const PanelGrid outer_grid = build_panel_grid(q, outer_splits);
    const bool inner_has_breaks = !kind_b.breakpoints().empty();
    // With no inner breakpoints the inner grid is independent of t_i.
    const PanelGrid fixed_inner = inner_has_breaks ? PanelGrid{} : build_panel_grid(q, {});
    double outer = 0.0;
    for (std::size_t p = 0; p < outer_grid.t.size(); ++p) {
      const double ti = outer_grid.t[p];
      const double ga = kind_a.raw(pair.a.mu + kSqrt2 * pair.a.sigma * ti);
      if (ga == 0.0) continue;
      double inner = 0.0;
      if (inner_has_breaks) {
        std::vector<double> splits;
        for (double b : kind_b.breakpoints()) {
          splits.push_back(((b - pair.b.mu) / (kSqrt2 * pair.b.sigma) - rho * ti) / r2);
        }
        const PanelGrid grid = build_panel_grid(q, splits);
        for (std::size_t r = 0; r < grid.t.size(); ++r) {
          const double yj = pair.b.mu + kSqrt2 * pair.b.sigma * (rho * ti + r2 * grid.t[r]);
          inner += grid.w[r] * kind_b.raw(yj);
        }
      } else {
        for (std::size_t r = 0; r < fixed_inner.t.size(); ++r) {
          const double yj =
              pair.b.mu + kSqrt2 * pair.b.sigma * (rho * ti + r2 * fixed_inner.t[r]);
          inner += fixed_inner.w[r] * kind_b.raw(yj);
        }
      }
      outer += outer_grid.w[p] * ga * inner;
    }
    result.cross_moment = outer / std::numbers::pi;
  }

  const double mean_a = quad_mean(kind_a, pair.a, q);
  const double mean_b = quad_mean(kind_b, pair.b, q);
  result.covariance = result.cross_moment - mean_a * mean_b;
  return result;
}

void export_cross_moments_csv(const std::vector<CrossMomentRecord>& records,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Status::io_error, "cannot open '" + path.string() + "'");
  out << "kind_a,kind_b,mu_i,mu_j,sigma_i,sigma_j,rho,cross_moment,covariance\n";
  char buf[64];
  auto field = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& r : records) {
    out << r.kind_a.name() << ',' << r.kind_b.name() << ',';
    field(r.mu_i); out << ',';
    field(r.mu_j); out << ',';
    field(r.sigma_i); out << ',';
    field(r.sigma_j); out << ',';
    field(r.rho); out << ',';
    field(r.cross_moment); out << ',';
    field(r.covariance); out << '\n';
  }
  require(out.good(), Status::io_error, "failed writing '" + path.string() + "'");
}

namespace {

// Deterministic forward pass for a batch of samples (columns).
struct LoweredNetwork {
  struct Step {
    enum class Kind { affine, activation } kind;
    AffineLayer affine;
    ActivationKind activation;
  };
  std::vector<Step> steps;
  int output_dim = 0;
};

LoweredNetwork lower(const NetworkSpec& net) {
  LoweredNetwork low;
  for (const auto& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      Eigen::VectorXd b = d->b.size() > 0 ? d->b : Eigen::VectorXd::Zero(d->W.rows());
      low.steps.push_back({LoweredNetwork::Step::Kind::affine,
                           AffineLayer{d->W, std::move(b)}, {}});
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      low.steps.push_back({LoweredNetwork::Step::Kind::affine, conv2d_as_matrix(c->kernel), {}});
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      low.steps.push_back({LoweredNetwork::Step::Kind::activation, {}, a->kind});
    }
    // flatten is a no-op on the vector representation
  }
  low.output_dim = net.output_dim();
  return low;
}

void forward_batch(const LoweredNetwork& low, Eigen::MatrixXd& batch) {
  for (const auto& step : low.steps) {
    if (step.kind == LoweredNetwork::Step::Kind::affine) {
      batch = (step.affine.W * batch).colwise() + step.affine.b;
    } else {
      for (Eigen::Index j = 0; j < batch.cols(); ++j)
        for (Eigen::Index i = 0; i < batch.rows(); ++i)
          batch(i, j) = step.activation.raw(batch(i, j));
    }
  }
}

struct ChunkStats {
  Eigen::VectorXd sum;
  Eigen::MatrixXd sum_outer;
  long long count = 0;
};

}  // namespace

MomentEstimate mc_propagate(const NetworkSpec& net, const GaussianMoments& input,
                            const McConfig& mc) {
  require(mc.samples >= 2, Status::invalid_argument, "mc requires samples >= 2");
  require(mc.chunk >= 1, Status::invalid_argument, "mc chunk must be >= 1");
  input.validate();
  require(input.dim() == net.input_dim, Status::dimension_mismatch,
          "input moments dim " + std::to_string(input.dim()) +
              " does not match network input " + std::to_string(net.input_dim));
  const auto diagnostics = validate_network(net);
  require(diagnostics.empty(), Status::invalid_argument,
          "network failed validation: " +
              (diagnostics.empty() ? std::string() : diagnostics.front().message));

  Eigen::MatrixXd cov = psd_repair(input.cov, PsdPolicy::clip_eigenvalues);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double min_eig =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().minCoeff();
    fail(Status::numerical_failure,
         "Cholesky failed after PSD repair (min eigenvalue " +
             std::to_string(min_eig) + ")");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  const LoweredNetwork low = lower(net);
  const int n = input.dim();
  const int m = low.output_dim;

  const long long chunk_count = (mc.samples + mc.chunk - 1) / mc.chunk;
  std::vector<ChunkStats> stats(static_cast<std::size_t>(chunk_count));
  parallel_for(static_cast<std::size_t>(chunk_count), [&](std::size_t ci) {
    const long long begin = static_cast<long long>(ci) * mc.chunk;
    const long long count = std::min(mc.chunk, mc.samples - begin);
    Rng rng(derive_seed(mc.seed, static_cast<std::uint64_t>(ci)));
    Eigen::MatrixXd batch(n, count);
    for (long long s = 0; s < count; ++s) {
      for (int i = 0; i < n; ++i) batch(i, s) = rng.normal();
    }
    batch = (L * batch).colwise() + input.mean;
    forward_batch(low, batch);
    ChunkStats& cs = stats[ci];
    cs.count = count;
    cs.sum = batch.rowwise().sum();
    cs.sum_outer = batch * batch.transpose();
  });

  // Fixed-order reduction: serial and parallel runs produce identical bits.
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd sum_outer = Eigen::MatrixXd::Zero(m, m);
  long long total = 0;
  for (const auto& cs : stats) {
    sum += cs.sum;
    sum_outer += cs.sum_outer;
    total += cs.count;
  }

  MomentEstimate est;
  est.samples = total;
  est.mean = sum / static_cast<double>(total);
  Eigen::MatrixXd centered =
      (sum_outer - static_cast<double>(total) * est.mean * est.mean.transpose()) /
      static_cast<double>(total - 1);
  est.cov = 0.5 * (centered + centered.transpose());
  est.variance = est.cov.diagonal().cwiseMax(0.0);
  est.standard_error = (est.variance / static_cast<double>(total)).cwiseSqrt();
  return est;
}

}  // namespace momentflow
