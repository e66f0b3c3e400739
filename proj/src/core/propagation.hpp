#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/activation_stats.hpp"
#include "core/network.hpp"
#include "core/oracle.hpp"

namespace momentflow {

struct LayerDiagnostics {
  int layer_index = -1;
  std::string layer_type;
  int series_order = 0;
  int clamped_variances = 0;
  int clamped_correlations = 0;
  int degenerate_inputs = 0;
  double psd_adjustment = 0.0;
};

// Per-layer snapshots: snapshots[0] is the input, snapshots[i+1] the output
// of layer i.
struct PropagationTrace {
  std::vector<GaussianMoments> snapshots;
  std::vector<LayerDiagnostics> layers;
};

/// Moment propagation across the whole stack: affine layers (convolutions
/// lowered to matrices) alternate with activation moment maps; the input to
/// every nonlinearity is re-modelled as Gaussian with the propagated
/// moments. `first_layer` allows resuming from an intermediate snapshot.
GaussianMoments propagate(const NetworkSpec& net, const GaussianMoments& input,
                          const SeriesConfig& cfg,
                          PropagationTrace* trace = nullptr,
                          std::size_t first_layer = 0);

void save_trace(const PropagationTrace& trace, const std::filesystem::path& path);
PropagationTrace load_trace(const std::filesystem::path& path);

struct TightnessConfig {
  int trials = 20;
  McConfig mc;                 // mc.seed is the base MC seed, one substream per trial
  SeriesConfig series;
  std::uint64_t input_seed = 0;  // drives the per-trial input mean/covariance
  double max_variance = 1.0;
  double ratio_epsilon = 1e-12;  // |analytic| below this excludes the trial
};

struct TightnessOutput {
  double q_mu_mean = 0.0, q_mu_std = 0.0;
  double q_var_mean = 0.0, q_var_std = 0.0;
  int excluded_mu = 0, excluded_var = 0;
};

struct TightnessReport {
  std::vector<TightnessOutput> outputs;  // one row per output dimension
  int trials = 0;
  long long samples = 0;
  std::uint64_t mc_seed = 0;
  std::uint64_t input_seed = 0;
  int series_order = 0;
  std::string network_name;
};

struct TrialMoments {
  Eigen::VectorXd analytic_mean, analytic_var;
  Eigen::VectorXd mc_mean, mc_var;
};

/// One tightness trial: fresh standard-normal input mean, fresh random
/// covariance (max variance as configured), analytic propagation vs the
/// Monte Carlo estimate.
TrialMoments tightness_trial(const NetworkSpec& net, const TightnessConfig& cfg,
                             int trial_index);

/// Ratio statistics Q_mu = mu_MC / mu_A and Q_var = var_MC / var_A per
/// output, aggregated as mean +- standard deviation across trials.
/// Near-zero analytic denominators are excluded and counted.
TightnessReport aggregate_tightness(const std::vector<TrialMoments>& trials,
                                    double ratio_epsilon);

TightnessReport tightness(const NetworkSpec& net, const TightnessConfig& cfg);

void write_tightness_csv(const TightnessReport& report,
                         const std::filesystem::path& path);
void write_tightness_json(const TightnessReport& report,
                          const std::filesystem::path& path);

}  // namespace momentflow
