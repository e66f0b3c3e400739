#include "core/propagation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "core/common.hpp"
#include "core/container_io.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace momentflow {

GaussianMoments propagate(const NetworkSpec& net, const GaussianMoments& input,
                          const SeriesConfig& cfg, PropagationTrace* trace,
                          std::size_t first_layer) {
  const auto diagnostics = validate_network(net);
  require(diagnostics.empty(), Status::invalid_argument,
          "network failed validation: " +
              (diagnostics.empty() ? std::string() : diagnostics.front().message));
  require(first_layer <= net.layers.size(), Status::invalid_argument,
          "first_layer out of range");
  input.validate();
  const int expected =
      first_layer == 0 ? net.input_dim
                       : net.layer_output_dim(first_layer - 1);
  require(input.dim() == expected, Status::dimension_mismatch,
          "input moments dim " + std::to_string(input.dim()) +
              " does not match expected dim " + std::to_string(expected));

  GaussianMoments current = input;
  if (trace) {
    trace->snapshots.clear();
    trace->layers.clear();
    trace->snapshots.push_back(current);
  }

  for (std::size_t i = first_layer; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    LayerDiagnostics ld;
    ld.layer_index = static_cast<int>(i);
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      ld.layer_type = "dense";
      current = affine_propagate({d->W, d->b}, current);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      ld.layer_type = "conv2d";
      current = affine_propagate(conv2d_as_matrix(c->kernel), current);
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      ld.layer_type = "activation:" + a->kind.name();
      LayerMomentsDiagnostics md;
      current = layer_output_moments(a->kind, current, cfg, &md);
      ld.series_order = std::min(cfg.order, a->kind.max_series_order());
      ld.clamped_variances = md.clamped_variances;
      ld.clamped_correlations = md.clamped_correlations;
      ld.degenerate_inputs = md.degenerate_inputs;
      ld.psd_adjustment = md.psd_adjustment;
    } else {
      ld.layer_type = "flatten";
    }
    if (trace) {
      trace->snapshots.push_back(current);
      trace->layers.push_back(std::move(ld));
    }
  }
  return current;
}

void save_trace(const PropagationTrace& trace, const std::filesystem::path& path) {
  Container c;
  nlohmann::json snaps = nlohmann::json::array();
  for (std::size_t i = 0; i < trace.snapshots.size(); ++i) {
    const auto& m = trace.snapshots[i];
    const int n = m.dim();
    std::vector<double> mean(m.mean.data(), m.mean.data() + n);
    std::vector<double> cov(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r)
      for (int cidx = 0; cidx < n; ++cidx)
        cov[static_cast<std::size_t>(r) * n + cidx] = m.cov(r, cidx);
    nlohmann::json entry;
    entry["index"] = i;
    entry["dim"] = n;
    entry["mean_offset"] = c.append(mean);
    entry["cov_offset"] = c.append(cov);
    snaps.push_back(std::move(entry));
  }
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& ld : trace.layers) {
    diags.push_back({{"layer_index", ld.layer_index},
                     {"layer_type", ld.layer_type},
                     {"series_order", ld.series_order},
                     {"clamped_variances", ld.clamped_variances},
                     {"clamped_correlations", ld.clamped_correlations},
                     {"degenerate_inputs", ld.degenerate_inputs},
                     {"psd_adjustment", ld.psd_adjustment}});
  }
  c.manifest["snapshots"] = std::move(snaps);
  c.manifest["diagnostics"] = std::move(diags);
  write_container(path, c, kTraceSchema);
}

PropagationTrace load_trace(const std::filesystem::path& path) {
  Container c = read_container(path, kTraceSchema);
  PropagationTrace trace;
  for (const auto& entry : c.manifest.value("snapshots", nlohmann::json::array())) {
    const int n = entry["dim"].get<int>();
    require(n > 0, Status::shape_error, "trace snapshot dim must be positive");
    const auto mean = c.read(entry["mean_offset"].get<std::uint64_t>(),
                             static_cast<std::size_t>(n));
    const auto cov = c.read(entry["cov_offset"].get<std::uint64_t>(),
                            static_cast<std::size_t>(n) * n);
    GaussianMoments m;
    m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), n);
    m.cov.resize(n, n);
    for (int r = 0; r < n; ++r)
      for (int cidx = 0; cidx < n; ++cidx)
        m.cov(r, cidx) = cov[static_cast<std::size_t>(r) * n + cidx];
    trace.snapshots.push_back(std::move(m));
  }
  for (const auto& entry : c.manifest.value("diagnostics", nlohmann::json::array())) {
    LayerDiagnostics ld;
    ld.layer_index = entry.value("layer_index", -1);
    ld.layer_type = entry.value("layer_type", std::string());
    ld.series_order = entry.value("series_order", 0);
    ld.clamped_variances = entry.value("clamped_variances", 0);
    ld.clamped_correlations = entry.value("clamped_correlations", 0);
    ld.degenerate_inputs = entry.value("degenerate_inputs", 0);
    ld.psd_adjustment = entry.value("psd_adjustment", 0.0);
    trace.layers.push_back(std::move(ld));
  }
  return trace;
}

TrialMoments tightness_trial(const NetworkSpec& net, const TightnessConfig& cfg,
                             int trial_index) {
  const int n = net.input_dim;
  GaussianMoments input;
  Rng mean_rng(derive_seed(cfg.input_seed, 2 * static_cast<std::uint64_t>(trial_index)));
  input.mean.resize(n);
  for (int i = 0; i < n; ++i) input.mean(i) = mean_rng.normal();
  CovFactory factory;
  factory.seed = derive_seed(cfg.input_seed, 2 * static_cast<std::uint64_t>(trial_index) + 1);
  factory.n = n;
  factory.max_variance = cfg.max_variance;
  input.cov = random_covariance(factory);

  TrialMoments out;
  const GaussianMoments analytic = propagate(net, input, cfg.series);
  out.analytic_mean = analytic.mean;
  out.analytic_var = analytic.cov.diagonal();

  McConfig mc = cfg.mc;
  mc.seed = derive_seed(cfg.mc.seed, static_cast<std::uint64_t>(trial_index));
  const MomentEstimate est = mc_propagate(net, input, mc);
  out.mc_mean = est.mean;
  out.mc_var = est.variance;
  return out;
}

TightnessReport aggregate_tightness(const std::vector<TrialMoments>& trials,
                                    double ratio_epsilon) {
  require(trials.size() >= 2, Status::invalid_argument,
          "tightness needs at least 2 trials");
  const int m = static_cast<int>(trials.front().analytic_mean.size());
  TightnessReport report;
  report.trials = static_cast<int>(trials.size());
  report.outputs.resize(static_cast<std::size_t>(m));

  auto stats = [](const std::vector<double>& xs, double& mean, double& stddev) {
    if (xs.empty()) { mean = stddev = 0.0; return; }
    double s = 0.0;
    for (double x : xs) s += x;
    mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) { stddev = 0.0; return; }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  };

  for (int d = 0; d < m; ++d) {
    std::vector<double> q_mu, q_var;
    TightnessOutput& o = report.outputs[static_cast<std::size_t>(d)];
    for (const auto& t : trials) {
      if (std::fabs(t.analytic_mean(d)) <= ratio_epsilon) {
        ++o.excluded_mu;
      } else {
        q_mu.push_back(t.mc_mean(d) / t.analytic_mean(d));
      }
      if (std::fabs(t.analytic_var(d)) <= ratio_epsilon) {
        ++o.excluded_var;
      } else {
        q_var.push_back(t.mc_var(d) / t.analytic_var(d));
      }
    }
    stats(q_mu, o.q_mu_mean, o.q_mu_std);
    stats(q_var, o.q_var_mean, o.q_var_std);
  }
  return report;
}

TightnessReport tightness(const NetworkSpec& net, const TightnessConfig& cfg) {
  require(cfg.trials >= 2, Status::invalid_argument, "tightness requires trials >= 2");
  std::vector<TrialMoments> trials(static_cast<std::size_t>(cfg.trials));
  parallel_for(static_cast<std::size_t>(cfg.trials), [&](std::size_t t) {
    trials[t] = tightness_trial(net, cfg, static_cast<int>(t));
  });
  TightnessReport report = aggregate_tightness(trials, cfg.ratio_epsilon);
  report.samples = cfg.mc.samples;
  report.mc_seed = cfg.mc.seed;
  report.input_seed = cfg.input_seed;
  report.series_order = cfg.series.order;
  report.network_name = net.metadata.name;
  return report;
}

void write_tightness_csv(const TightnessReport& report,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Status::io_error, "cannot open '" + path.string() + "'");
  out << "output_index,q_mu_mean,q_mu_std,q_var_mean,q_var_std,excluded_mu,excluded_var\n";
  char buf[64];
  auto field = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t d = 0; d < report.outputs.size(); ++d) {
    const auto& o = report.outputs[d];
    out << d << ',';
    field(o.q_mu_mean); out << ',';
    field(o.q_mu_std); out << ',';
    field(o.q_var_mean); out << ',';
    field(o.q_var_std); out << ',';
    out << o.excluded_mu << ',' << o.excluded_var << '\n';
  }
  require(out.good(), Status::io_error, "failed writing '" + path.string() + "'");
}

void write_tightness_json(const TightnessReport& report,
                          const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = "momentflow-tightness/1";
  j["network"] = report.network_name;
  j["trials"] = report.trials;
  j["samples"] = report.samples;
  j["mc_seed"] = report.mc_seed;
  j["input_seed"] = report.input_seed;
  j["series_order"] = report.series_order;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t d = 0; d < report.outputs.size(); ++d) {
    const auto& o = report.outputs[d];
    rows.push_back({{"output_index", d},
                    {"q_mu_mean", o.q_mu_mean},
                    {"q_mu_std", o.q_mu_std},
                    {"q_var_mean", o.q_var_mean},
                    {"q_var_std", o.q_var_std},
                    {"excluded_mu", o.excluded_mu},
                    {"excluded_var", o.excluded_var}});
  }
  j["outputs"] = std::move(rows);
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Status::io_error, "cannot open '" + path.string() + "'");
  out << j.dump(2) << '\n';
  require(out.good(), Status::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace momentflow
