// mfcli: command-line harness over the momentflow C API.
//
// Exit codes: 0 success, 2 usage or parameter-domain error, 3 I/O or file
// format error, 4 numerical failure.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "momentflow/momentflow.h"

namespace {

constexpr const char* kCliSchema = "momentflow-cli/1";

int exit_code_for(mf_status status) {
  switch (status) {
    case MF_OK:
      return 0;
    case MF_ERR_INVALID_ARGUMENT:
    case MF_ERR_DOMAIN:
    case MF_ERR_DIMENSION:
    case MF_ERR_UNSUPPORTED:
    case MF_ERR_BUDGET:
      return 2;
    case MF_ERR_IO:
    case MF_ERR_FORMAT:
    case MF_ERR_VERSION:
    case MF_ERR_CHECKSUM:
    case MF_ERR_SHAPE:
      return 3;
    case MF_ERR_NUMERICAL:
      return 4;
    default:
      return 1;
  }
}

// Throwing wrapper: any non-OK status aborts the command with its exit code.
struct CommandFailure {
  int code;
  std::string message;
};

void check(mf_status status) {
  if (status != MF_OK) {
    throw CommandFailure{exit_code_for(status), mf_last_error()};
  }
}

mf_activation parse_activation(const std::string& name, double alpha) {
  if (name == "heaviside") return {MF_ACT_HEAVISIDE, 0.0};
  if (name == "relu") return {MF_ACT_RELU, 0.0};
  if (name == "gelu") return {MF_ACT_GELU, 0.0};
  if (name == "sigmoid") return {MF_ACT_SIGMOID, alpha};
  if (name == "identity") return {MF_ACT_IDENTITY, 0.0};
  throw CommandFailure{2, "unknown activation kind '" + name + "'"};
}

struct NetworkHandle {
  mf_network* net = nullptr;
  ~NetworkHandle() { mf_network_free(net); }
};

struct MomentsHandle {
  mf_moments* m = nullptr;
  ~MomentsHandle() { mf_moments_free(m); }
};

void emit(const nlohmann::json& record, bool as_json,
          const std::string& plain_text) {
  if (as_json) {
    nlohmann::json out = record;
    out["schema"] = kCliSchema;
    std::printf("%s\n", out.dump().c_str());
  } else {
    std::fputs(plain_text.c_str(), stdout);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---- cov ----------------------------------------------------------------

struct CovArgs {
  std::string kind = "relu";
  std::string kind_b;
  std::vector<double> mu{0.0, 0.0};
  std::vector<double> sigma{1.0, 1.0};
  double rho = 0.5;
  int order = 4;
  double alpha = 0.368;
  bool oracle = false;
  int nodes = 60;
  std::string csv;
  bool json = false;
};

int run_cov(const CovArgs& a) {
  const mf_activation act_a = parse_activation(a.kind, a.alpha);
  const mf_activation act_b =
      parse_activation(a.kind_b.empty() ? a.kind : a.kind_b, a.alpha);
  mf_series_config series = mf_series_config_default();
  series.order = a.order;

  double series_cov = 0.0;
  check(mf_pair_covariance(act_a, act_b, a.mu[0], a.mu[1], a.sigma[0], a.sigma[1],
                           a.rho, &series, &series_cov));

  nlohmann::json record{{"command", "cov"},
                        {"kind", a.kind},
                        {"kind_b", a.kind_b.empty() ? a.kind : a.kind_b},
                        {"mu", a.mu},
                        {"sigma", a.sigma},
                        {"rho", a.rho},
                        {"order", a.order},
                        {"series_covariance", series_cov}};
  std::string text = "series covariance = " + fmt(series_cov) + "\n";
  if (a.oracle || !a.csv.empty()) {
    mf_quad_config quad = mf_quad_config_default();
    quad.nodes_per_axis = a.nodes;
    double cross = 0.0, oracle_cov = 0.0;
    check(mf_quad_cross_moment(act_a, act_b, a.mu[0], a.mu[1], a.sigma[0],
                               a.sigma[1], a.rho, &quad, &cross, &oracle_cov));
    const double abs_error = std::fabs(series_cov - oracle_cov);
    record["oracle_covariance"] = oracle_cov;
    record["oracle_cross_moment"] = cross;
    record["abs_error"] = abs_error;
    text += "oracle covariance = " + fmt(oracle_cov) + "\n";
    text += "abs error         = " + fmt(abs_error) + "\n";
    if (!a.csv.empty()) {
      // oracle record export, one row per invocation
      FILE* f = std::fopen(a.csv.c_str(), "w");
      if (!f) throw CommandFailure{3, "cannot open '" + a.csv + "'"};
      std::fprintf(f,
                   "kind_a,kind_b,mu_i,mu_j,sigma_i,sigma_j,rho,cross_moment,"
                   "covariance\n%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                   a.kind.c_str(), (a.kind_b.empty() ? a.kind : a.kind_b).c_str(),
                   a.mu[0], a.mu[1], a.sigma[0], a.sigma[1], a.rho, cross,
                   oracle_cov);
      std::fclose(f);
    }
  }
  emit(record, a.json, text);
  return 0;
}

// ---- error-grid ----------------------------------------------------------

struct GridArgs {
  std::string kind = "relu";
  double mu_min = -5.0, mu_max = 5.0, mu_step = 0.1;
  std::vector<double> sigma{1.0, 1.0};
  double rho = 0.5;
  std::vector<int> orders{1, 4};
  double alpha = 0.368;
  int nodes = 24;
  std::string csv;
  bool json = false;
};

int run_error_grid(const GridArgs& a) {
  mf_error_grid_spec spec{};
  spec.act = parse_activation(a.kind, a.alpha);
  spec.mu_min = a.mu_min;
  spec.mu_max = a.mu_max;
  spec.mu_step = a.mu_step;
  spec.sigma_i = a.sigma[0];
  spec.sigma_j = a.sigma[1];
  spec.rho = a.rho;
  spec.orders = a.orders.data();
  spec.n_orders = static_cast<int>(a.orders.size());
  spec.quad = mf_quad_config_default();
  spec.quad.nodes_per_axis = a.nodes;
  spec.csv_path = a.csv.empty() ? nullptr : a.csv.c_str();

  std::vector<double> max_err(a.orders.size()), mean_err(a.orders.size());
  check(mf_error_grid(&spec, max_err.data(), mean_err.data()));

  nlohmann::json rows = nlohmann::json::array();
  std::string text;
  for (std::size_t i = 0; i < a.orders.size(); ++i) {
    rows.push_back({{"order", a.orders[i]},
                    {"max_abs_error", max_err[i]},
                    {"mean_abs_error", mean_err[i]}});
    text += "order " + std::to_string(a.orders[i]) +
            ": max abs error = " + fmt(max_err[i]) +
            ", mean abs error = " + fmt(mean_err[i]) + "\n";
  }
  emit({{"command", "error-grid"}, {"kind", a.kind}, {"rho", a.rho},
        {"results", rows}},
       a.json, text);
  return 0;
}

// ---- gen-net ---------------------------------------------------------------

struct GenNetArgs {
  std::string family = "fc";
  int depth = 4;
  int width = 100;
  int input_dim = 0;
  int channels = 10;
  std::vector<int> input_shape{20, 20, 1};
  std::string activation = "relu";
  double alpha = 0.368;
  std::uint64_t seed = 1;
  std::string out;
  bool json = false;
};

int run_gen_net(const GenNetArgs& a) {
  const mf_activation act = parse_activation(a.activation, a.alpha);
  NetworkHandle net;
  if (a.family == "fc") {
    check(mf_network_synthesize_fc(a.depth, a.width, a.input_dim, act, a.seed,
                                   &net.net));
  } else if (a.family == "cnn") {
    check(mf_network_synthesize_cnn(a.depth, a.channels, a.input_shape[0],
                                    a.input_shape[1], a.input_shape[2], act,
                                    a.seed, &net.net));
  } else {
    throw CommandFailure{2, "unknown family '" + a.family + "' (fc|cnn)"};
  }
  check(mf_network_save(net.net, a.out.c_str()));

  char* desc = nullptr;
  check(mf_network_describe(net.net, &desc));
  std::unique_ptr<char[]> desc_guard(desc);
  nlohmann::json description = nlohmann::json::parse(desc);
  std::string text = "wrote " + a.out + ": input " +
                     std::to_string(mf_network_input_dim(net.net)) + " -> output " +
                     std::to_string(mf_network_output_dim(net.net)) + ", " +
                     std::to_string(mf_network_layer_count(net.net)) + " layers\n";
  emit({{"command", "gen-net"}, {"path", a.out}, {"network", description}},
       a.json, text);
  return 0;
}

// ---- gen-moments -----------------------------------------------------------

struct GenMomentsArgs {
  int dim = 100;
  std::uint64_t seed = 1;
  double max_variance = 1.0;
  std::string out;
  bool json = false;
};

int run_gen_moments(const GenMomentsArgs& a) {
  MomentsHandle m;
  check(mf_moments_random(a.dim, a.seed, a.max_variance, &m.m));
  check(mf_moments_save(m.m, a.out.c_str()));
  emit({{"command", "gen-moments"}, {"path", a.out}, {"dim", a.dim},
        {"seed", a.seed}, {"max_variance", a.max_variance}},
       a.json, "wrote " + a.out + ": dim " + std::to_string(a.dim) + "\n");
  return 0;
}

// ---- propagate ---------------------------------------------------------------

struct PropagateArgs {
  std::string net_path;
  std::string in_path;
  std::string out_path;
  std::string trace_path;
  int order = 4;
  std::string psd = "symmetrize";
  bool json = false;
};

int run_propagate(const PropagateArgs& a) {
  NetworkHandle net;
  check(mf_network_load(a.net_path.c_str(), &net.net));
  MomentsHandle input;
  check(mf_moments_load(a.in_path.c_str(), &input.m));

  mf_series_config series = mf_series_config_default();
  series.order = a.order;
  if (a.psd == "none") series.psd_policy = MF_PSD_NONE;
  else if (a.psd == "symmetrize") series.psd_policy = MF_PSD_SYMMETRIZE;
  else if (a.psd == "clip") series.psd_policy = MF_PSD_CLIP_EIGENVALUES;
  else throw CommandFailure{2, "unknown psd policy '" + a.psd + "' (none|symmetrize|clip)"};

  MomentsHandle output;
  if (a.trace_path.empty()) {
    check(mf_propagate(net.net, input.m, &series, &output.m));
  } else {
    check(mf_propagate_trace(net.net, input.m, &series, a.trace_path.c_str(),
                             &output.m));
  }
  check(mf_moments_save(output.m, a.out_path.c_str()));
  emit({{"command", "propagate"}, {"net", a.net_path}, {"in", a.in_path},
        {"out", a.out_path}, {"order", a.order},
        {"output_dim", mf_moments_dim(output.m)}},
       a.json,
       "wrote " + a.out_path + ": dim " + std::to_string(mf_moments_dim(output.m)) + "\n");
  return 0;
}

// ---- tightness --------------------------------------------------------------

struct TightnessArgs {
  std::string preset;
  std::string net_path;
  int trials = 20;
  long long samples = 20000;
  std::uint64_t seed = 1;
  int order = 4;
  bool paper_scale = false;
  std::string csv;
  std::string json_out;
  bool json = false;
};

int run_tightness(TightnessArgs a, const CLI::App* cmd) {
  NetworkHandle net;
  const mf_activation relu{MF_ACT_RELU, 0.0};
  if (!a.preset.empty()) {
    if (a.preset == "fc4") {
      check(mf_network_synthesize_fc(4, 100, 0, relu, a.seed, &net.net));
    } else if (a.preset == "fc8") {
      check(mf_network_synthesize_fc(8, 100, 0, relu, a.seed, &net.net));
    } else if (a.preset == "cnn4") {
      check(mf_network_synthesize_cnn(4, 10, 20, 20, 1, relu, a.seed, &net.net));
    } else if (a.preset == "cnn8") {
      check(mf_network_synthesize_cnn(8, 10, 20, 20, 1, relu, a.seed, &net.net));
    } else {
      throw CommandFailure{2, "unknown preset '" + a.preset + "' (fc4|fc8|cnn4|cnn8)"};
    }
  } else if (!a.net_path.empty()) {
    check(mf_network_load(a.net_path.c_str(), &net.net));
  } else {
    throw CommandFailure{2, "tightness needs --preset or --net"};
  }

  if (a.paper_scale) {
    if (cmd->count("--trials") == 0) a.trials = 200;
    if (cmd->count("--samples") == 0) a.samples = 75000;
  }

  mf_tightness_spec spec{};
  spec.trials = a.trials;
  spec.mc = mf_mc_config_default();
  spec.mc.samples = a.samples;
  spec.mc.seed = a.seed;
  spec.series = mf_series_config_default();
  spec.series.order = a.order;
  spec.input_seed = a.seed + 1;
  spec.max_variance = 1.0;
  spec.csv_path = a.csv.empty() ? nullptr : a.csv.c_str();
  spec.json_path = a.json_out.empty() ? nullptr : a.json_out.c_str();

  const int out_dim = mf_network_output_dim(net.net);
  std::vector<mf_tightness_output> outputs(static_cast<std::size_t>(out_dim));
  check(mf_tightness(net.net, &spec, outputs.data()));

  nlohmann::json rows = nlohmann::json::array();
  std::string text = "trials " + std::to_string(a.trials) + ", samples " +
                     std::to_string(a.samples) + ", seed " + std::to_string(a.seed) + "\n";
  for (int d = 0; d < out_dim; ++d) {
    const auto& o = outputs[static_cast<std::size_t>(d)];
    rows.push_back({{"output_index", d},
                    {"q_mu_mean", o.q_mu_mean},
                    {"q_mu_std", o.q_mu_std},
                    {"q_var_mean", o.q_var_mean},
                    {"q_var_std", o.q_var_std},
                    {"excluded_mu", o.excluded_mu},
                    {"excluded_var", o.excluded_var}});
    text += "output " + std::to_string(d) + ": Qmu = " + fmt(o.q_mu_mean) + " +- " +
            fmt(o.q_mu_std) + ", Qvar = " + fmt(o.q_var_mean) + " +- " +
            fmt(o.q_var_std) + "\n";
  }
  emit({{"command", "tightness"},
        {"preset", a.preset},
        {"trials", a.trials},
        {"samples", a.samples},
        {"seed", a.seed},
        {"order", a.order},
        {"outputs", rows}},
       a.json, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentflow: analytic moment propagation for neural networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mf_version());

  CovArgs cov;
  auto* cov_cmd = app.add_subcommand("cov", "covariance of one activation pair");
  cov_cmd->add_option("--kind", cov.kind, "activation kind")->capture_default_str();
  cov_cmd->add_option("--kind-b", cov.kind_b, "second element's kind (defaults to --kind)");
  cov_cmd->add_option("--mu", cov.mu, "input means")->expected(2);
  cov_cmd->add_option("--sigma", cov.sigma, "input standard deviations")->expected(2);
  cov_cmd->add_option("--rho", cov.rho, "correlation")->capture_default_str();
  cov_cmd->add_option("--order", cov.order, "series truncation order")->capture_default_str();
  cov_cmd->add_option("--alpha", cov.alpha, "sigmoid alpha")->capture_default_str();
  cov_cmd->add_flag("--oracle", cov.oracle, "also evaluate the quadrature oracle");
  cov_cmd->add_option("--nodes", cov.nodes, "oracle nodes per axis")->capture_default_str();
  cov_cmd->add_option("--csv", cov.csv, "write the oracle record to this CSV file");
  cov_cmd->add_flag("--json", cov.json, "machine-readable output");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("error-grid", "series-vs-oracle error sweep");
  grid_cmd->add_option("--kind", grid.kind)->capture_default_str();
  grid_cmd->add_option("--mu-min", grid.mu_min)->capture_default_str();
  grid_cmd->add_option("--mu-max", grid.mu_max)->capture_default_str();
  grid_cmd->add_option("--mu-step", grid.mu_step)->capture_default_str();
  grid_cmd->add_option("--sigma", grid.sigma)->expected(2);
  grid_cmd->add_option("--rho", grid.rho)->capture_default_str();
  grid_cmd->add_option("--orders", grid.orders, "truncation orders, ascending")
      ->delimiter(',');
  grid_cmd->add_option("--alpha", grid.alpha)->capture_default_str();
  grid_cmd->add_option("--nodes", grid.nodes, "oracle nodes per axis")->capture_default_str();
  grid_cmd->add_option("--csv", grid.csv, "write the per-cell matrix to this file");
  grid_cmd->add_flag("--json", grid.json);

  GenNetArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-net", "synthesize a Kaiming-initialized network");
  gen_cmd->add_option("--family", gen.family, "fc|cnn")->capture_default_str();
  gen_cmd->add_option("--depth", gen.depth, "number of weight layers")
      ->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "FC hidden width")->capture_default_str();
  gen_cmd->add_option("--input-dim", gen.input_dim, "FC input dim (default: width)");
  gen_cmd->add_option("--channels", gen.channels, "CNN channels")->capture_default_str();
  gen_cmd->add_option("--input-shape", gen.input_shape, "CNN input h w c")->expected(3);
  gen_cmd->add_option("--activation", gen.activation)->capture_default_str();
  gen_cmd->add_option("--alpha", gen.alpha)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output network file")->required();
  gen_cmd->add_flag("--json", gen.json);

  GenMomentsArgs genm;
  auto* genm_cmd = app.add_subcommand("gen-moments", "random input moments file");
  genm_cmd->add_option("--dim", genm.dim)->check(CLI::PositiveNumber)->capture_default_str();
  genm_cmd->add_option("--seed", genm.seed)->capture_default_str();
  genm_cmd->add_option("--max-variance", genm.max_variance)->capture_default_str();
  genm_cmd->add_option("--out", genm.out)->required();
  genm_cmd->add_flag("--json", genm.json);

  PropagateArgs prop;
  auto* prop_cmd = app.add_subcommand("propagate", "moment propagation through a network file");
  prop_cmd->add_option("--net", prop.net_path)->required();
  prop_cmd->add_option("--in", prop.in_path, "input moments file")->required();
  prop_cmd->add_option("--out", prop.out_path, "output moments file")->required();
  prop_cmd->add_option("--trace", prop.trace_path, "write per-layer snapshots here");
  prop_cmd->add_option("--order", prop.order)->capture_default_str();
  prop_cmd->add_option("--psd", prop.psd, "none|symmetrize|clip")->capture_default_str();
  prop_cmd->add_flag("--json", prop.json);

  TightnessArgs tight;
  auto* tight_cmd = app.add_subcommand("tightness", "MC-vs-analytic ratio experiment");
  tight_cmd->add_option("--preset", tight.preset, "fc4|fc8|cnn4|cnn8");
  tight_cmd->add_option("--net", tight.net_path, "network file (alternative to --preset)");
  tight_cmd->add_option("--trials", tight.trials)->capture_default_str();
  tight_cmd->add_option("--samples", tight.samples)->capture_default_str();
  tight_cmd->add_option("--seed", tight.seed)->capture_default_str();
  tight_cmd->add_option("--order", tight.order)->capture_default_str();
  tight_cmd->add_flag("--paper-scale", tight.paper_scale,
                      "200 trials x 75000 samples unless overridden");
  tight_cmd->add_option("--csv", tight.csv, "per-output report CSV");
  tight_cmd->add_option("--json-out", tight.json_out, "per-output report JSON");
  tight_cmd->add_flag("--json", tight.json);

  try {
    app.parse(argc, argv);
    if (cov_cmd->parsed()) return run_cov(cov);
    if (grid_cmd->parsed()) return run_error_grid(grid);
    if (gen_cmd->parsed()) return run_gen_net(gen);
    if (genm_cmd->parsed()) return run_gen_moments(genm);
    if (prop_cmd->parsed()) return run_propagate(prop);
    if (tight_cmd->parsed()) return run_tightness(tight, tight_cmd);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const CommandFailure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  }
  return 2;
}
