#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "momentflow/momentflow.h"

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "momentflow-capi";
  fs::create_directories(dir);
  return dir / name;
}

constexpr mf_activation kRelu{MF_ACT_RELU, 0.0};
constexpr mf_activation kHeaviside{MF_ACT_HEAVISIDE, 0.0};

}  // namespace

TEST_CASE("version and defaults") {
  CHECK(std::strlen(mf_version()) > 0);
  const mf_series_config series = mf_series_config_default();
  CHECK(series.order == 4);
  CHECK(series.psd_policy == MF_PSD_SYMMETRIZE);
  const mf_quad_config quad = mf_quad_config_default();
  CHECK(quad.scheme == MF_QUAD_GAUSS_HERMITE_SPLIT);
}

TEST_CASE("scalar statistics through the C surface") {
  double v = 0.0;
  CHECK(mf_activation_mean(kRelu, 0.0, 1.0, &v) == MF_OK);
  CHECK(v == doctest::Approx(0.39894228040143268));
  const mf_series_config series = mf_series_config_default();
  CHECK(mf_activation_variance(kHeaviside, 0.0, 1.0, &series, &v) == MF_OK);
  CHECK(v == doctest::Approx(0.25));
  CHECK(mf_derivative_term(kRelu, 0.0, 1.0, 2, &v) == MF_OK);
  CHECK(v == doctest::Approx(0.39894228040143268));

  mf_series_config k12 = series;
  k12.order = 12;
  CHECK(mf_pair_covariance(kHeaviside, kHeaviside, 0, 0, 1, 1, 0.5, &k12, &v) == MF_OK);
  CHECK(std::fabs(v - 1.0 / 12.0) <= 2e-4);

  const mf_quad_config quad = mf_quad_config_default();
  double cross = 0.0, cov = 0.0;
  CHECK(mf_quad_cross_moment(kRelu, kRelu, 0, 0, 1, 1, 0.5, &quad, &cross, &cov) == MF_OK);
  CHECK(std::fabs(cov - 0.14534394743021934) <= 1e-5);
}

TEST_CASE("domain errors carry codes and messages") {
  double v = 0.0;
  CHECK(mf_activation_mean(kRelu, 0.0, -1.0, &v) == MF_ERR_DOMAIN);
  CHECK(std::strlen(mf_last_error()) > 0);
  const mf_series_config series = mf_series_config_default();
  CHECK(mf_pair_covariance(kRelu, kRelu, 0, 0, 1, 1, 1.5, &series, &v) == MF_ERR_DOMAIN);
  CHECK(mf_activation_mean(kRelu, 0.0, 1.0, nullptr) == MF_ERR_INVALID_ARGUMENT);
  mf_activation bogus{static_cast<mf_activation_kind>(42), 0.0};
  CHECK(mf_activation_mean(bogus, 0.0, 1.0, &v) == MF_ERR_INVALID_ARGUMENT);
  // sigmoid order cap surfaces as unsupported
  mf_activation sigmoid{MF_ACT_SIGMOID, 0.0};
  CHECK(mf_derivative_term(sigmoid, 0.0, 1.0, 6, &v) == MF_ERR_UNSUPPORTED);
}

TEST_CASE("moments handle lifecycle") {
  const std::vector<double> mean{1.0, -1.0};
  const std::vector<double> cov{1.0, 0.2, 0.2, 2.0};
  mf_moments* m = nullptr;
  REQUIRE(mf_moments_create(2, mean.data(), cov.data(), &m) == MF_OK);
  CHECK(mf_moments_dim(m) == 2);
  std::vector<double> mean_out(2), cov_out(4);
  CHECK(mf_moments_get(m, mean_out.data(), cov_out.data()) == MF_OK);
  CHECK(mean_out == mean);
  CHECK(cov_out == cov);

  const fs::path path = temp_file("m.mfmom");
  CHECK(mf_moments_save(m, path.string().c_str()) == MF_OK);
  mf_moments* loaded = nullptr;
  REQUIRE(mf_moments_load(path.string().c_str(), &loaded) == MF_OK);
  CHECK(mf_moments_dim(loaded) == 2);
  mf_moments_free(loaded);
  mf_moments_free(m);

  // asymmetric covariance is rejected
  const std::vector<double> bad_cov{1.0, 0.5, 0.1, 2.0};
  mf_moments* bad = nullptr;
  CHECK(mf_moments_create(2, mean.data(), bad_cov.data(), &bad) ==
        MF_ERR_INVALID_ARGUMENT);
  CHECK(bad == nullptr);
}

TEST_CASE("network synthesis, io and propagation through the C surface") {
  mf_network* net = nullptr;
  REQUIRE(mf_network_synthesize_fc(4, 16, 0, kRelu, 7, &net) == MF_OK);
  CHECK(mf_network_input_dim(net) == 16);
  CHECK(mf_network_output_dim(net) == 1);
  CHECK(mf_network_layer_count(net) == 7);

  char* json = nullptr;
  REQUIRE(mf_network_validate(net, &json) == MF_OK);
  CHECK(std::string(json) == "[]");
  mf_string_free(json);
  REQUIRE(mf_network_describe(net, &json) == MF_OK);
  CHECK(std::string(json).find("\"dense\"") != std::string::npos);
  mf_string_free(json);

  const fs::path path = temp_file("net.mfnet");
  CHECK(mf_network_save(net, path.string().c_str()) == MF_OK);
  mf_network* loaded = nullptr;
  REQUIRE(mf_network_load(path.string().c_str(), &loaded) == MF_OK);
  CHECK(mf_network_input_dim(loaded) == 16);

  mf_moments* input = nullptr;
  REQUIRE(mf_moments_random(16, 3, 1.0, &input) == MF_OK);
  const mf_series_config series = mf_series_config_default();
  mf_moments* out = nullptr;
  REQUIRE(mf_propagate(loaded, input, &series, &out) == MF_OK);
  CHECK(mf_moments_dim(out) == 1);

  mf_mc_config mc = mf_mc_config_default();
  mc.samples = 20000;
  mc.seed = 5;
  mf_moments* est = nullptr;
  double se = 0.0;
  REQUIRE(mf_mc_propagate(loaded, input, &mc, &est, &se) == MF_OK);
  double mc_mean = 0.0, analytic_mean = 0.0;
  CHECK(mf_moments_get(est, &mc_mean, nullptr) == MF_OK);
  CHECK(mf_moments_get(out, &analytic_mean, nullptr) == MF_OK);
  CHECK(std::fabs(mc_mean - analytic_mean) <= 6.0 * se);

  mf_moments_free(est);
  mf_moments_free(out);
  mf_moments_free(input);
  mf_network_free(loaded);
  mf_network_free(net);
}

TEST_CASE("file errors map to distinct statuses") {
  mf_network* net = nullptr;
  CHECK(mf_network_load("/nonexistent/x.mfnet", &net) == MF_ERR_IO);
  CHECK(net == nullptr);

  // a moments file is not a network file
  mf_moments* m = nullptr;
  REQUIRE(mf_moments_random(3, 1, 1.0, &m) == MF_OK);
  const fs::path path = temp_file("not-a-net.mfmom");
  REQUIRE(mf_moments_save(m, path.string().c_str()) == MF_OK);
  mf_moments_free(m);
  CHECK(mf_network_load(path.string().c_str(), &net) == MF_ERR_VERSION);
}

TEST_CASE("error grid through the C surface") {
  mf_error_grid_spec spec{};
  spec.act = kRelu;
  spec.mu_min = -2.0;
  spec.mu_max = 2.0;
  spec.mu_step = 0.5;
  spec.sigma_i = spec.sigma_j = 1.0;
  spec.rho = 0.5;
  const int orders[2] = {1, 4};
  spec.orders = orders;
  spec.n_orders = 2;
  spec.quad = mf_quad_config_default();
  spec.quad.nodes_per_axis = 24;
  double max_err[2], mean_err[2];
  REQUIRE(mf_error_grid(&spec, max_err, mean_err) == MF_OK);
  CHECK(max_err[0] > max_err[1]);  // order 4 beats order 1
  CHECK(max_err[0] >= mean_err[0]);
  CHECK(max_err[1] <= 5e-4);
}

TEST_CASE("tightness through the C surface") {
  mf_network* net = nullptr;
  REQUIRE(mf_network_synthesize_fc(2, 8, 0, kRelu, 11, &net) == MF_OK);
  mf_tightness_spec spec{};
  spec.trials = 4;
  spec.mc = mf_mc_config_default();
  spec.mc.samples = 10000;
  spec.mc.seed = 21;
  spec.series = mf_series_config_default();
  spec.input_seed = 22;
  spec.max_variance = 1.0;
  const fs::path csv = temp_file("tight.csv");
  const std::string csv_str = csv.string();
  spec.csv_path = csv_str.c_str();
  mf_tightness_output out{};
  REQUIRE(mf_tightness(net, &spec, &out) == MF_OK);
  CHECK(std::fabs(out.q_mu_mean - 1.0) < 0.5);
  CHECK(fs::exists(csv));
  mf_network_free(net);
}
