#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/common.hpp"
#include "core/container_io.hpp"
#include "core/propagation.hpp"
#include "core/rng.hpp"

using namespace momentflow;
namespace fs = std::filesystem;

namespace {

NetworkSpec identity_network(int dim, int layers) {
  NetworkSpec net;
  net.input_dim = dim;
  for (int i = 0; i < layers; ++i) {
    DenseLayer d;
    d.W = Eigen::MatrixXd::Identity(dim, dim);
    d.b = Eigen::VectorXd::Zero(dim);
    net.layers.emplace_back(std::move(d));
    net.layers.emplace_back(ActivationLayer{ActivationKind::identity()});
  }
  return net;
}

GaussianMoments random_input(int n, std::uint64_t seed) {
  GaussianMoments m;
  Rng rng(seed);
  m.mean.resize(n);
  for (int i = 0; i < n; ++i) m.mean(i) = rng.normal();
  m.cov = random_covariance({seed ^ 0xabcdULL, n, 1.0});
  return m;
}

}  // namespace

TEST_CASE("identity network returns the input") {
  const NetworkSpec net = identity_network(4, 3);
  const GaussianMoments in = random_input(4, 5);
  const GaussianMoments out = propagate(net, in, SeriesConfig{});
  CHECK((out.mean - in.mean).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((out.cov - in.cov).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("single relu layer anchor: y = 2x + 1") {
  NetworkSpec net;
  net.input_dim = 1;
  DenseLayer d;
  d.W = Eigen::MatrixXd::Constant(1, 1, 2.0);
  d.b = Eigen::VectorXd::Constant(1, 1.0);
  net.layers.emplace_back(std::move(d));
  net.layers.emplace_back(ActivationLayer{ActivationKind::relu()});

  GaussianMoments in;
  in.mean = Eigen::VectorXd::Zero(1);
  in.cov = Eigen::MatrixXd::Identity(1, 1);

  PropagationTrace trace;
  const GaussianMoments out = propagate(net, in, SeriesConfig{}, &trace);
  // pre-activation N(1, 4); mean = 1 Phi(0.5) + 2 phi(0.5)
  CHECK(out.mean(0) == doctest::Approx(1.3955931148026121).epsilon(1e-10));
  REQUIRE(trace.snapshots.size() == 3);
  CHECK(trace.snapshots[1].mean(0) == doctest::Approx(1.0));
  CHECK(trace.snapshots[1].cov(0, 0) == doctest::Approx(4.0));
  CHECK(trace.layers[1].series_order == 4);
}

TEST_CASE("propagate validates the network and the input") {
  NetworkSpec bad;
  bad.input_dim = 2;
  DenseLayer d;
  d.W = Eigen::MatrixXd::Ones(2, 3);  // wrong input dim
  d.b = Eigen::VectorXd::Zero(2);
  bad.layers.emplace_back(std::move(d));
  GaussianMoments in = random_input(2, 3);
  CHECK_THROWS_AS(propagate(bad, in, SeriesConfig{}), Error);

  const NetworkSpec net = identity_network(3, 1);
  CHECK_THROWS_AS(propagate(net, random_input(2, 3), SeriesConfig{}), Error);
}

TEST_CASE("trace suffix re-propagation reproduces the output") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 3;
  cfg.width = 12;
  cfg.seed = 31;
  const NetworkSpec net = synthesize(cfg);
  const GaussianMoments in = random_input(12, 77);
  PropagationTrace trace;
  const GaussianMoments out = propagate(net, in, SeriesConfig{}, &trace);
  REQUIRE(trace.snapshots.size() == net.layers.size() + 1);
  for (std::size_t resume = 1; resume < trace.snapshots.size(); ++resume) {
    const GaussianMoments replay =
        propagate(net, trace.snapshots[resume], SeriesConfig{}, nullptr, resume);
    CHECK((replay.mean - out.mean).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((replay.cov - out.cov).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("keep_trace does not change the result") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 4;
  cfg.width = 10;
  cfg.seed = 8;
  const NetworkSpec net = synthesize(cfg);
  const GaussianMoments in = random_input(10, 11);
  PropagationTrace trace;
  const GaussianMoments with_trace = propagate(net, in, SeriesConfig{}, &trace);
  const GaussianMoments without = propagate(net, in, SeriesConfig{});
  CHECK((with_trace.mean - without.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((with_trace.cov - without.cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariance scaling is exact through affine-only networks") {
  NetworkSpec net;
  net.input_dim = 3;
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    DenseLayer d;
    d.W.resize(3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) d.W(r, c) = rng.normal();
    d.b = Eigen::VectorXd::Zero(3);
    net.layers.emplace_back(std::move(d));
  }
  GaussianMoments in = random_input(3, 21);
  const double c2 = 3.7;
  GaussianMoments scaled = in;
  scaled.cov *= c2;
  const GaussianMoments out = propagate(net, in, SeriesConfig{});
  const GaussianMoments out_scaled = propagate(net, scaled, SeriesConfig{});
  CHECK((out_scaled.cov - c2 * out.cov).cwiseAbs().maxCoeff() <=
        1e-12 * out.cov.cwiseAbs().maxCoeff() * c2);
}

TEST_CASE("conv network propagates and matches MC loosely") {
  SynthConfig cfg;
  cfg.family = Family::cnn;
  cfg.depth = 2;
  cfg.channels = 2;
  cfg.input = {5, 5, 1};
  cfg.seed = 13;
  const NetworkSpec net = synthesize(cfg);
  const GaussianMoments in = random_input(25, 3);
  const GaussianMoments out = propagate(net, in, SeriesConfig{});
  CHECK(out.dim() == 1);

  McConfig mc;
  mc.samples = 60000;
  mc.seed = 5;
  const MomentEstimate est = mc_propagate(net, in, mc);
  CHECK(std::fabs(est.mean(0) - out.mean(0)) <= 6.0 * est.standard_error(0));
  CHECK(est.variance(0) == doctest::Approx(out.cov(0, 0)).epsilon(0.1));
}

TEST_CASE("trace round trip through the trace container") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 2;
  cfg.width = 5;
  cfg.seed = 2;
  const NetworkSpec net = synthesize(cfg);
  PropagationTrace trace;
  propagate(net, random_input(5, 1), SeriesConfig{}, &trace);
  const fs::path path = fs::temp_directory_path() / "momentflow-tests" / "trace.mftrace";
  fs::create_directories(path.parent_path());
  save_trace(trace, path);
  const PropagationTrace loaded = load_trace(path);
  REQUIRE(loaded.snapshots.size() == trace.snapshots.size());
  for (std::size_t i = 0; i < trace.snapshots.size(); ++i) {
    CHECK((loaded.snapshots[i].mean - trace.snapshots[i].mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.snapshots[i].cov - trace.snapshots[i].cov).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(loaded.layers.size() == trace.layers.size());
  CHECK(loaded.layers[1].layer_type == trace.layers[1].layer_type);
}

TEST_CASE("tightness ratios are exactly one against itself") {
  // feed the aggregation the analytic results as the 'MC' estimates
  std::vector<TrialMoments> trials(3);
  Rng rng(9);
  for (auto& t : trials) {
    t.analytic_mean = Eigen::VectorXd::Zero(2);
    t.analytic_var = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < 2; ++i) {
      t.analytic_mean(i) = rng.normal() + 2.0;
      t.analytic_var(i) = std::fabs(rng.normal()) + 0.5;
    }
    t.mc_mean = t.analytic_mean;
    t.mc_var = t.analytic_var;
  }
  const TightnessReport report = aggregate_tightness(trials, 1e-12);
  for (const auto& o : report.outputs) {
    CHECK(o.q_mu_mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(o.q_mu_std == doctest::Approx(0.0));
    CHECK(o.q_var_mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(o.excluded_mu == 0);
  }
}

TEST_CASE("tightness excludes near-zero analytic denominators") {
  std::vector<TrialMoments> trials(3);
  for (std::size_t i = 0; i < 3; ++i) {
    auto& t = trials[i];
    t.analytic_mean = Eigen::VectorXd::Constant(1, i == 1 ? 1e-15 : 1.0);
    t.analytic_var = Eigen::VectorXd::Constant(1, 1.0);
    t.mc_mean = Eigen::VectorXd::Constant(1, 1.0);
    t.mc_var = Eigen::VectorXd::Constant(1, 1.0);
  }
  const TightnessReport report = aggregate_tightness(trials, 1e-12);
  CHECK(report.outputs[0].excluded_mu == 1);
  CHECK(report.outputs[0].excluded_var == 0);
  CHECK(report.outputs[0].q_mu_mean == doctest::Approx(1.0));
}

TEST_CASE("identity-network tightness converges to one") {
  const NetworkSpec net = identity_network(3, 1);
  TightnessConfig cfg;
  cfg.trials = 4;
  cfg.mc.samples = 40000;
  cfg.mc.seed = 17;
  cfg.input_seed = 99;
  const TightnessReport report = tightness(net, cfg);
  REQUIRE(report.outputs.size() == 3);
  for (const auto& o : report.outputs) {
    CHECK(std::fabs(o.q_mu_mean - 1.0) <= 0.15);
    CHECK(std::fabs(o.q_var_mean - 1.0) <= 0.05);
  }
}

TEST_CASE("tightness report files are deterministic") {
  const NetworkSpec net = identity_network(2, 1);
  TightnessConfig cfg;
  cfg.trials = 3;
  cfg.mc.samples = 5000;
  cfg.mc.seed = 1;
  cfg.input_seed = 2;
  const TightnessReport a = tightness(net, cfg);
  const TightnessReport b = tightness(net, cfg);
  for (std::size_t i = 0; i < a.outputs.size(); ++i) {
    CHECK(a.outputs[i].q_mu_mean == b.outputs[i].q_mu_mean);
    CHECK(a.outputs[i].q_var_mean == b.outputs[i].q_var_mean);
  }
  const fs::path dir = fs::temp_directory_path() / "momentflow-tests";
  fs::create_directories(dir);
  write_tightness_csv(a, dir / "tight-a.csv");
  write_tightness_csv(b, dir / "tight-b.csv");
  std::ifstream fa(dir / "tight-a.csv"), fb(dir / "tight-b.csv");
  const std::string ca((std::istreambuf_iterator<char>(fa)), {});
  const std::string cb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ca == cb);
  CHECK(ca.find("output_index,q_mu_mean,q_mu_std,q_var_mean,q_var_std,"
                "excluded_mu,excluded_var") == 0);
}
