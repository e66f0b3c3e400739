// End-to-end checks of the mfcli binary: exit codes, output files, JSON mode.

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "core/container_io.hpp"
#include "core/network.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "momentflow-cli";
  fs::create_directories(dir);
  static int counter = 0;
  const fs::path out_file = dir / ("stdout-" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(MFCLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2>/dev/null";
  const int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  result.stdout_text.assign(std::istreambuf_iterator<char>(in), {});
  return result;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "momentflow-cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("cov: rho 0 gives zero, json carries the schema") {
  const RunResult r =
      run_cli("cov --kind relu --mu 0 0 --sigma 1 1 --rho 0 --order 4 --json");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(j["schema"] == "momentflow-cli/1");
  CHECK(j["series_covariance"].get<double>() == 0.0);
}

TEST_CASE("cov: heaviside with oracle near 1/12") {
  const RunResult r = run_cli(
      "cov --kind heaviside --mu 0 0 --sigma 1 1 --rho 0.5 --order 12 --oracle --json");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(std::fabs(j["series_covariance"].get<double>() - 1.0 / 12.0) <= 2e-4);
  CHECK(std::fabs(j["oracle_covariance"].get<double>() - 1.0 / 12.0) <= 1e-6);
  CHECK(j["abs_error"].get<double>() <= 2e-4);
}

TEST_CASE("cov: domain errors exit 2") {
  CHECK(run_cli("cov --kind relu --mu 0 0 --sigma 1 1 --rho 1.5").exit_code == 2);
  CHECK(run_cli("cov --kind bogus --mu 0 0 --sigma 1 1 --rho 0.5").exit_code == 2);
  CHECK(run_cli("cov --kind relu --mu 0 0 --sigma -1 1 --rho 0.5").exit_code == 2);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("gen-net --family fc --depth 0 --out /tmp/x.mfnet").exit_code == 2);
  CHECK(run_cli("propagate --net only").exit_code == 2);
}

TEST_CASE("gen-net is deterministic and loadable") {
  const fs::path a = temp_file("gen-a.mfnet");
  const fs::path b = temp_file("gen-b.mfnet");
  const std::string flags = "gen-net --family fc --depth 4 --seed 7 --out ";
  CHECK(run_cli(flags + a.string()).exit_code == 0);
  CHECK(run_cli(flags + b.string()).exit_code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(!slurp(a).empty());

  const RunResult json_run =
      run_cli("gen-net --family cnn --depth 2 --channels 3 --input-shape 6 6 1 "
              "--seed 1 --out " + temp_file("gen-cnn.mfnet").string() + " --json");
  CHECK(json_run.exit_code == 0);
  const auto j = nlohmann::json::parse(json_run.stdout_text);
  CHECK(j["network"]["input_dim"] == 36);
}

TEST_CASE("propagate: identity net reproduces the input moments") {
  const fs::path net = temp_file("ident.mfnet");
  const fs::path in = temp_file("in.mfmom");
  const fs::path out = temp_file("out.mfmom");
  // depth-1 FC is a single dense layer; identity activation keeps moments
  // only if the weights are identity, so use gen-moments + a real net and
  // check determinism instead, then a true identity check via moments reuse.
  CHECK(run_cli("gen-moments --dim 12 --seed 5 --out " + in.string()).exit_code == 0);
  CHECK(run_cli("gen-net --family fc --depth 2 --width 12 --seed 3 --out " +
                net.string()).exit_code == 0);
  CHECK(run_cli("propagate --net " + net.string() + " --in " + in.string() +
                " --out " + out.string()).exit_code == 0);
  CHECK(fs::exists(out));

  // byte-identical output across repeated runs
  const fs::path out2 = temp_file("out2.mfmom");
  CHECK(run_cli("propagate --net " + net.string() + " --in " + in.string() +
                " --out " + out2.string()).exit_code == 0);
  CHECK(slurp(out) == slurp(out2));

  // trace file written on request
  const fs::path trace = temp_file("out.mftrace");
  CHECK(run_cli("propagate --net " + net.string() + " --in " + in.string() +
                " --out " + out.string() + " --trace " + trace.string()).exit_code == 0);
  CHECK(fs::exists(trace));
}

TEST_CASE("propagate: missing files exit 3") {
  const fs::path in = temp_file("exists.mfmom");
  CHECK(run_cli("gen-moments --dim 4 --seed 1 --out " + in.string()).exit_code == 0);
  CHECK(run_cli("propagate --net /nonexistent.mfnet --in " + in.string() +
                " --out /tmp/x.mfmom").exit_code == 3);
  // wrong schema: feeding a moments file as the network
  CHECK(run_cli("propagate --net " + in.string() + " --in " + in.string() +
                " --out /tmp/x.mfmom").exit_code == 3);
}

TEST_CASE("error-grid emits per-order stats and a csv matrix") {
  const fs::path csv = temp_file("grid.csv");
  const RunResult r = run_cli(
      "error-grid --kind relu --mu-min -2 --mu-max 2 --mu-step 0.5 --rho 0.5 "
      "--orders 1,4 --nodes 24 --csv " + csv.string() + " --json");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  REQUIRE(j["results"].size() == 2);
  CHECK(j["results"][0]["order"] == 1);
  CHECK(j["results"][0]["max_abs_error"].get<double>() >
        j["results"][1]["max_abs_error"].get<double>());
  const std::string matrix = slurp(csv);
  CHECK(matrix.find("order,mu_i,mu_j,oracle_cov,series_cov,abs_error") == 0);
}

TEST_CASE("tightness: preset metadata lands in the json report") {
  const fs::path report = temp_file("tight.json");
  const fs::path csv = temp_file("tight.csv");
  const RunResult r = run_cli(
      "tightness --preset fc4 --trials 2 --samples 2000 --seed 9 --json-out " +
      report.string() + " --csv " + csv.string() + " --json");
  CHECK(r.exit_code == 0);
  const auto summary = nlohmann::json::parse(r.stdout_text);
  CHECK(summary["trials"] == 2);
  CHECK(summary["samples"] == 2000);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j["schema"] == "momentflow-tightness/1");
  CHECK(j["network"] == "fc4");
  CHECK(j["outputs"].size() == 1);

  // bit-identical reports on rerun
  const fs::path report2 = temp_file("tight2.json");
  const RunResult r2 = run_cli(
      "tightness --preset fc4 --trials 2 --samples 2000 --seed 9 --json-out " +
      report2.string() + " --csv " + csv.string() + " --json");
  CHECK(r2.exit_code == 0);
  CHECK(slurp(report) == slurp(report2));
  CHECK(run_cli("tightness --preset nope --trials 2").exit_code == 2);
  CHECK(run_cli("tightness --trials 2").exit_code == 2);
}

TEST_CASE("propagate through an identity network reproduces the input") {
  using namespace momentflow;
  NetworkSpec net;
  net.input_dim = 4;
  DenseLayer d;
  d.W = Eigen::MatrixXd::Identity(4, 4);
  d.b = Eigen::VectorXd::Zero(4);
  net.layers.emplace_back(std::move(d));
  net.layers.emplace_back(ActivationLayer{ActivationKind::identity()});
  const fs::path net_path = temp_file("true-ident.mfnet");
  save_network(net, net_path);

  const fs::path in = temp_file("ident-in.mfmom");
  const fs::path out = temp_file("ident-out.mfmom");
  CHECK(run_cli("gen-moments --dim 4 --seed 2 --out " + in.string()).exit_code == 0);
  CHECK(run_cli("propagate --net " + net_path.string() + " --in " + in.string() +
                " --out " + out.string()).exit_code == 0);
  const GaussianMoments a = load_moments(in);
  const GaussianMoments b = load_moments(out);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("paper-scale flag only fills unset values") {
  // explicit trials/samples win over the paper-scale defaults
  const RunResult r = run_cli(
      "tightness --preset fc4 --paper-scale --trials 2 --samples 1000 --seed 3 --json");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(j["trials"] == 2);
  CHECK(j["samples"] == 1000);
}

TEST_CASE("cov --csv writes the oracle record") {
  const fs::path csv = temp_file("cov.csv");
  CHECK(run_cli("cov --kind relu --mu 0 0 --sigma 1 1 --rho 0.5 --order 4 --csv " +
                csv.string()).exit_code == 0);
  const std::string body = slurp(csv);
  CHECK(body.find("kind_a,kind_b,mu_i,mu_j,sigma_i,sigma_j,rho,cross_moment,"
                  "covariance") == 0);
  CHECK(body.find("relu,relu,") != std::string::npos);
}

TEST_CASE("--version prints") {
  const RunResult r = run_cli("--version");
  CHECK(r.exit_code == 0);
  CHECK(!r.stdout_text.empty());
}
