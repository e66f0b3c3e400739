#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "core/common.hpp"
#include "core/container_io.hpp"
#include "core/network.hpp"

using namespace momentflow;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "momentflow-tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("crc64 check vector") {
  const char* msg = "123456789";
  const std::uint64_t crc =
      crc64(std::as_bytes(std::span<const char>(msg, std::strlen(msg))));
  CHECK(crc == 0x995dc9bbdf1939faULL);
}

TEST_CASE("fc synthesis shapes and determinism") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 4;
  cfg.width = 100;
  cfg.seed = 7;
  const NetworkSpec net = synthesize(cfg);
  CHECK(net.input_dim == 100);
  CHECK(net.output_dim() == 1);
  // 4 dense layers with activations between: D A D A D A D
  CHECK(net.layers.size() == 7);
  int dense_count = 0;
  for (const auto& layer : net.layers) {
    if (std::holds_alternative<DenseLayer>(layer)) ++dense_count;
  }
  CHECK(dense_count == 4);
  CHECK(validate_network(net).empty());

  const fs::path a = temp_file("fc4-a.mfnet");
  const fs::path b = temp_file("fc4-b.mfnet");
  save_network(net, a);
  save_network(synthesize(cfg), b);
  CHECK(slurp(a) == slurp(b));  // same config, identical bytes

  SynthConfig small;
  small.family = Family::fc;
  small.depth = 1;
  small.width = 1;
  const NetworkSpec tiny = synthesize(small);
  CHECK(tiny.input_dim == 1);
  CHECK(tiny.layers.size() == 1);
  const auto& head = std::get<DenseLayer>(tiny.layers[0]);
  CHECK(head.W.rows() == 1);
  CHECK(head.W.cols() == 1);
}

TEST_CASE("cnn synthesis shapes") {
  SynthConfig cfg;
  cfg.family = Family::cnn;
  cfg.depth = 4;
  cfg.channels = 10;
  cfg.input = {20, 20, 1};
  cfg.seed = 3;
  const NetworkSpec net = synthesize(cfg);
  CHECK(net.input_dim == 400);
  CHECK(net.output_dim() == 1);
  CHECK(validate_network(net).empty());
  // 3 conv + 3 activations + flatten + dense head
  CHECK(net.layers.size() == 8);
  const auto& conv = std::get<Conv2dLayer>(net.layers[0]);
  CHECK(conv.kernel.out_ch == 10);
  CHECK(conv.kernel.output_shape().flat() == 4000);  // same padding keeps 20x20
}

TEST_CASE("kaiming weight statistic") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 2;
  cfg.width = 1024;
  cfg.seed = 11;
  const NetworkSpec net = synthesize(cfg);
  const auto& dense = std::get<DenseLayer>(net.layers[0]);
  const double mean = dense.W.mean();
  const double var = (dense.W.array() - mean).square().mean();
  const double expected = 2.0 / 1024.0;
  CHECK(std::fabs(var - expected) <= 0.05 * expected);
}

TEST_CASE("network save/load round trip is exact") {
  SynthConfig cfg;
  cfg.family = Family::cnn;
  cfg.depth = 3;
  cfg.channels = 2;
  cfg.input = {5, 5, 1};
  cfg.seed = 21;
  const NetworkSpec net = synthesize(cfg);
  const fs::path path = temp_file("roundtrip.mfnet");
  save_network(net, path);
  const NetworkSpec loaded = load_network(path);
  CHECK(loaded.input_dim == net.input_dim);
  CHECK(loaded.layers.size() == net.layers.size());
  CHECK(loaded.metadata.seed == net.metadata.seed);
  // bit-exact tensors
  const auto& k0 = std::get<Conv2dLayer>(net.layers[0]).kernel;
  const auto& k1 = std::get<Conv2dLayer>(loaded.layers[0]).kernel;
  CHECK(k0.weights == k1.weights);
  const auto& d0 = std::get<DenseLayer>(net.layers.back());
  const auto& d1 = std::get<DenseLayer>(loaded.layers.back());
  CHECK((d0.W - d1.W).cwiseAbs().maxCoeff() == 0.0);

  // saving the loaded network reproduces the same bytes
  const fs::path path2 = temp_file("roundtrip2.mfnet");
  save_network(loaded, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("truncated blob fails the checksum, not a crash") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 2;
  cfg.width = 4;
  const NetworkSpec net = synthesize(cfg);
  const fs::path path = temp_file("truncated.mfnet");
  save_network(net, path);
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 16);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_network(path);
    FAIL("expected a checksum error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::checksum_mismatch);
  }
}

TEST_CASE("corrupted blob bytes fail the checksum") {
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 2;
  cfg.width = 4;
  const NetworkSpec net = synthesize(cfg);
  const fs::path path = temp_file("corrupt.mfnet");
  save_network(net, path);
  auto bytes = slurp(path);
  bytes.back() = static_cast<char>(bytes.back() ^ 0x40);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_network(path);
    FAIL("expected a checksum error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::checksum_mismatch);
  }
}

TEST_CASE("unknown layer type is an explicit unsupported error") {
  Container c;
  c.manifest["input_dim"] = 4;
  c.manifest["layers"] = nlohmann::json::array({{{"type", "softmax"}}});
  const fs::path path = temp_file("softmax.mfnet");
  write_container(path, c, kNetworkSchema);
  try {
    load_network(path);
    FAIL("expected an unsupported-layer error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::unsupported);
    CHECK(std::string(e.what()).find("softmax") != std::string::npos);
  }
}

TEST_CASE("pooling layers point at the strided-convolution convention") {
  Container c;
  c.manifest["input_dim"] = 4;
  c.manifest["layers"] = nlohmann::json::array({{{"type", "maxpool2d"}}});
  const fs::path path = temp_file("pool.mfnet");
  write_container(path, c, kNetworkSchema);
  try {
    load_network(path);
    FAIL("expected an unsupported-layer error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::unsupported);
    CHECK(std::string(e.what()).find("strided convolutions") != std::string::npos);
  }
}

TEST_CASE("schema version mismatch is its own error") {
  Container c;
  c.manifest["dummy"] = 1;
  const fs::path path = temp_file("wrong-schema.bin");
  write_container(path, c, "momentflow-net/999");
  try {
    read_container(path, kNetworkSchema);
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::version_mismatch);
  }
  // moments schema opening a network file is also a version error
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 1;
  cfg.width = 2;
  const fs::path net_path = temp_file("netfile.mfnet");
  save_network(synthesize(cfg), net_path);
  try {
    load_moments(net_path);
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::version_mismatch);
  }
}

TEST_CASE("missing file is an io error") {
  try {
    load_network(temp_file("does-not-exist.mfnet"));
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::io_error);
  }
}

TEST_CASE("moments save/load round trip") {
  GaussianMoments m;
  m.mean = Eigen::Vector3d(0.5, -1.0, 2.0);
  m.cov.resize(3, 3);
  m.cov << 1.0, 0.2, 0.1, 0.2, 2.0, 0.0, 0.1, 0.0, 3.0;
  const fs::path path = temp_file("moments.mfmom");
  save_moments(m, path);
  const GaussianMoments loaded = load_moments(path);
  CHECK((loaded.mean - m.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.cov - m.cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validate reports structural problems") {
  NetworkSpec net;
  net.input_dim = 3;
  DenseLayer d1;
  d1.W = Eigen::MatrixXd::Ones(4, 3);
  d1.b = Eigen::VectorXd::Zero(4);
  DenseLayer d2;
  d2.W = Eigen::MatrixXd::Ones(2, 5);  // expects 5, receives 4
  d2.b = Eigen::VectorXd::Zero(2);
  net.layers.emplace_back(std::move(d1));
  net.layers.emplace_back(std::move(d2));
  auto diags = validate_network(net);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].layer_index == 1);
  CHECK(diags[0].code == "dimension-mismatch");

  // NaN weight
  NetworkSpec bad;
  bad.input_dim = 2;
  DenseLayer d;
  d.W = Eigen::MatrixXd::Ones(2, 2);
  d.W(0, 1) = std::numeric_limits<double>::quiet_NaN();
  d.b = Eigen::VectorXd::Zero(2);
  bad.layers.emplace_back(std::move(d));
  diags = validate_network(bad);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].code == "non-finite");
  CHECK(diags[0].layer_index == 0);

  // a well-formed network reports nothing
  SynthConfig cfg;
  cfg.family = Family::fc;
  cfg.depth = 3;
  cfg.width = 8;
  CHECK(validate_network(synthesize(cfg)).empty());
}
