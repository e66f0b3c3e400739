#include "core/container_io.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "core/common.hpp"

namespace momentflow {

namespace {

constexpr std::uint64_t kCrcPoly = 0xC96C5795D7870F42ULL;  // reflected ECMA-182

const std::array<std::uint64_t, 256>& crc_table() {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t crc = i;
      for (int bit = 0; bit < 8; ++bit) {
        crc = (crc & 1) ? (crc >> 1) ^ kCrcPoly : crc >> 1;
      }
      t[i] = crc;
    }
    return t;
  }();
  return table;
}

void put_u64_le(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
}

std::uint64_t get_u64_le(std::span<const std::byte> in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  }
  return v;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::uint64_t parse_hex64(const std::string& s) {
  require(s.size() == 16, Status::format_error, "bad checksum field");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else fail(Status::format_error, "bad checksum field");
  }
  return v;
}

}  // namespace

std::uint64_t crc64(std::span<const std::byte> data) {
  const auto& table = crc_table();
  std::uint64_t crc = ~0ULL;
  for (std::byte b : data) {
    crc = table[(crc ^ std::to_integer<std::uint64_t>(b)) & 0xff] ^ (crc >> 8);
  }
  return ~crc;
}

std::uint64_t Container::append(std::span<const double> values) {
  const std::uint64_t offset = blob.size();
  blob.reserve(blob.size() + values.size() * 8);
  for (double v : values) {
    put_u64_le(blob, std::bit_cast<std::uint64_t>(v));
  }
  return offset;
}

std::vector<double> Container::read(std::uint64_t offset, std::size_t count) const {
  require(offset % 8 == 0, Status::shape_error, "tensor offset not 8-byte aligned");
  require(offset + count * 8 <= blob.size(), Status::shape_error,
          "tensor extends past end of blob");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits =
        get_u64_le(std::span<const std::byte>(blob).subspan(offset + i * 8, 8));
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void write_container(const std::filesystem::path& path, Container& container,
                     const std::string& schema) {
  container.manifest["schema"] = schema;
  container.manifest["dtype"] = "float64-le";
  container.manifest["blob_bytes"] = container.blob.size();
  container.manifest["blob_crc64"] = hex64(crc64(container.blob));
  const std::string manifest = container.manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Status::io_error, "cannot open '" + path.string() + "' for writing");
  std::vector<std::byte> header;
  put_u64_le(header, manifest.size());
  out.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  if (!container.blob.empty()) {
    out.write(reinterpret_cast<const char*>(container.blob.data()),
              static_cast<std::streamsize>(container.blob.size()));
  }
  out.flush();
  require(out.good(), Status::io_error, "failed writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path,
                         const std::string& expected_schema) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Status::io_error, "cannot open '" + path.string() + "'");
  std::vector<std::byte> bytes;
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  require(size >= 8, Status::format_error, "file too small to be a container");
  bytes.resize(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  require(in.good(), Status::io_error, "failed reading '" + path.string() + "'");

  const std::uint64_t manifest_len = get_u64_le(bytes);
  require(8 + manifest_len <= bytes.size(), Status::format_error,
          "manifest length exceeds file size");
  Container c;
  try {
    c.manifest = nlohmann::json::parse(bytes.begin() + 8,
                                       bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Status::format_error, std::string("manifest is not valid JSON: ") + e.what());
  }
  require(c.manifest.contains("schema") && c.manifest["schema"].is_string(),
          Status::format_error, "manifest missing schema");
  const std::string schema = c.manifest["schema"];
  require(schema == expected_schema, Status::version_mismatch,
          "expected schema '" + expected_schema + "', file has '" + schema + "'");

  c.blob.assign(bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len), bytes.end());
  const std::uint64_t declared_bytes = c.manifest.value("blob_bytes", std::uint64_t{0});
  require(declared_bytes == c.blob.size(), Status::checksum_mismatch,
          "blob is " + std::to_string(c.blob.size()) + " bytes, manifest declares " +
              std::to_string(declared_bytes));
  const std::uint64_t declared_crc = parse_hex64(c.manifest.value("blob_crc64", std::string()));
  const std::uint64_t actual_crc = crc64(c.blob);
  require(declared_crc == actual_crc, Status::checksum_mismatch,
          "blob checksum mismatch (expected " + hex64(declared_crc) + ", got " +
              hex64(actual_crc) + ")");
  return c;
}

namespace {

nlohmann::json shape_json(const ConvShape& s) {
  return nlohmann::json::array({s.h, s.w, s.c});
}

ConvShape shape_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 3, Status::format_error, "bad shape field");
  return ConvShape{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

void save_network(const NetworkSpec& net, const std::filesystem::path& path) {
  Container c;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    nlohmann::json entry;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      entry["type"] = "dense";
      entry["out"] = d->W.rows();
      entry["in"] = d->W.cols();
      // row-major on disk
      std::vector<double> w(static_cast<std::size_t>(d->W.size()));
      for (Eigen::Index i = 0; i < d->W.rows(); ++i)
        for (Eigen::Index j = 0; j < d->W.cols(); ++j)
          w[static_cast<std::size_t>(i * d->W.cols() + j)] = d->W(i, j);
      entry["w_offset"] = c.append(w);
      std::vector<double> b(d->b.data(), d->b.data() + d->b.size());
      entry["b_offset"] = c.append(b);
    } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
      const auto& k = conv->kernel;
      entry["type"] = "conv2d";
      entry["out_ch"] = k.out_ch;
      entry["in_ch"] = k.in_ch;
      entry["kh"] = k.kh;
      entry["kw"] = k.kw;
      entry["stride"] = k.stride;
      entry["padding"] = k.padding == Padding::same ? "same" : "valid";
      entry["input_shape"] = shape_json(k.input_shape);
      entry["k_offset"] = c.append(k.weights);
      std::vector<double> b(k.bias.data(), k.bias.data() + k.bias.size());
      entry["b_offset"] = c.append(b);
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      entry["type"] = "activation";
      entry["kind"] = a->kind.name();
      if (a->kind.tag == ActivationKind::Tag::sigmoid_approx) {
        entry["alpha"] = a->kind.alpha;
      }
    } else if (const auto* f = std::get_if<FlattenLayer>(&layer)) {
      entry["type"] = "flatten";
      entry["input_shape"] = shape_json(f->input_shape);
    }
    layers.push_back(std::move(entry));
  }
  c.manifest["input_dim"] = net.input_dim;
  c.manifest["output_dim"] = net.output_dim();
  c.manifest["layers"] = std::move(layers);
  nlohmann::json meta;
  meta["name"] = net.metadata.name;
  meta["seed"] = net.metadata.seed;
  if (!net.metadata.family.empty()) {
    meta["family"] = net.metadata.family;
    meta["depth"] = net.metadata.depth;
    if (net.metadata.width > 0) meta["width"] = net.metadata.width;
    if (net.metadata.channels > 0) meta["channels"] = net.metadata.channels;
  }
  c.manifest["metadata"] = std::move(meta);
  write_container(path, c, kNetworkSchema);
}

NetworkSpec load_network(const std::filesystem::path& path) {
  Container c = read_container(path, kNetworkSchema);
  NetworkSpec net;
  require(c.manifest.contains("input_dim"), Status::format_error,
          "network manifest missing input_dim");
  net.input_dim = c.manifest["input_dim"].get<int>();
  const auto& meta = c.manifest.value("metadata", nlohmann::json::object());
  net.metadata.name = meta.value("name", std::string());
  net.metadata.seed = meta.value("seed", std::uint64_t{0});
  net.metadata.family = meta.value("family", std::string());
  net.metadata.depth = meta.value("depth", 0);
  net.metadata.width = meta.value("width", 0);
  net.metadata.channels = meta.value("channels", 0);

  require(c.manifest.contains("layers") && c.manifest["layers"].is_array(),
          Status::format_error, "network manifest missing layers");
  for (const auto& entry : c.manifest["layers"]) {
    const std::string type = entry.value("type", std::string("?"));
    if (type == "dense") {
      const int rows = entry["out"].get<int>();
      const int cols = entry["in"].get<int>();
      require(rows > 0 && cols > 0, Status::shape_error, "dense dims must be positive");
      const auto w = c.read(entry["w_offset"].get<std::uint64_t>(),
                            static_cast<std::size_t>(rows) * cols);
      const auto b = c.read(entry["b_offset"].get<std::uint64_t>(),
                            static_cast<std::size_t>(rows));
      DenseLayer d;
      d.W.resize(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          d.W(i, j) = w[static_cast<std::size_t>(i) * cols + j];
      d.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
      net.layers.emplace_back(std::move(d));
    } else if (type == "conv2d") {
      Conv2dLayer conv;
      auto& k = conv.kernel;
      k.out_ch = entry["out_ch"].get<int>();
      k.in_ch = entry["in_ch"].get<int>();
      k.kh = entry["kh"].get<int>();
      k.kw = entry["kw"].get<int>();
      k.stride = entry["stride"].get<int>();
      const std::string pad = entry["padding"].get<std::string>();
      require(pad == "same" || pad == "valid", Status::format_error,
              "unknown padding '" + pad + "'");
      k.padding = pad == "same" ? Padding::same : Padding::valid;
      k.input_shape = shape_from_json(entry["input_shape"]);
      require(k.out_ch > 0 && k.in_ch > 0 && k.kh > 0 && k.kw > 0 && k.stride > 0,
              Status::shape_error, "conv dims must be positive");
      k.weights = c.read(entry["k_offset"].get<std::uint64_t>(),
                         static_cast<std::size_t>(k.out_ch) * k.in_ch * k.kh * k.kw);
      const auto b = c.read(entry["b_offset"].get<std::uint64_t>(),
                            static_cast<std::size_t>(k.out_ch));
      k.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), k.out_ch);
      net.layers.emplace_back(std::move(conv));
    } else if (type == "activation") {
      const std::string kind = entry.value("kind", std::string("?"));
      const double alpha = entry.value("alpha", kDefaultSigmoidAlpha);
      net.layers.emplace_back(ActivationLayer{ActivationKind::parse(kind, alpha)});
    } else if (type == "flatten") {
      net.layers.emplace_back(FlattenLayer{shape_from_json(entry["input_shape"])});
    } else if (type.find("pool") != std::string::npos) {
      fail(Status::unsupported,
           "unsupported layer type '" + type +
               "': replace pooling layers with strided convolutions");
    } else {
      fail(Status::unsupported, "unsupported layer type '" + type + "'");
    }
  }
  return net;
}

void save_moments(const GaussianMoments& moments, const std::filesystem::path& path) {
  moments.validate();
  Container c;
  const int n = moments.dim();
  std::vector<double> mean(moments.mean.data(), moments.mean.data() + n);
  std::vector<double> cov(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cov[static_cast<std::size_t>(i) * n + j] = moments.cov(i, j);
  c.manifest["dim"] = n;
  c.manifest["mean_offset"] = c.append(mean);
  c.manifest["cov_offset"] = c.append(cov);
  write_container(path, c, kMomentsSchema);
}

GaussianMoments load_moments(const std::filesystem::path& path) {
  Container c = read_container(path, kMomentsSchema);
  require(c.manifest.contains("dim"), Status::format_error, "moments manifest missing dim");
  const int n = c.manifest["dim"].get<int>();
  require(n > 0, Status::shape_error, "moments dim must be positive");
  const auto mean = c.read(c.manifest["mean_offset"].get<std::uint64_t>(),
                           static_cast<std::size_t>(n));
  const auto cov = c.read(c.manifest["cov_offset"].get<std::uint64_t>(),
                          static_cast<std::size_t>(n) * n);
  GaussianMoments m;
  m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), n);
  m.cov.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m.cov(i, j) = cov[static_cast<std::size_t>(i) * n + j];
  m.validate();
  return m;
}

}  // namespace momentflow
