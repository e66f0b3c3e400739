#include "core/network.hpp"

#include <cmath>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace momentflow {

namespace {

int layer_out_dim(const LayerSpec& layer, int in_dim) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    return static_cast<int>(d->W.rows());
  }
  if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
    return c->kernel.output_shape().flat();
  }
  if (const auto* f = std::get_if<FlattenLayer>(&layer)) {
    return f->input_shape.flat();
  }
  return in_dim;  // activation
}

int layer_in_dim(const LayerSpec& layer, int prev_dim) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    return static_cast<int>(d->W.cols());
  }
  if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
    return c->kernel.input_shape.flat();
  }
  if (const auto* f = std::get_if<FlattenLayer>(&layer)) {
    return f->input_shape.flat();
  }
  return prev_dim;  // activation accepts anything
}

}  // namespace

int NetworkSpec::output_dim() const {
  int dim = input_dim;
  for (const auto& layer : layers) dim = layer_out_dim(layer, dim);
  return dim;
}

int NetworkSpec::layer_output_dim(std::size_t layer_index) const {
  require(layer_index < layers.size(), Status::invalid_argument,
          "layer index out of range");
  int dim = input_dim;
  for (std::size_t i = 0; i <= layer_index; ++i) dim = layer_out_dim(layers[i], dim);
  return dim;
}

namespace {

Eigen::MatrixXd kaiming_matrix(int rows, int cols, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(cols));
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

}  // namespace

NetworkSpec synthesize(const SynthConfig& cfg) {
  require(cfg.depth >= 1, Status::invalid_argument, "depth must be >= 1");
  NetworkSpec net;
  net.metadata.seed = cfg.seed;
  net.metadata.depth = cfg.depth;
  Rng rng(derive_seed(cfg.seed, 0x73796e74ULL));

  if (cfg.family == Family::fc) {
    require(cfg.width >= 1, Status::invalid_argument, "width must be >= 1");
    const int input = cfg.input_dim > 0 ? cfg.input_dim : cfg.width;
    net.input_dim = input;
    net.metadata.family = "fc";
    net.metadata.width = cfg.width;
    net.metadata.name = "fc" + std::to_string(cfg.depth);
    int in_dim = input;
    for (int layer = 0; layer < cfg.depth - 1; ++layer) {
      DenseLayer d;
      d.W = kaiming_matrix(cfg.width, in_dim, rng);
      d.b = Eigen::VectorXd::Zero(cfg.width);
      net.layers.emplace_back(std::move(d));
      net.layers.emplace_back(ActivationLayer{cfg.activation});
      in_dim = cfg.width;
    }
    DenseLayer head;
    head.W = kaiming_matrix(1, in_dim, rng);
    head.b = Eigen::VectorXd::Zero(1);
    net.layers.emplace_back(std::move(head));
    return net;
  }

  // CNN: (depth-1) same-padding stride-1 convolutions with activations, then
  // flatten and a dense head to one scalar.
  require(cfg.channels >= 1, Status::invalid_argument, "channels must be >= 1");
  require(cfg.input.h >= 1 && cfg.input.w >= 1 && cfg.input.c >= 1,
          Status::invalid_argument, "CNN input shape must be positive");
  net.input_dim = cfg.input.flat();
  net.metadata.family = "cnn";
  net.metadata.channels = cfg.channels;
  net.metadata.name = "cnn" + std::to_string(cfg.depth);
  ConvShape shape = cfg.input;
  for (int layer = 0; layer < cfg.depth - 1; ++layer) {
    Conv2dLayer conv;
    conv.kernel.out_ch = cfg.channels;
    conv.kernel.in_ch = shape.c;
    conv.kernel.kh = cfg.kernel_size;
    conv.kernel.kw = cfg.kernel_size;
    conv.kernel.stride = 1;
    conv.kernel.padding = Padding::same;
    conv.kernel.input_shape = shape;
    const int fan_in = shape.c * cfg.kernel_size * cfg.kernel_size;
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    const std::size_t count = static_cast<std::size_t>(cfg.channels) * fan_in;
    conv.kernel.weights.resize(count);
    for (auto& w : conv.kernel.weights) w = stddev * rng.normal();
    conv.kernel.bias = Eigen::VectorXd::Zero(cfg.channels);
    shape = conv.kernel.output_shape();
    net.layers.emplace_back(std::move(conv));
    net.layers.emplace_back(ActivationLayer{cfg.activation});
  }
  net.layers.emplace_back(FlattenLayer{shape});
  DenseLayer head;
  head.W = kaiming_matrix(1, shape.flat(), rng);
  head.b = Eigen::VectorXd::Zero(1);
  net.layers.emplace_back(std::move(head));
  return net;
}

std::vector<Diagnostic> validate_network(const NetworkSpec& net) {
  std::vector<Diagnostic> out;
  if (net.layers.empty()) {
    out.push_back({-1, "empty", "network has no layers"});
    return out;
  }
  if (net.input_dim <= 0) {
    out.push_back({-1, "dimension-mismatch", "input dimension must be positive"});
  }
  int dim = net.input_dim;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const int idx = static_cast<int>(i);
    const LayerSpec& layer = net.layers[i];
    const int expects = layer_in_dim(layer, dim);
    if (expects != dim) {
      out.push_back({idx, "dimension-mismatch",
                     "layer expects input dim " + std::to_string(expects) +
                         " but receives " + std::to_string(dim)});
    }
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      if (!d->W.allFinite() || (d->b.size() > 0 && !d->b.allFinite())) {
        out.push_back({idx, "non-finite", "dense layer has non-finite parameters"});
      }
      if (d->b.size() > 0 && d->b.size() != d->W.rows()) {
        out.push_back({idx, "dimension-mismatch", "dense bias length mismatch"});
      }
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      bool finite = true;
      for (double w : c->kernel.weights) finite = finite && std::isfinite(w);
      if (c->kernel.bias.size() > 0 && !c->kernel.bias.allFinite()) finite = false;
      if (!finite) {
        out.push_back({idx, "non-finite", "conv layer has non-finite parameters"});
      }
      if (c->kernel.stride < 1) {
        out.push_back({idx, "dimension-mismatch", "conv stride must be >= 1"});
      }
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      if (a->kind.tag == ActivationKind::Tag::sigmoid_approx && a->kind.alpha <= 0) {
        out.push_back({idx, "invalid-parameter", "sigmoid alpha must be > 0"});
      }
    }
    dim = layer_out_dim(layer, dim);
  }
  return out;
}

}  // namespace momentflow
