#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "core/activation.hpp"
#include "core/gaussian_layer.hpp"

namespace momentflow {

struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

struct Conv2dLayer {
  Conv2dKernel kernel;
};

struct ActivationLayer {
  ActivationKind kind;
};

struct FlattenLayer {
  ConvShape input_shape;
};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, ActivationLayer, FlattenLayer>;

struct NetworkMetadata {
  std::string name;
  std::uint64_t seed = 0;
  std::string family;  // "fc", "cnn" or "" for hand-built nets
  int depth = 0;
  int width = 0;
  int channels = 0;
};

// Ordered layer stack. Immutable once built; propagation never mutates it.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<LayerSpec> layers;
  NetworkMetadata metadata;

  int output_dim() const;
  int layer_output_dim(std::size_t layer_index) const;
};

enum class Family { fc, cnn };

struct SynthConfig {
  Family family = Family::fc;
  int depth = 4;
  int width = 100;      // FC hidden width; FC input dim defaults to width
  int channels = 10;    // CNN channels per conv layer
  ConvShape input{20, 20, 1};  // CNN input plane
  int kernel_size = 3;
  ActivationKind activation = ActivationKind::relu();
  std::uint64_t seed = 0;
  int input_dim = 0;  // FC override; 0 means "use width"
};

/// Kaiming-initialized synthetic network: weights i.i.d. N(0, 2/fan_in),
/// biases zero, the configured activation after every hidden affine layer,
/// and a final affine layer down to one scalar output.
NetworkSpec synthesize(const SynthConfig& cfg);

struct Diagnostic {
  int layer_index = -1;
  std::string code;     // "dimension-mismatch", "non-finite", "unsupported"
  std::string message;
};

/// Structural checks: inter-layer dimension consistency, finite parameters,
/// unsupported layer sequences. Returns diagnostics instead of throwing.
std::vector<Diagnostic> validate_network(const NetworkSpec& net);

}  // namespace momentflow
