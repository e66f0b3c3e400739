#include "core/activation.hpp"

#include <cmath>

#include "core/common.hpp"
#include "core/special_math.hpp"

namespace momentflow {

namespace {
constexpr double kOrigin[1] = {0.0};
}

double ActivationKind::raw(double y) const {
  switch (tag) {
    case Tag::heaviside:
      return y >= 0.0 ? 1.0 : 0.0;
    case Tag::relu:
      return y > 0.0 ? y : 0.0;
    case Tag::gelu:
      return y * Phi(y);
    case Tag::sigmoid_approx:
      // logistic, evaluated from the negative side to avoid overflow
      return y >= 0.0 ? 1.0 / (1.0 + std::exp(-y))
                      : std::exp(y) / (1.0 + std::exp(y));
    case Tag::identity:
      return y;
  }
  fail(Status::internal_error, "unknown activation tag");
}

std::span<const double> ActivationKind::breakpoints() const {
  switch (tag) {
    case Tag::heaviside:
    case Tag::relu:
      return {kOrigin, 1};
    default:
      return {};
  }
}

int ActivationKind::max_series_order() const {
  return tag == Tag::sigmoid_approx ? kSigmoidSeriesOrderCap : kMaxSeriesOrder;
}

std::string ActivationKind::name() const {
  switch (tag) {
    case Tag::heaviside: return "heaviside";
    case Tag::relu: return "relu";
    case Tag::gelu: return "gelu";
    case Tag::sigmoid_approx: return "sigmoid";
    case Tag::identity: return "identity";
  }
  return "?";
}

ActivationKind ActivationKind::parse(const std::string& name, double alpha) {
  if (name == "heaviside") return heaviside();
  if (name == "relu") return relu();
  if (name == "gelu") return gelu();
  if (name == "sigmoid" || name == "sigmoid_approx") {
    require(alpha > 0.0, Status::domain_error, "sigmoid alpha must be > 0");
    return sigmoid_approx(alpha);
  }
  if (name == "identity") return identity();
  fail(Status::invalid_argument, "unknown activation kind '" + name + "'");
}

}  // namespace momentflow
