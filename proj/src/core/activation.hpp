#pragma once

#include <span>
#include <string>

namespace momentflow {

inline constexpr double kDefaultSigmoidAlpha = 0.368;
// Alternative fit derived from tanh(y) ~ erf(sqrt(pi)/2 y).
inline constexpr double kSigmoidAlphaPiOver8 = 0.39269908169872415481;

// Scalar nonlinearity applied element-wise at a layer. sigmoid_approx carries
// the shape parameter of its Gaussian-mean approximation; other kinds ignore
// alpha.
struct ActivationKind {
  enum class Tag { heaviside, relu, gelu, sigmoid_approx, identity };

  Tag tag = Tag::relu;
  double alpha = kDefaultSigmoidAlpha;

  static ActivationKind heaviside() { return {Tag::heaviside}; }
  static ActivationKind relu() { return {Tag::relu}; }
  static ActivationKind gelu() { return {Tag::gelu}; }
  static ActivationKind sigmoid_approx(double a = kDefaultSigmoidAlpha) {
    return {Tag::sigmoid_approx, a};
  }
  static ActivationKind identity() { return {Tag::identity}; }

  /// Deterministic activation value g(y). For sigmoid_approx this is the true
  /// logistic function (the approximation enters only through the moments).
  double raw(double y) const;

  /// Locations where g is discontinuous or non-smooth; quadrature splits its
  /// panels here.
  std::span<const double> breakpoints() const;

  /// Highest derivative-term order available for this kind.
  int max_series_order() const;

  std::string name() const;
  static ActivationKind parse(const std::string& name,
                              double alpha = kDefaultSigmoidAlpha);

  bool operator==(const ActivationKind& other) const {
    return tag == other.tag &&
           (tag != Tag::sigmoid_approx || alpha == other.alpha);
  }
};

inline constexpr int kMaxSeriesOrder = 30;
inline constexpr int kSigmoidSeriesOrderCap = 5;

}  // namespace momentflow
