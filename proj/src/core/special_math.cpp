#include "core/special_math.hpp"

#include <cmath>

#include "core/common.hpp"

namespace momentflow {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrtPi = 0.5641895835477562869;
constexpr double kInvSqrt2 = 0.7071067811865475244;

// Coefficient sets from W. J. Cody, "Rational Chebyshev approximation for
// the error function", Math. Comp. 23 (1969). Same data as netlib CALERF.
constexpr double kA[5] = {3.16112374387056560e00, 1.13864154151050156e02,
                          3.77485237685302021e02, 3.20937758913846947e03,
                          1.85777706184603153e-1};
constexpr double kB[4] = {2.36012909523441209e01, 2.44024637934444173e02,
                          1.28261652607737228e03, 2.84423683343917062e03};
constexpr double kC[9] = {5.64188496988670089e-1, 8.88314979438837594e00,
                          6.61191906371416295e01, 2.98635138197400131e02,
                          8.81952221241769090e02, 1.71204761263407058e03,
                          2.05107837782607147e03, 1.23033935479799725e03,
                          2.15311535474403846e-8};
constexpr double kD[8] = {1.57449261107098347e01, 1.17693950891312499e02,
                          5.37181101862009858e02, 1.62138957456669019e03,
                          3.29079923573345963e03, 4.36261909014324716e03,
                          3.43936767414372164e03, 1.23033935480374942e03};
constexpr double kP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1,
                          1.25781726111229246e-1, 1.60837851487422766e-2,
                          6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kQ[5] = {2.56852019228982242e00, 1.87295284992346047e00,
                          5.27905102951428412e-1, 6.05183413124413191e-2,
                          2.33520497626869185e-3};

// erf on |x| <= 0.46875.
double erf_small(double x) {
  const double z = x * x;
  double num = kA[4] * z;
  double den = z;
  for (int i = 0; i < 3; ++i) {
    num = (num + kA[i]) * z;
    den = (den + kB[i]) * z;
  }
  return x * (num + kA[3]) / (den + kB[3]);
}

// erfc on 0.46875 < x <= 4.
double erfc_mid(double x) {
  double num = kC[8] * x;
  double den = x;
  for (int i = 0; i < 7; ++i) {
    num = (num + kC[i]) * x;
    den = (den + kD[i]) * x;
  }
  return std::exp(-x * x) * (num + kC[7]) / (den + kD[7]);
}

// erfc on x > 4.
double erfc_large(double x) {
  if (x > 26.6) return 0.0;  // underflows double
  const double z = 1.0 / (x * x);
  double num = kP[5] * z;
  double den = z;
  for (int i = 0; i < 4; ++i) {
    num = (num + kP[i]) * z;
    den = (den + kQ[i]) * z;
  }
  const double r = z * (num + kP[4]) / (den + kQ[4]);
  return std::exp(-x * x) * (kInvSqrtPi - r) / x;
}

void check_finite(double x, const char* what) {
  require(std::isfinite(x), Status::domain_error,
          std::string(what) + " requires a finite argument");
}

}  // namespace

double erf_cody(double x) {
  const double ax = std::fabs(x);
  if (ax <= 0.46875) return erf_small(x);
  const double e = ax <= 4.0 ? erfc_mid(ax) : erfc_large(ax);
  return x > 0.0 ? 1.0 - e : e - 1.0;
}

double erfc_cody(double x) {
  const double ax = std::fabs(x);
  double e;
  if (ax <= 0.46875) {
    e = 1.0 - erf_small(ax);
  } else if (ax <= 4.0) {
    e = erfc_mid(ax);
  } else {
    e = erfc_large(ax);
  }
  return x >= 0.0 ? e : 2.0 - e;
}

double phi(double x) {
  check_finite(x, "phi");
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double Phi(double x) {
  check_finite(x, "Phi");
  return 0.5 * erfc_cody(-x * kInvSqrt2);
}

double hermite_he(int k, double x) {
  require(k >= 0, Status::invalid_argument, "hermite_he requires k >= 0");
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int n = 1; n < k; ++n) {
    const double next = x * cur - static_cast<double>(n) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

void hermite_he_sequence(int K, double x, std::span<double> out) {
  require(K >= 0, Status::invalid_argument, "hermite sequence requires K >= 0");
  require(out.size() >= static_cast<std::size_t>(K) + 1,
          Status::invalid_argument, "hermite sequence output too small");
  out[0] = 1.0;
  if (K == 0) return;
  out[1] = x;
  for (int n = 1; n < K; ++n) {
    out[n + 1] = x * out[n] - static_cast<double>(n) * out[n - 1];
  }
}

}  // namespace momentflow
