#pragma once

#include <span>
#include <vector>

namespace momentflow {

/// Standard normal density (1/sqrt(2*pi)) exp(-x^2/2).
double phi(double x);

/// Standard normal CDF, evaluated through erfc so that the tails keep full
/// relative accuracy (no cancellation down to |x| ~ 8 and beyond).
double Phi(double x);

// Error function pair, rational Chebyshev approximations (Cody 1969).
// Relative accuracy is ~1e-16 across the double range.
double erf_cody(double x);
double erfc_cody(double x);

/// Probabilist's Hermite polynomial He_k(x) via the three-term recurrence
/// He_{k+1} = x He_k - k He_{k-1}.
double hermite_he(int k, double x);

/// Fills out[0..K] with He_0(x) .. He_K(x).
void hermite_he_sequence(int K, double x, std::span<double> out);

}  // namespace momentflow
