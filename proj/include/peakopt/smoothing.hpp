#pragma once

// Smooth surrogates for max(., 0) and for the indicator of [0, +inf).
// Everything is evaluated in log space so that no exponential of a positive
// argument is ever formed.

#include <cmath>
#include <numbers>

#include "peakopt/error.hpp"

namespace peakopt {

/// log(1 + e^a) without overflow.
inline double log1p_exp(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

/// Logistic function 1 / (1 + e^{-a}) without overflow.
inline double logistic(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

/// Laplace smoothing of max(xi, 0): log(e^{lambda xi} + 1) / lambda.
/// Exceeds max(xi, 0) by at most log(2) / lambda, attained at xi = 0.
inline double softplus(double xi, double lambda) { return log1p_exp(lambda * xi) / lambda; }

/// d softplus / d xi.
inline double softplus_slope(double xi, double lambda) { return logistic(lambda * xi); }

/// Smooth increasing approximation of the indicator of [0, +inf):
///   omega(xi) = exp(-alpha * log(e^{-lambda2 xi} + 1)).
inline double omega(double xi, double alpha, double lambda2) {
  return std::exp(-alpha * log1p_exp(-lambda2 * xi));
}

/// d omega / d xi.
inline double omega_slope(double xi, double alpha, double lambda2) {
  return alpha * lambda2 * logistic(-lambda2 * xi) * omega(xi, alpha, lambda2);
}

struct SmoothingParams {
  double lambda1 = 5000.0;  // sharpness of the softplus replacing max(g, 0)
  double lambda2 = 0.0;     // sharpness inside the indicator approximation
  double theta = 0.0;       // decay rate of the indicator approximation
  double alpha = 0.0;       // theta / lambda2
  double epsilon = 0.0;     // calibration level; 0 when parameters were set by hand

  void validate() const {
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !(theta > 0.0) || !(alpha > 0.0))
      throw DomainError("smoothing parameters must be positive");
    if (std::abs(alpha - theta / lambda2) > 1e-12 * alpha)
      throw DomainError("smoothing parameters violate alpha = theta / lambda2");
  }
};

/// Calibrates (alpha, lambda2) so that omega(0) = 1 - eps and omega(-eps^2) = eps.
inline SmoothingParams params_from_epsilon(double epsilon, double lambda1 = 5000.0) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
  if (!(lambda1 > 0.0)) throw DomainError("lambda1 must be positive");
  SmoothingParams params;
  params.lambda1 = lambda1;
  params.epsilon = epsilon;
  params.alpha = -std::log1p(-epsilon) / std::numbers::ln2;
  // eps^{-1/alpha} - 1, computed as expm1 to keep precision for small alpha.
  params.lambda2 = std::log(std::expm1(-std::log(epsilon) / params.alpha)) / (epsilon * epsilon);
  params.theta = params.alpha * params.lambda2;
  return params;
}

}  // namespace peakopt
