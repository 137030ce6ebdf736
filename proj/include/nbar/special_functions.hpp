#pragma once

/** @file
 * Normal and chi-squared distribution functions and quadrature, on top of
 * Boost.Math.
 */

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "nbar/errors.hpp"

namespace nbar {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Standard normal quantile.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ConfigError("normal_quantile: p outside [0, 1]");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw ConfigError("gamma_q: a must be > 0");
  if (!(x >= 0.0)) throw ConfigError("gamma_q: x must be >= 0");
  return boost::math::gamma_q(a, x);
}

/// P(chi2(k) > w).
inline double chi2_sf(double w, int k) {
  if (k < 1) throw ConfigError("chi2_sf: degrees of freedom must be >= 1");
  if (!(w >= 0.0)) throw ConfigError("chi2_sf: statistic must be >= 0");
  return gamma_q(0.5 * k, 0.5 * w);
}

/**
 * Adaptive Gauss-Kronrod quadrature of f over [a, b], pre-split into
 * `pieces` panels so narrow features are not skipped by the first coarse
 * estimate. tol is the relative tolerance per panel.
 */
template <typename Fn>
double integrate(Fn&& f, double a, double b, double tol = 1e-10, int pieces = 64) {
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
  double total = 0.0;
  const double w = (b - a) / pieces;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * w;
    const double hi = i + 1 == pieces ? b : lo + w;
    total += Rule::integrate(f, lo, hi, 15, tol);
  }
  return total;
}

}  // namespace nbar
