#pragma once

/** @file
 * Smoothing kernels and bandwidth rules.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nbar/errors.hpp"

namespace nbar {

enum class KernelShape { gaussian, epanechnikov };

inline KernelShape parse_kernel_shape(const std::string& name) {
  if (name == "gaussian") return KernelShape::gaussian;
  if (name == "epanechnikov") return KernelShape::epanechnikov;
  throw ConfigError("unknown kernel '" + name + "'");
}

inline std::string to_string(KernelShape s) {
  return s == KernelShape::gaussian ? "gaussian" : "epanechnikov";
}

/**
 * A second-order symmetric kernel. Both shapes integrate to one and have a
 * vanishing first moment (order 1). The Gaussian has unbounded support.
 */
class KernelSpec {
 public:
  explicit KernelSpec(KernelShape shape = KernelShape::gaussian) : shape_(shape) {}

  KernelShape shape() const { return shape_; }
  int order() const { return 1; }

  double support_radius() const {
    return shape_ == KernelShape::gaussian ? std::numeric_limits<double>::infinity() : 1.0;
  }

  /// |K|_2^2 = integral of K^2.
  double l2_norm_squared() const {
    return shape_ == KernelShape::gaussian ? 1.0 / (2.0 * std::sqrt(std::numbers::pi)) : 0.6;
  }

  /// Second moment integral of x^2 K(x).
  double second_moment() const { return shape_ == KernelShape::gaussian ? 1.0 : 0.2; }

  double operator()(double z) const {
    if (shape_ == KernelShape::gaussian) return kGaussNorm * std::exp(-0.5 * z * z);
    const double a = std::abs(z);
    return a < 1.0 ? 0.75 * (1.0 - z * z) : 0.0;
  }

  /// K_h(d) = K(d / h) / h.
  double scaled(double d, double h) const { return (*this)(d / h) / h;  }

 private:
  static constexpr double kGaussNorm = 0.3989422804014326779399460599343818684758586311649;
  KernelShape shape_;
};

/// h(N) = constant * N^(-exponent).
struct BandwidthRule {
  double exponent = 0.2;
  double constant = 1.0;

  BandwidthRule() = default;
  BandwidthRule(double exponent, double constant = 1.0) : exponent(exponent), constant(constant) {
    if (!(exponent > 0.0 && exponent < 1.0))
      throw ConfigError("bandwidth exponent must lie in (0, 1)");
    if (!(constant > 0.0)) throw ConfigError("bandwidth constant must be > 0");
  }

  double operator()(double n) const {
    if (!(n >= 1.0)) throw ConfigError("bandwidth needs a sample size >= 1");
    return constant * std::pow(n, -exponent);
  }
};

/**
 * Silverman's rule-of-thumb scale 0.9 min(sd, IQR / 1.34); multiplied by
 * N^(-1/5) it is the usual normal-reference bandwidth.
 */
inline double silverman_scale(std::span<const double> values) {
  if (values.size() < 2) throw DataError("Silverman rule needs at least two values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  auto quantile = [&](double p) {
    const double pos = p * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) throw DataError("Silverman rule: values have zero spread");
  return 0.9 * spread;
}

}  // namespace nbar
