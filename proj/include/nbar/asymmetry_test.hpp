#pragma once

/** @file
 * Wald-type test of H0: f0(x_l) = f1(x_l) at k distinct points, and
 * pointwise asymptotic confidence intervals for the debiased estimators.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbar/errors.hpp"
#include "nbar/estimators.hpp"
#include "nbar/special_functions.hpp"

namespace nbar {

/// Distinct test points, kept sorted.
class TestGrid {
 public:
  explicit TestGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw ConfigError("test grid needs at least one point");
    std::sort(points_.begin(), points_.end());
    for (std::size_t i = 1; i < points_.size(); ++i)
      if (!(points_[i] > points_[i - 1])) throw ConfigError("test grid points must be distinct");
  }

  static TestGrid regular(double lo, double hi, double mesh) {
    return TestGrid(GridSpec{lo, hi, mesh}.points(1.0));
  }

  /// k equidistant points spanning [lo, hi].
  static TestGrid equidistant(double lo, double hi, int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    std::vector<double> p(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i)] = k == 1 ? lo : lo + (hi - lo) * i / (k - 1);
    return TestGrid(std::move(p));
  }

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<double> points_;
};

/// Noise covariance entering the statistic: supplied, or estimated from
/// plain-estimator residuals at bandwidth h_a.
struct VarianceInputs {
  bool estimate = false;
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  double rho = 0.0;

  static VarianceInputs known(double s0, double s1, double rho) { return {false, s0, s1, rho}; }
  static VarianceInputs estimated() { return {true, 0.0, 0.0, 0.0}; }
};

struct ResolvedVariance {
  double var0;
  double var1;
  double rho;
  bool estimated;

  /// sigma0^2 + sigma1^2 - 2 sigma0 sigma1 rho.
  double difference_variance() const {
    return var0 + var1 - 2.0 * std::sqrt(var0 * var1) * rho;
  }
};

inline ResolvedVariance resolve_variance(const ParentTable& t, const KernelSpec& k,
                                         const BierensConfig& b, const VarianceInputs& v,
                                         unsigned threads = 1) {
  if (!v.estimate) {
    if (!(v.sigma0 > 0.0 && v.sigma1 > 0.0) || !(v.rho > -1.0 && v.rho < 1.0))
      throw ConfigError("invalid noise covariance");
    return {v.sigma0 * v.sigma0, v.sigma1 * v.sigma1, v.rho, false};
  }
  const auto e = estimate_noise_covariance(t, k, b.bandwidth_a(t.sample_size()), 0.0, threads);
  return {e.var0, e.var1, e.rho_or_throw(), true};
}

struct TestResult {
  double statistic = 0.0;
  std::size_t k = 0;
  double p_value = 1.0;
  double level = 0.05;
  bool reject = false;
  std::vector<double> points;
  /// nu_hat(x_l) (f0_bar(x_l) - f1_bar(x_l))^2.
  std::vector<double> contributions;
  ResolvedVariance variance{1.0, 1.0, 0.0, false};
  double sample_size = 0.0;
};

inline nlohmann::json to_json(const TestResult& r) {
  return {{"statistic", r.statistic},
          {"k", r.k},
          {"p_value", r.p_value},
          {"level", r.level},
          {"reject", r.reject},
          {"points", r.points},
          {"contributions", r.contributions},
          {"sigma0_sq", r.variance.var0},
          {"sigma1_sq", r.variance.var1},
          {"rho", r.variance.rho},
          {"variance_estimated", r.variance.estimated},
          {"sample_size", r.sample_size}};
}

/**
 * W_n = N^{2b/(2b+1)} / ((s0^2 + s1^2 - 2 s0 s1 rho) |K|_2^2)
 *       * sum_l nu_hat(x_l) (f0_bar(x_l) - f1_bar(x_l))^2,
 * with nu_hat at bandwidth h_a. Fills statistic, contributions and points.
 */
inline TestResult wald_statistic(const ParentTable& t, const KernelSpec& kernel,
                                 const BierensConfig& b, const TestGrid& grid,
                                 const ResolvedVariance& var, double threshold = 0.0) {
  const double n = t.sample_size();
  if (!(n >= 1.0)) throw DataError("no parent with an observed child");
  TestResult r;
  r.k = grid.size();
  r.points = grid.points();
  r.variance = var;
  r.sample_size = n;
  std::vector<double> bad;
  long double sum = 0;
  for (double x : grid.points()) {
    const PointEstimate p = estimate_bierens_point(t, kernel, b, threshold, x);
    if (!p.f[0] || !p.f[1]) {
      bad.push_back(x);
      r.contributions.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double d = *p.f[0] - *p.f[1];
    const double c = p.nu * d * d;
    r.contributions.push_back(c);
    sum += c;
  }
  if (!bad.empty()) {
    std::string msg = "estimator undefined at test points:";
    for (double x : bad) msg += " " + std::to_string(x);
    throw DataError(msg);
  }
  const double dv = var.difference_variance();
  if (!(dv > 0.0)) throw DataError("noise difference variance is not positive");
  const double scale = std::pow(n, 2.0 * b.beta * b.rate_exponent()) / (dv * kernel.l2_norm_squared());
  r.statistic = static_cast<double>(sum) * scale;
  return r;
}

/// Full test: statistic, chi-squared(k) p-value and decision at `level`.
inline TestResult asymmetry_test(const ParentTable& t, const KernelSpec& kernel,
                                 const BierensConfig& b, const TestGrid& grid, double level,
                                 const VarianceInputs& v, unsigned threads = 1) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  const ResolvedVariance var = resolve_variance(t, kernel, b, v, threads);
  TestResult r = wald_statistic(t, kernel, b, grid, var);
  r.level = level;
  r.p_value = chi2_sf(r.statistic, static_cast<int>(r.k));
  r.reject = r.p_value < level;
  return r;
}

inline TestResult asymmetry_test(const BinaryTreeData& tree, const KernelSpec& kernel,
                                 const BierensConfig& b, const TestGrid& grid, double level,
                                 const VarianceInputs& v) {
  return asymmetry_test(make_parent_table(tree), kernel, b, grid, level, v);
}

struct ConfidenceInterval {
  double x = 0.0;
  std::array<double, 2> center{0, 0};
  std::array<double, 2> half_width{0, 0};

  double lower(int t) const { return center[t] - half_width[t]; }
  double upper(int t) const { return center[t] + half_width[t]; }
};

/**
 * Asymptotic interval f_bar_t(x) +/- z_{1-level/2} sqrt(|K|_2^2 s_t^2 / nu_hat(x))
 * / N^{b/(2b+1)}, for both types.
 */
inline ConfidenceInterval pointwise_confidence_interval(const ParentTable& t,
                                                        const KernelSpec& kernel,
                                                        const BierensConfig& b, double x,
                                                        double level,
                                                        const ResolvedVariance& var) {
  if (!(level > 0.0 && level <= 1.0)) throw ConfigError("level must lie in (0, 1]");
  const PointEstimate p = estimate_bierens_point(t, kernel, b, 0.0, x);
  if (!(p.nu > 0.0)) throw DataError("density estimate is zero at x=" + std::to_string(x));
  if (!p.f[0] || !p.f[1]) throw DataError("estimator undefined at x=" + std::to_string(x));
  const double z = level >= 1.0 ? 0.0 : normal_quantile(1.0 - 0.5 * level);
  const double rate = std::pow(t.sample_size(), b.beta * b.rate_exponent());
  ConfidenceInterval ci;
  ci.x = x;
  const double vars[2] = {var.var0, var.var1};
  for (int i = 0; i < 2; ++i) {
    ci.center[i] = *p.f[i];
    ci.half_width[i] = z * std::sqrt(kernel.l2_norm_squared() * vars[i] / p.nu) / rate;
  }
  return ci;
}

}  // namespace nbar
