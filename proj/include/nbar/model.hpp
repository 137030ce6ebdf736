#pragma once

/** @file
 * NBAR model description: the autoregressive pair, the bivariate noise law,
 * the law of the root trait, and optional variance functions.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbar/errors.hpp"

namespace nbar {

/// A named real function. The name records provenance in reports.
struct RealFunction {
  std::string name;
  std::function<double(double)> fn;

  double operator()(double x) const { return fn(x); }
};

/// x (tau + exp(-x^2)/2).
inline RealFunction damped_linear(double tau) {
  return {"x*(" + nlohmann::json(tau).dump() + "+exp(-x^2)/2)",
          [tau](double x) { return x * (tau + 0.5 * std::exp(-x * x)); }};
}

inline RealFunction constant_function(double c) {
  return {"const(" + nlohmann::json(c).dump() + ")", [c](double) { return c; }};
}

/// Polynomial c0 + c1 x + ... (Horner).
inline RealFunction polynomial(std::vector<double> coeffs) {
  std::string name = "poly" + nlohmann::json(coeffs).dump();
  return {std::move(name), [c = std::move(coeffs)](double x) {
            double acc = 0.0;
            for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
            return acc;
          }};
}

/// Piecewise-linear interpolation through (x_i, y_i), extended linearly
/// beyond the end knots.
inline RealFunction linear_table(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ConfigError("table needs at least two (x, y) knots of equal count");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1])) throw ConfigError("table knots must be increasing");
  std::string name = "table" + nlohmann::json(xs).dump() + nlohmann::json(ys).dump();
  return {std::move(name), [xs = std::move(xs), ys = std::move(ys)](double x) {
            auto hi = std::upper_bound(xs.begin(), xs.end(), x);
            std::size_t j = static_cast<std::size_t>(hi - xs.begin());
            j = std::clamp<std::size_t>(j, 1, xs.size() - 1);
            const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
            return ys[j - 1] + t * (ys[j] - ys[j - 1]);
          }};
}

/// The pair (f0, f1) with the contraction constants of F(gamma, ell).
struct AutoregressivePair {
  RealFunction f0;
  RealFunction f1;
  double gamma = 0.5;
  double ell = 1.0;

  const RealFunction& operator[](int type) const { return type == 0 ? f0 : f1; }
};

/**
 * Centered bivariate Gaussian noise with covariance
 * [[s0^2, rho s0 s1], [rho s0 s1, s1^2]]. Standard deviations must be
 * positive; degenerate() is the one zero-variance exception, for
 * deterministic simulations.
 */
class NoiseModel {
 public:
  NoiseModel() : NoiseModel(1.0, 1.0, 0.0) {}

  NoiseModel(double sigma0, double sigma1, double rho)
      : sigma0_(sigma0), sigma1_(sigma1), rho_(rho) {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0) || !std::isfinite(sigma0) ||
        !std::isfinite(sigma1))
      throw ConfigError("noise standard deviations must be finite and > 0");
    if (!(rho > -1.0 && rho < 1.0))
      throw ConfigError("noise correlation must lie in (-1, 1)");
    rho_perp_ = std::sqrt(1.0 - rho * rho);
  }

  /// Noise with zero variance in both coordinates.
  static NoiseModel degenerate() {
    NoiseModel n;
    n.sigma0_ = 0.0;
    n.sigma1_ = 0.0;
    return n;
  }

  double sigma0() const { return sigma0_; }
  double sigma1() const { return sigma1_; }
  double sigma(int type) const { return type == 0 ? sigma0_ : sigma1_; }
  double rho() const { return rho_; }

  /// Entries of the covariance matrix, row-major.
  std::array<double, 4> covariance() const {
    const double c = rho_ * sigma0_ * sigma1_;
    return {sigma0_ * sigma0_, c, c, sigma1_ * sigma1_};
  }

  bool positive_definite() const { return sigma0_ > 0.0 && sigma1_ > 0.0; }

  /// Maps two independent standard normals to unit-variance correlated
  /// normals (Cholesky factor of the correlation matrix).
  std::pair<double, double> correlate(double z0, double z1) const {
    return {z0, rho_ * z0 + rho_perp_ * z1};
  }

  /// Marginal density G_type at x.
  double marginal_density(int type, double x) const {
    const double s = sigma(type);
    return std::exp(-0.5 * (x / s) * (x / s)) / (s * std::sqrt(2.0 * std::numbers::pi));
  }

  /// E|eps'| where eps' has density (G0 + G1) / 2.
  double mean_abs_mixture() const {
    return 0.5 * (sigma0_ + sigma1_) * std::sqrt(2.0 / std::numbers::pi);
  }

  /// Optional tail-class parameters (r, lambda), recorded for diagnostics.
  std::optional<std::pair<double, double>> tail_class;

 private:
  double sigma0_;
  double sigma1_;
  double rho_;
  double rho_perp_ = 1.0;
};

/// Law of X_root: point mass at `location` or Gaussian(location, sd).
struct RootLaw {
  enum class Kind { point, gaussian };
  Kind kind = Kind::point;
  double location = 1.0;
  double sd = 0.0;

  static RootLaw point(double x0) { return {Kind::point, x0, 0.0}; }
  static RootLaw gaussian(double mean, double sd) {
    if (!(sd > 0.0)) throw ConfigError("root sd must be > 0");
    return {Kind::gaussian, mean, sd};
  }

  /// Draw from a standard normal z.
  double draw(double z) const { return kind == Kind::point ? location : location + sd * z; }
};

/// Everything needed to simulate an NBAR tree.
struct ModelSpec {
  std::string name;
  AutoregressivePair pair;
  NoiseModel noise;
  RootLaw root = RootLaw::point(1.0);
  /// Heteroscedastic mode: the noise of a type-t child of x is scaled by
  /// sd_functions[t](x) instead of the constant sigma_t.
  std::optional<std::pair<RealFunction, RealFunction>> sd_functions;
};

/**
 * Checks that heteroscedastic sd functions stay within (0, inf) on a grid.
 * Returns (min, max) over both functions.
 */
inline std::pair<double, double> check_sd_functions(const ModelSpec& spec, double lo = -50,
                                                    double hi = 50, int points = 2001) {
  if (!spec.sd_functions) return {spec.noise.sigma0(), spec.noise.sigma1()};
  double mn = std::numeric_limits<double>::infinity();
  double mx = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * i / (points - 1);
    for (double v : {spec.sd_functions->first(x), spec.sd_functions->second(x)}) {
      if (!std::isfinite(v) || !(v > 0.0))
        throw ConfigError("sd function not bounded away from 0 and infinity at x=" +
                          std::to_string(x));
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  }
  return {mn, mx};
}

inline constexpr double kTauMin = 0.125;
inline constexpr double kTauMax = 0.25;

/**
 * Built-in models studied in the simulations:
 *   paper-neq   f0 = x(1/4 + e^{-x^2}/2), f1 = x(1/8 + e^{-x^2}/2)
 *   paper-eq    f0 = f1 = x(1/4 + e^{-x^2}/2)
 *   paper-tau(t) f0 as above, f1 = x(t + e^{-x^2}/2), t in [1/8, 1/4]
 * All with unit Gaussian noise, correlation 0.3 and root fixed at 1.
 */
inline ModelSpec paper_tau_model(double tau) {
  if (!(tau >= kTauMin && tau <= kTauMax))
    throw ConfigError("tau must lie in [1/8, 1/4]");
  ModelSpec m;
  m.name = "paper-tau(" + nlohmann::json(tau).dump() + ")";
  m.pair = {damped_linear(0.25), damped_linear(tau), 0.5, 0.5};
  m.noise = NoiseModel(1.0, 1.0, 0.3);
  m.root = RootLaw::point(1.0);
  return m;
}

inline ModelSpec builtin_model(const std::string& name) {
  if (name == "paper-neq") {
    auto m = paper_tau_model(0.125);
    m.name = name;
    return m;
  }
  if (name == "paper-eq") {
    auto m = paper_tau_model(0.25);
    m.name = name;
    return m;
  }
  const std::string prefix = "paper-tau";
  if (name.rfind(prefix, 0) == 0) {
    std::string arg = name.substr(prefix.size());
    if (!arg.empty() && (arg.front() == '(' || arg.front() == ':' || arg.front() == '='))
      arg.erase(0, 1);
    if (!arg.empty() && arg.back() == ')') arg.pop_back();
    double tau = 0;
    try {
      std::size_t pos = 0;
      tau = std::stod(arg, &pos);
      if (pos != arg.size()) throw std::invalid_argument(arg);
    } catch (const std::exception&) {
      throw ConfigError("bad tau in model name '" + name + "'");
    }
    return paper_tau_model(tau);
  }
  throw ConfigError("unknown model '" + name + "'");
}

namespace detail {

inline RealFunction function_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "paper-f0") return damped_linear(0.25);
    if (s == "paper-f1") return damped_linear(0.125);
    if (s == "zero") return constant_function(0.0);
    if (s == "identity") return polynomial({0.0, 1.0});
    throw ConfigError("unknown builtin function '" + s + "'");
  }
  if (j.is_number()) return constant_function(j.get<double>());
  if (j.is_object()) {
    if (j.contains("tau")) return damped_linear(j.at("tau").get<double>());
    if (j.contains("poly")) return polynomial(j.at("poly").get<std::vector<double>>());
    if (j.contains("table")) {
      const auto& t = j.at("table");
      return linear_table(t.at("x").get<std::vector<double>>(),
                          t.at("y").get<std::vector<double>>());
    }
  }
  throw ConfigError("cannot interpret function spec " + j.dump());
}

}  // namespace detail

/**
 * Model from JSON. Either {"model": "<builtin>"} (with optional overrides)
 * or {"f0": ..., "f1": ..., "sigma0":, "sigma1":, "rho":, "root": {"point": x0}
 * | {"mean":, "sd":}, "gamma":, "ell":, "sd0":, "sd1":}. Functions are builtin
 * names ("paper-f0", "paper-f1", "zero", "identity"), numbers (constants),
 * {"tau": t}, {"poly": [c0, c1, ...]} or {"table": {"x": [...], "y": [...]}}.
 */
inline ModelSpec model_from_json(const nlohmann::json& j) {
  try {
    ModelSpec m;
    if (j.contains("model")) {
      m = builtin_model(j.at("model").get<std::string>());
    } else {
      m.name = j.value("name", std::string("custom"));
      m.pair.f0 = detail::function_from_json(j.at("f0"));
      m.pair.f1 = detail::function_from_json(j.at("f1"));
      m.noise = NoiseModel(1.0, 1.0, 0.0);
    }
    if (j.contains("f0") && j.contains("model")) m.pair.f0 = detail::function_from_json(j["f0"]);
    if (j.contains("f1") && j.contains("model")) m.pair.f1 = detail::function_from_json(j["f1"]);
    m.pair.gamma = j.value("gamma", m.pair.gamma);
    m.pair.ell = j.value("ell", m.pair.ell);
    if (j.contains("sigma0") || j.contains("sigma1") || j.contains("rho"))
      m.noise = NoiseModel(j.value("sigma0", m.noise.sigma0()),
                           j.value("sigma1", m.noise.sigma1()),
                           j.value("rho", m.noise.rho()));
    if (j.contains("root")) {
      const auto& r = j.at("root");
      if (r.contains("point"))
        m.root = RootLaw::point(r.at("point").get<double>());
      else
        m.root = RootLaw::gaussian(r.at("mean").get<double>(), r.at("sd").get<double>());
    }
    if (j.contains("sd0") || j.contains("sd1"))
      m.sd_functions.emplace(detail::function_from_json(j.at("sd0")),
                             detail::function_from_json(j.at("sd1")));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
}

inline nlohmann::json model_to_json(const ModelSpec& m) {
  nlohmann::json j;
  j["name"] = m.name;
  j["f0"] = m.pair.f0.name;
  j["f1"] = m.pair.f1.name;
  j["sigma0"] = m.noise.sigma0();
  j["sigma1"] = m.noise.sigma1();
  j["rho"] = m.noise.rho();
  if (m.root.kind == RootLaw::Kind::point)
    j["root"] = {{"point", m.root.location}};
  else
    j["root"] = {{"mean", m.root.location}, {"sd", m.root.sd}};
  if (m.sd_functions) {
    j["sd0"] = m.sd_functions->first.name;
    j["sd1"] = m.sd_functions->second.name;
  }
  return j;
}

}  // namespace nbar
