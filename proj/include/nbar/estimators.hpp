#pragma once

/** @file
 * Kernel estimators on a binary tree: the invariant density, the
 * Nadaraya-Watson pair (f0, f1), its recursive variant, the two-bandwidth
 * debiased pair, and the noise covariance from residuals.
 *
 * Missing data: every observed node of T_n enters the density sum; a
 * numerator or denominator for type t only uses parents whose type-t child
 * is observed, and each average is normalized by the number of terms it
 * actually sums. On full trees this is the textbook formula with |T_n|.
 */

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "nbar/errors.hpp"
#include "nbar/kernel.hpp"
#include "nbar/parallel.hpp"
#include "nbar/tree.hpp"

namespace nbar {

/**
 * Observed nodes of T_n in breadth-first order with their child traits
 * (NaN when the child is missing). All kernel sums run over these arrays.
 */
struct ParentTable {
  int n = -1;
  std::vector<double> x;
  std::array<std::vector<double>, 2> child;
  /// Offsets of each generation 0..n in x, plus the end.
  std::vector<std::size_t> generation_begin;
  std::array<std::size_t, 2> pair_count{0, 0};
  /// Nodes with at least one observed child.
  std::size_t parent_count = 0;
  /// True when every node of T_{n+1} is observed.
  bool full = false;

  std::size_t node_count() const { return x.size(); }

  /// N entering bandwidths and rates: |T_n| on full trees, the observed
  /// parent count otherwise (they coincide on full trees).
  double sample_size() const { return static_cast<double>(parent_count); }

  static bool has(double v) { return !std::isnan(v); }
};

/// Table over T_n; n defaults to depth - 1 (parents of the last generation)
/// and is capped at depth, where no node has an observed child.
inline ParentTable make_parent_table(const BinaryTreeData& tree, std::optional<int> n = {}) {
  ParentTable t;
  t.n = std::min(n.value_or(tree.depth() - 1), tree.depth());
  if (t.n < 0) return t;
  constexpr double missing = std::numeric_limits<double>::quiet_NaN();
  t.generation_begin.assign(static_cast<std::size_t>(t.n) + 2, 0);
  int gen = 0;
  tree.for_each(t.n, [&](std::uint64_t i, double v) {
    const int g = generation_of(i);
    while (gen < g) t.generation_begin[static_cast<std::size_t>(++gen)] = t.x.size();
    t.x.push_back(v);
    bool any = false;
    for (int c = 0; c < 2; ++c) {
      auto cv = tree.value(2 * i + 1 + static_cast<std::uint64_t>(c));
      t.child[c].push_back(cv ? *cv : missing);
      if (cv) {
        ++t.pair_count[c];
        any = true;
      }
    }
    if (any) ++t.parent_count;
  });
  while (gen < t.n + 1) t.generation_begin[static_cast<std::size_t>(++gen)] = t.x.size();
  t.full = t.x.size() == full_tree_size(t.n) && t.pair_count[0] == t.x.size() &&
           t.pair_count[1] == t.x.size();
  return t;
}

/// Regular grid lo, lo + mesh, ... <= hi. A mesh of 0 means N^(-1/2).
struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  double mesh = 0.0;

  std::vector<double> points(double sample_size) const {
    const double step = mesh > 0.0 ? mesh : 1.0 / std::sqrt(sample_size);
    if (!(hi >= lo) || !(step > 0.0) || !std::isfinite(step))
      throw ConfigError("invalid grid");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> xs(count);
    for (std::size_t j = 0; j < count; ++j) xs[j] = lo + static_cast<double>(j) * step;
    return xs;
  }
};

/// Parses "lo:hi:mesh" where mesh may be "auto".
inline GridSpec parse_grid(const std::string& s) {
  const auto a = s.find(':');
  const auto b = a == std::string::npos ? a : s.find(':', a + 1);
  if (b == std::string::npos) throw ConfigError("grid must be lo:hi:mesh, got '" + s + "'");
  try {
    GridSpec g;
    g.lo = std::stod(s.substr(0, a));
    g.hi = std::stod(s.substr(a + 1, b - a - 1));
    const auto m = s.substr(b + 1);
    g.mesh = m == "auto" ? 0.0 : std::stod(m);
    if (g.mesh < 0.0 || g.hi < g.lo) throw ConfigError("bad grid '" + s + "'");
    return g;
  } catch (const std::logic_error&) {
    throw ConfigError("bad grid '" + s + "'");
  }
}

struct EstimatorConfig {
  KernelSpec kernel;
  BandwidthRule bandwidth{0.2, 1.0};
  /// Fixed bandwidth overriding the rule.
  std::optional<double> fixed_bandwidth;
  /// Lower threshold on the denominator (0 disables it).
  double threshold = 0.0;
  GridSpec grid;
  /// Partial-sum block length; 0 sums in one pass.
  std::size_t block_size = 0;
  /// Threads for grid evaluation (0 = all cores).
  unsigned threads = 1;

  double bandwidth_for(const ParentTable& t) const {
    return fixed_bandwidth ? *fixed_bandwidth : bandwidth(t.sample_size());
  }
};

struct BierensConfig {
  int beta = 2;
  double delta = 0.5;
  double constant_a = 1.0;
  double constant_b = 1.0;

  BierensConfig() = default;
  BierensConfig(int beta, double delta, double ca = 1.0, double cb = 1.0)
      : beta(beta), delta(delta), constant_a(ca), constant_b(cb) {
    validate();
  }

  void validate() const {
    if (beta < 1) throw ConfigError("beta must be an integer >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(constant_a > 0.0 && constant_b > 0.0)) throw ConfigError("bandwidth constants must be > 0");
  }

  double rate_exponent() const { return 1.0 / (2.0 * beta + 1.0); }
  double bandwidth_a(double n) const { return constant_a * std::pow(n, -rate_exponent()); }
  double bandwidth_b(double n) const { return constant_b * std::pow(n, -delta * rate_exponent()); }
  /// w = N^(-beta (1 - delta) / (2 beta + 1)).
  double weight(double n) const {
    return std::pow(n, -beta * (1.0 - delta) * rate_exponent());
  }
};

enum class EstimatorKind { plain, recursive, bierens };

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "plain") return EstimatorKind::plain;
  if (s == "recursive") return EstimatorKind::recursive;
  if (s == "bierens") return EstimatorKind::bierens;
  throw ConfigError("unknown estimator kind '" + s + "'");
}

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::plain: return "plain";
    case EstimatorKind::recursive: return "recursive";
    case EstimatorKind::bierens: return "bierens";
  }
  return "?";
}

/// Pointwise estimate; an empty f means the denominator was zero.
struct PointEstimate {
  double x = 0.0;
  double nu = 0.0;
  std::array<std::optional<double>, 2> f;
};

// ---------------------------------------------------------------------------
// Kernel sums

struct KernelSums {
  long double nu = 0;
  std::array<long double, 2> den{0, 0};
  std::array<long double, 2> num{0, 0};

  KernelSums& operator+=(const KernelSums& o) {
    nu += o.nu;
    for (int c = 0; c < 2; ++c) {
      den[c] += o.den[c];
      num[c] += o.num[c];
    }
    return *this;
  }
};

namespace detail {

// Terms are summed in double over short runs and the run totals in long
// double; the run length is fixed so results do not depend on `block`
// beyond rounding of the outer sums.
inline constexpr std::size_t kSumRun = 128;

template <typename Weight>
KernelSums kernel_sums_impl(const ParentTable& t, Weight&& weight, std::size_t begin,
                            std::size_t end, std::size_t block) {
  KernelSums total;
  const std::size_t step = block == 0 ? end - begin : block;
  const double* xs = t.x.data();
  const double* y0 = t.child[0].data();
  const double* y1 = t.child[1].data();
  for (std::size_t b0 = begin; b0 < end; b0 += step) {
    const std::size_t b1 = std::min(end, b0 + step);
    KernelSums part;
    for (std::size_t r0 = b0; r0 < b1; r0 += kSumRun) {
      const std::size_t r1 = std::min(b1, r0 + kSumRun);
      double nu = 0, d0 = 0, d1 = 0, n0 = 0, n1 = 0;
      for (std::size_t i = r0; i < r1; ++i) {
        const double w = weight(xs[i]);
        const double a = y0[i], b = y1[i];
        const bool ha = a == a, hb = b == b;
        nu += w;
        d0 += ha ? w : 0.0;
        n0 += ha ? w * a : 0.0;
        d1 += hb ? w : 0.0;
        n1 += hb ? w * b : 0.0;
      }
      part.nu += nu;
      part.den[0] += d0;
      part.num[0] += n0;
      part.den[1] += d1;
      part.num[1] += n1;
    }
    total += part;
  }
  return total;
}

}  // namespace detail

/// Sums of K_h(x - X_u) (all nodes), and per type of K_h and K_h X_{u,t}
/// over complete pairs, for nodes [begin, end) of the table.
inline KernelSums kernel_sums(const ParentTable& t, const KernelSpec& k, double h, double x,
                              std::size_t begin, std::size_t end, std::size_t block = 0) {
  const double inv_h = 1.0 / h;
  if (k.shape() == KernelShape::gaussian) {
    const double scale = k(0.0) * inv_h;
    return detail::kernel_sums_impl(
        t,
        [=](double xi) {
          const double z = (x - xi) * inv_h;
          return scale * std::exp(-0.5 * z * z);
        },
        begin, end, block);
  }
  return detail::kernel_sums_impl(
      t,
      [=](double xi) {
        const double z = (x - xi) * inv_h;
        return z * z < 1.0 ? 0.75 * (1.0 - z * z) * inv_h : 0.0;
      },
      begin, end, block);
}

/// Plain estimate at x with bandwidth h and denominator threshold.
inline PointEstimate estimate_point(const ParentTable& t, const KernelSpec& k, double h,
                                    double threshold, double x, std::size_t block = 0) {
  if (t.node_count() == 0) throw DataError("no observed nodes in T_n");
  const KernelSums s = kernel_sums(t, k, h, x, 0, t.node_count(), block);
  PointEstimate p;
  p.x = x;
  p.nu = static_cast<double>(s.nu / static_cast<long double>(t.node_count()));
  for (int c = 0; c < 2; ++c) {
    if (t.pair_count[c] == 0) continue;
    const long double n = static_cast<long double>(t.pair_count[c]);
    const long double den = std::max(s.den[c] / n, static_cast<long double>(threshold));
    if (den > 0) p.f[c] = static_cast<double>((s.num[c] / n) / den);
  }
  return p;
}

/// Recursive estimate: generation m uses h_m = 2^(-m alpha); one ratio of
/// the accumulated sums, no threshold.
inline PointEstimate estimate_recursive_point(const ParentTable& t, const KernelSpec& k,
                                              double alpha, double x, std::size_t block = 0) {
  if (t.node_count() == 0) throw DataError("no observed nodes in T_n");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  KernelSums s;
  for (int m = 0; m <= t.n; ++m) {
    const double h = std::pow(2.0, -m * alpha);
    s += kernel_sums(t, k, h, x, t.generation_begin[static_cast<std::size_t>(m)],
                     t.generation_begin[static_cast<std::size_t>(m) + 1], block);
  }
  PointEstimate p;
  p.x = x;
  p.nu = static_cast<double>(s.nu / static_cast<long double>(t.node_count()));
  for (int c = 0; c < 2; ++c)
    if (s.den[c] > 0) p.f[c] = static_cast<double>(s.num[c] / s.den[c]);
  return p;
}

/// Affine debiasing (fa - w fb) / (1 - w); undefined when w = 1 (N = 1).
inline std::optional<double> bierens_combine(std::optional<double> fa, std::optional<double> fb,
                                             double w) {
  if (!fa || !fb || !(w < 1.0)) return std::nullopt;
  return (*fa - w * *fb) / (1.0 - w);
}

/// Debiased estimate from bandwidths h_a and h_b; nu uses h_a.
inline PointEstimate estimate_bierens_point(const ParentTable& t, const KernelSpec& k,
                                            const BierensConfig& b, double threshold, double x,
                                            std::size_t block = 0) {
  const double n = t.sample_size();
  if (!(n >= 1.0)) throw DataError("no parent with an observed child");
  const PointEstimate a = estimate_point(t, k, b.bandwidth_a(n), threshold, x, block);
  const PointEstimate bb = estimate_point(t, k, b.bandwidth_b(n), threshold, x, block);
  const double w = b.weight(n);
  PointEstimate p;
  p.x = x;
  p.nu = a.nu;
  for (int c = 0; c < 2; ++c) p.f[c] = bierens_combine(a.f[c], bb.f[c], w);
  return p;
}

// ---------------------------------------------------------------------------
// Tree-level entry points

/// nu_hat(x) = (1 / N_obs) sum_{u in T_n observed} K_h(x - X_u).
inline double estimate_invariant_density(const BinaryTreeData& tree, const EstimatorConfig& cfg,
                                         double x, std::optional<int> n = {}) {
  const ParentTable t = make_parent_table(tree, n);
  if (t.node_count() == 0) throw DataError("empty T_n");
  return estimate_point(t, cfg.kernel, cfg.bandwidth_for(t), cfg.threshold, x, cfg.block_size).nu;
}

inline std::array<std::optional<double>, 2> estimate_autoregression(
    const BinaryTreeData& tree, const EstimatorConfig& cfg, double x, std::optional<int> n = {}) {
  const ParentTable t = make_parent_table(tree, n);
  if (t.pair_count[0] == 0 || t.pair_count[1] == 0)
    throw DataError("estimator needs observed pairs of both types");
  return estimate_point(t, cfg.kernel, cfg.bandwidth_for(t), cfg.threshold, x, cfg.block_size).f;
}

inline std::array<std::optional<double>, 2> estimate_recursive(const BinaryTreeData& tree,
                                                               const KernelSpec& kernel,
                                                               double alpha, double x) {
  const ParentTable t = make_parent_table(tree);
  return estimate_recursive_point(t, kernel, alpha, x).f;
}

inline std::array<std::optional<double>, 2> estimate_bierens(const BinaryTreeData& tree,
                                                             const KernelSpec& kernel,
                                                             const BierensConfig& b, double x,
                                                             double threshold = 0.0) {
  const ParentTable t = make_parent_table(tree);
  return estimate_bierens_point(t, kernel, b, threshold, x).f;
}

// ---------------------------------------------------------------------------
// Curves

struct CurveEstimate {
  EstimatorKind kind = EstimatorKind::plain;
  std::vector<double> x;
  std::vector<double> nu;
  std::array<std::vector<double>, 2> f;
  /// Bit t set when f_t is undefined at that point.
  std::vector<std::uint8_t> flag;
  double bandwidth = 0.0;
  double sample_size = 0.0;

  std::size_t flagged_points() const {
    std::size_t c = 0;
    for (auto v : flag) c += v != 0;
    return c;
  }
};

struct CurveRequest {
  EstimatorKind kind = EstimatorKind::plain;
  EstimatorConfig config;
  BierensConfig bierens;
};

inline PointEstimate estimate_at(const ParentTable& t, const CurveRequest& r, double x) {
  switch (r.kind) {
    case EstimatorKind::plain:
      return estimate_point(t, r.config.kernel, r.config.bandwidth_for(t), r.config.threshold, x,
                            r.config.block_size);
    case EstimatorKind::recursive:
      return estimate_recursive_point(t, r.config.kernel, r.config.bandwidth.exponent, x,
                                      r.config.block_size);
    case EstimatorKind::bierens:
      return estimate_bierens_point(t, r.config.kernel, r.bierens, r.config.threshold, x,
                                    r.config.block_size);
  }
  return {};
}

/// Applies the requested estimator at each point.
inline CurveEstimate evaluate_curve(const ParentTable& t, const CurveRequest& r,
                                    const std::vector<double>& points) {
  if (t.node_count() == 0) throw DataError("empty T_n");
  CurveEstimate c;
  c.kind = r.kind;
  c.sample_size = t.sample_size();
  c.bandwidth = r.kind == EstimatorKind::bierens ? r.bierens.bandwidth_a(c.sample_size)
                : r.kind == EstimatorKind::recursive ? std::pow(2.0, -t.n * r.config.bandwidth.exponent)
                                                     : r.config.bandwidth_for(t);
  const std::size_t k = points.size();
  c.x = points;
  c.nu.assign(k, 0.0);
  c.f[0].assign(k, 0.0);
  c.f[1].assign(k, 0.0);
  c.flag.assign(k, 0);
  parallel_for(k, r.config.threads, [&](std::size_t j) {
    const PointEstimate p = estimate_at(t, r, points[j]);
    c.nu[j] = p.nu;
    for (int i = 0; i < 2; ++i) {
      if (p.f[i]) {
        c.f[i][j] = *p.f[i];
      } else {
        c.f[i][j] = std::numeric_limits<double>::quiet_NaN();
        c.flag[j] |= static_cast<std::uint8_t>(1u << i);
      }
    }
  });
  return c;
}

inline CurveEstimate evaluate_curve(const ParentTable& t, const CurveRequest& r) {
  return evaluate_curve(t, r, r.config.grid.points(t.sample_size()));
}

inline CurveEstimate evaluate_curve(const BinaryTreeData& tree, const CurveRequest& r) {
  return evaluate_curve(make_parent_table(tree), r);
}

inline void write_curve_csv(std::ostream& out, const CurveEstimate& c) {
  out << "x,nu_hat,f0_hat,f1_hat,flag\n";
  auto fmt = [](double v) { return std::isnan(v) ? std::string("nan") : detail::format_real(v); };
  for (std::size_t j = 0; j < c.x.size(); ++j)
    out << fmt(c.x[j]) << ',' << fmt(c.nu[j]) << ',' << fmt(c.f[0][j]) << ',' << fmt(c.f[1][j])
        << ',' << static_cast<int>(c.flag[j]) << '\n';
}

// ---------------------------------------------------------------------------
// Noise covariance

/// Residuals of one parent; empty when that child is missing.
struct ResidualPair {
  std::optional<double> e0;
  std::optional<double> e1;
};

struct NoiseCovarianceEstimate {
  double var0 = 0.0;
  double var1 = 0.0;
  /// Empty when a variance is zero or no parent has both children.
  std::optional<double> rho;

  double rho_or_throw() const {
    if (!rho) throw DataError("residual correlation undefined (zero residual variance)");
    return *rho;
  }
};

/// sigma_t^2 = mean of squared type-t residuals; rho = mean(e0 e1) / (s0 s1)
/// over parents with both children.
inline NoiseCovarianceEstimate noise_covariance_from_residuals(
    const std::vector<ResidualPair>& residuals) {
  long double ss[2] = {0, 0};
  long double cross = 0;
  std::size_t n[2] = {0, 0};
  std::size_t both = 0;
  for (const auto& r : residuals) {
    if (r.e0) {
      ss[0] += *r.e0 * *r.e0;
      ++n[0];
    }
    if (r.e1) {
      ss[1] += *r.e1 * *r.e1;
      ++n[1];
    }
    if (r.e0 && r.e1) {
      cross += *r.e0 * *r.e1;
      ++both;
    }
  }
  if (n[0] == 0 || n[1] == 0) throw DataError("residuals of both types are required");
  NoiseCovarianceEstimate e;
  e.var0 = static_cast<double>(ss[0] / n[0]);
  e.var1 = static_cast<double>(ss[1] / n[1]);
  if (e.var0 > 0.0 && e.var1 > 0.0 && both > 0)
    e.rho = static_cast<double>(cross / both) / std::sqrt(e.var0 * e.var1);
  return e;
}

/**
 * Residuals X_{u,t} - f_t(X_u) for the observed pairs, with f given by
 * `estimator` (x -> pointwise pair), then the empirical covariance.
 */
template <typename Estimator>
  requires std::convertible_to<std::invoke_result_t<Estimator&, double>,
                               std::array<std::optional<double>, 2>>
NoiseCovarianceEstimate estimate_noise_covariance(const ParentTable& t, Estimator&& estimator,
                                                  unsigned threads = 1) {
  std::vector<ResidualPair> res(t.node_count());
  parallel_for(t.node_count(), threads, [&](std::size_t i) {
    const bool h0 = ParentTable::has(t.child[0][i]);
    const bool h1 = ParentTable::has(t.child[1][i]);
    if (!h0 && !h1) return;
    const std::array<std::optional<double>, 2> f = estimator(t.x[i]);
    if ((h0 && !f[0]) || (h1 && !f[1]))
      throw DataError("estimator undefined at parent trait " + std::to_string(t.x[i]));
    if (h0) res[i].e0 = t.child[0][i] - *f[0];
    if (h1) res[i].e1 = t.child[1][i] - *f[1];
  });
  return noise_covariance_from_residuals(res);
}

/// Residuals of the plain estimator with the given bandwidth.
inline NoiseCovarianceEstimate estimate_noise_covariance(const ParentTable& t,
                                                         const KernelSpec& k, double h,
                                                         double threshold = 0.0,
                                                         unsigned threads = 1) {
  return estimate_noise_covariance(
      t, [&](double x) { return estimate_point(t, k, h, threshold, x).f; }, threads);
}

}  // namespace nbar
