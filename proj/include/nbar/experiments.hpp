#pragma once

/** @file
 * Monte Carlo studies (estimation error, rejection rates, power), empirical
 * confidence bands, and ingestion of lineage data files.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbar/asymmetry_test.hpp"
#include "nbar/errors.hpp"
#include "nbar/estimators.hpp"
#include "nbar/model.hpp"
#include "nbar/parallel.hpp"
#include "nbar/random.hpp"
#include "nbar/simulate.hpp"
#include "nbar/tree.hpp"

namespace nbar {

/// ||f_hat - f|| / ||f|| with the root-mean-square norm over the grid.
inline double empirical_relative_error(const std::vector<double>& estimate,
                                       const std::function<double(double)>& truth,
                                       const std::vector<double>& grid) {
  if (estimate.size() != grid.size()) throw ConfigError("estimate and grid sizes differ");
  long double diff = 0;
  long double norm = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double f = truth(grid[j]);
    if (std::isnan(estimate[j])) throw DataError("estimate undefined at x=" + std::to_string(grid[j]));
    diff += (estimate[j] - f) * (estimate[j] - f);
    norm += static_cast<long double>(f) * f;
  }
  if (!(norm > 0)) throw DataError("true function has zero norm on the grid");
  return static_cast<double>(std::sqrt(diff / norm));
}

/// Least-squares slope of ys against xs.
inline double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ConfigError("slope needs >= 2 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// Shared configuration of all Monte Carlo studies.
struct StudyConfig {
  std::string model = "paper-neq";
  /// Optional explicit model (overrides `model` when set).
  std::optional<nlohmann::json> model_json;
  std::vector<int> generations{10};
  std::size_t replicates = 100;
  std::uint64_t seed = 1;

  std::string kernel = "gaussian";
  double alpha = 0.2;
  double bandwidth_constant = 1.0;
  double threshold = 0.0;
  double grid_lo = -3.0;
  double grid_hi = 3.0;
  /// 0 = |T_n|^(-1/2).
  double grid_mesh = 0.0;

  int beta = 2;
  double delta = 0.5;
  double test_mesh = 0.5;
  double level = 0.05;
  bool estimate_covariance = false;
  std::vector<double> taus;

  /// Not part of the report: results never depend on it.
  unsigned threads = 1;

  ModelSpec model_spec() const {
    if (model_json) return model_from_json(*model_json);
    return builtin_model(model);
  }

  void validate() const {
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (generations.empty()) throw ConfigError("at least one generation is required");
    for (int n : generations)
      if (n < 0 || n + 1 > kMaxDepth) throw ConfigError("generation out of range");
    (void)parse_kernel_shape(kernel);
    BandwidthRule(alpha, bandwidth_constant);
    BierensConfig(beta, delta);
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
    if (!(test_mesh > 0.0)) throw ConfigError("test mesh must be > 0");
  }
};

inline nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json j = {{"model", c.model},
                      {"generations", c.generations},
                      {"replicates", c.replicates},
                      {"seed", c.seed},
                      {"kernel", c.kernel},
                      {"alpha", c.alpha},
                      {"bandwidth_constant", c.bandwidth_constant},
                      {"threshold", c.threshold},
                      {"grid", {c.grid_lo, c.grid_hi, c.grid_mesh}},
                      {"beta", c.beta},
                      {"delta", c.delta},
                      {"test_mesh", c.test_mesh},
                      {"level", c.level},
                      {"estimate_covariance", c.estimate_covariance},
                      {"taus", c.taus}};
  if (c.model_json) j["model_spec"] = *c.model_json;
  return j;
}

inline StudyConfig study_config_from_json(const nlohmann::json& j) {
  try {
    StudyConfig c;
    if (j.contains("model")) {
      if (j["model"].is_string())
        c.model = j["model"].get<std::string>();
      else {
        c.model_json = j["model"];
        c.model = j["model"].value("name", std::string("custom"));
      }
    }
    if (j.contains("model_spec")) c.model_json = j["model_spec"];
    c.generations = j.value("generations", c.generations);
    c.replicates = j.value("replicates", c.replicates);
    c.seed = j.value("seed", c.seed);
    c.kernel = j.value("kernel", c.kernel);
    c.alpha = j.value("alpha", c.alpha);
    c.bandwidth_constant = j.value("bandwidth_constant", c.bandwidth_constant);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("grid")) {
      const auto g = j["grid"].get<std::vector<double>>();
      if (g.size() != 3) throw ConfigError("grid must be [lo, hi, mesh]");
      c.grid_lo = g[0];
      c.grid_hi = g[1];
      c.grid_mesh = g[2];
    }
    c.beta = j.value("beta", c.beta);
    c.delta = j.value("delta", c.delta);
    c.test_mesh = j.value("test_mesh", c.test_mesh);
    c.level = j.value("level", c.level);
    c.estimate_covariance = j.value("estimate_covariance", c.estimate_covariance);
    c.taus = j.value("taus", c.taus);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("study config: ") + e.what());
  }
}

namespace detail {

inline std::pair<double, double> mean_and_sd(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  const long double mu = s / v.size();
  long double ss = 0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return {static_cast<double>(mu), static_cast<double>(std::sqrt(ss / v.size()))};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimation error

struct ErrorStudyRow {
  int n = 0;
  std::uint64_t tree_size = 0;
  std::size_t grid_points = 0;
  std::array<double, 2> mean_error{0, 0};
  std::array<double, 2> sd_error{0, 0};
  std::array<std::vector<double>, 2> errors;
};

struct ErrorStudyReport {
  StudyConfig config;
  std::vector<ErrorStudyRow> rows;
  /// Slope of log mean error vs log |T_n| (when >= 2 generations).
  std::optional<std::array<double, 2>> slope;
};

/// Plain-estimator errors for one simulated tree of depth n + 1.
inline std::array<double, 2> replicate_errors(const ModelSpec& model, const StudyConfig& c, int n,
                                              std::uint64_t seed) {
  const auto tree = simulate_nbar(model, n + 1, seed);
  const auto table = make_parent_table(tree, n);
  CurveRequest r;
  r.kind = EstimatorKind::plain;
  r.config.kernel = KernelSpec(parse_kernel_shape(c.kernel));
  r.config.bandwidth = BandwidthRule(c.alpha, c.bandwidth_constant);
  r.config.threshold = c.threshold;
  r.config.grid = {c.grid_lo, c.grid_hi, c.grid_mesh};
  const CurveEstimate curve = evaluate_curve(table, r);
  return {empirical_relative_error(curve.f[0], model.pair.f0.fn, curve.x),
          empirical_relative_error(curve.f[1], model.pair.f1.fn, curve.x)};
}

inline ErrorStudyReport run_error_study(const StudyConfig& c) {
  c.validate();
  const ModelSpec model = c.model_spec();
  ErrorStudyReport rep;
  rep.config = c;
  for (int n : c.generations) {
    ErrorStudyRow row;
    row.n = n;
    row.tree_size = full_tree_size(n);
    row.grid_points = GridSpec{c.grid_lo, c.grid_hi, c.grid_mesh}
                          .points(static_cast<double>(row.tree_size))
                          .size();
    row.errors[0].assign(c.replicates, 0.0);
    row.errors[1].assign(c.replicates, 0.0);
    parallel_for(c.replicates, c.threads, [&](std::size_t i) {
      std::array<double, 2> e;
      try {
        e = replicate_errors(model, c, n, replicate_seed(c.seed, i));
      } catch (const DataError& err) {
        throw DataError("replicate " + std::to_string(i) + ", n=" + std::to_string(n) + ": " +
                        err.what());
      }
      row.errors[0][i] = e[0];
      row.errors[1][i] = e[1];
    });
    for (int t = 0; t < 2; ++t)
      std::tie(row.mean_error[t], row.sd_error[t]) = detail::mean_and_sd(row.errors[t]);
    rep.rows.push_back(std::move(row));
  }
  if (rep.rows.size() >= 2) {
    std::array<double, 2> s;
    for (int t = 0; t < 2; ++t) {
      std::vector<double> lx, ly;
      for (const auto& r : rep.rows) {
        lx.push_back(std::log(static_cast<double>(r.tree_size)));
        ly.push_back(std::log(r.mean_error[t]));
      }
      s[t] = least_squares_slope(lx, ly);
    }
    rep.slope = s;
  }
  return rep;
}

inline nlohmann::json to_json(const ErrorStudyReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"n", row.n},
                    {"tree_size", row.tree_size},
                    {"grid_points", row.grid_points},
                    {"mean_e0", row.mean_error[0]},
                    {"sd_e0", row.sd_error[0]},
                    {"mean_e1", row.mean_error[1]},
                    {"sd_e1", row.sd_error[1]},
                    {"e0", row.errors[0]},
                    {"e1", row.errors[1]}});
  nlohmann::json j = {{"study", "error"}, {"config", to_json(r.config)}, {"rows", rows}};
  if (r.slope) j["slope"] = {{"f0", (*r.slope)[0]}, {"f1", (*r.slope)[1]}};
  return j;
}

inline void write_error_csv(std::ostream& out, const ErrorStudyReport& r) {
  out << "n,tree_size,replicate,e0,e1\n";
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.errors[0].size(); ++i)
      out << row.n << ',' << row.tree_size << ',' << i << ','
          << detail::format_real(row.errors[0][i]) << ',' << detail::format_real(row.errors[1][i])
          << '\n';
}

// ---------------------------------------------------------------------------
// Rejection and power

struct RejectionRow {
  std::string label;
  int n = 0;
  std::uint64_t tree_size = 0;
  std::size_t k = 0;
  double proportion = 0.0;
  double mean_statistic = 0.0;
  std::vector<double> statistics;
  std::vector<std::uint8_t> rejected;
};

struct RejectionReport {
  std::string study;
  StudyConfig config;
  std::vector<RejectionRow> rows;
};

inline RejectionRow run_rejection_row(const ModelSpec& model, const StudyConfig& c, int n) {
  const KernelSpec kernel(parse_kernel_shape(c.kernel));
  const BierensConfig b(c.beta, c.delta, c.bandwidth_constant, c.bandwidth_constant);
  const TestGrid grid = TestGrid::regular(c.grid_lo, c.grid_hi, c.test_mesh);
  const VarianceInputs var =
      c.estimate_covariance
          ? VarianceInputs::estimated()
          : VarianceInputs::known(model.noise.sigma0(), model.noise.sigma1(), model.noise.rho());
  RejectionRow row;
  row.label = model.name;
  row.n = n;
  row.tree_size = full_tree_size(n);
  row.k = grid.size();
  row.statistics.assign(c.replicates, 0.0);
  row.rejected.assign(c.replicates, 0);
  parallel_for(c.replicates, c.threads, [&](std::size_t i) {
    const auto tree = simulate_nbar(model, n + 1, replicate_seed(c.seed, i));
    const auto table = make_parent_table(tree, n);
    const TestResult r = asymmetry_test(table, kernel, b, grid, c.level, var);
    row.statistics[i] = r.statistic;
    row.rejected[i] = r.reject ? 1 : 0;
  });
  std::size_t rej = 0;
  long double s = 0;
  for (std::size_t i = 0; i < c.replicates; ++i) {
    rej += row.rejected[i];
    s += row.statistics[i];
  }
  row.proportion = static_cast<double>(rej) / static_cast<double>(c.replicates);
  row.mean_statistic = static_cast<double>(s / c.replicates);
  return row;
}

/// Rejection proportions of the asymmetry test for the configured model at
/// each generation.
inline RejectionReport run_rejection_study(const StudyConfig& c) {
  c.validate();
  const ModelSpec model = c.model_spec();
  RejectionReport rep{"rejection", c, {}};
  for (int n : c.generations) rep.rows.push_back(run_rejection_row(model, c, n));
  return rep;
}

/// Rejection proportions for f1 = x(tau + e^{-x^2}/2), per tau and generation.
inline RejectionReport run_power_study(const StudyConfig& c) {
  c.validate();
  if (c.taus.empty()) throw ConfigError("power study needs a list of tau values");
  RejectionReport rep{"power", c, {}};
  for (double tau : c.taus) {
    const ModelSpec model = paper_tau_model(tau);
    for (int n : c.generations) rep.rows.push_back(run_rejection_row(model, c, n));
  }
  return rep;
}

inline nlohmann::json to_json(const RejectionReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"model", row.label},
                    {"n", row.n},
                    {"tree_size", row.tree_size},
                    {"k", row.k},
                    {"proportion", row.proportion},
                    {"mean_statistic", row.mean_statistic},
                    {"statistics", row.statistics}});
  return {{"study", r.study}, {"config", to_json(r.config)}, {"rows", rows}};
}

inline void write_rejection_csv(std::ostream& out, const RejectionReport& r) {
  out << "model,n,tree_size,k,replicate,statistic,rejected\n";
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.statistics.size(); ++i)
      out << row.label << ',' << row.n << ',' << row.tree_size << ',' << row.k << ',' << i << ','
          << detail::format_real(row.statistics[i]) << ',' << static_cast<int>(row.rejected[i])
          << '\n';
}

// ---------------------------------------------------------------------------
// Confidence bands

struct Bands {
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
  std::optional<std::string> warning;
};

/// Linear-interpolated empirical quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/**
 * Pointwise bands holding the central `level` fraction of the replicate
 * curves: quantiles (1 - level)/2 and (1 + level)/2 at each grid point.
 * curves[i][j] is replicate i at grid point j.
 */
inline Bands confidence_bands(const std::vector<double>& grid,
                              const std::vector<std::vector<double>>& curves, double level) {
  if (curves.empty()) throw ConfigError("bands need at least one curve");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  Bands b;
  b.x = grid;
  const std::size_t m = curves.size();
  if (static_cast<double>(m) < 1.0 / (1.0 - level) - 1e-9)
    b.warning = "only " + std::to_string(m) + " curves for a " + std::to_string(level) +
                " band; quantiles are unreliable";
  std::vector<double> col(m);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      if (curves[i].size() != grid.size()) throw ConfigError("curve length differs from grid");
      col[i] = curves[i][j];
    }
    std::sort(col.begin(), col.end());
    b.lower.push_back(sorted_quantile(col, 0.5 * (1.0 - level)));
    b.upper.push_back(sorted_quantile(col, 0.5 * (1.0 + level)));
  }
  return b;
}

struct BandStudy {
  std::vector<double> x;
  std::array<Bands, 2> bands;
  std::array<std::vector<double>, 2> truth;
  /// Replicate curves per type, [replicate][grid point].
  std::array<std::vector<std::vector<double>>, 2> curves;
};

/// Simulates `replicates` trees at generation n and bands both estimators.
inline BandStudy run_band_study(const StudyConfig& c, int n, double level) {
  c.validate();
  const ModelSpec model = c.model_spec();
  BandStudy s;
  const std::size_t m = c.replicates;
  s.curves[0].assign(m, {});
  s.curves[1].assign(m, {});
  std::vector<double> grid;
  parallel_for(m, c.threads, [&](std::size_t i) {
    const auto tree = simulate_nbar(model, n + 1, replicate_seed(c.seed, i));
    CurveRequest r;
    r.config.kernel = KernelSpec(parse_kernel_shape(c.kernel));
    r.config.bandwidth = BandwidthRule(c.alpha, c.bandwidth_constant);
    r.config.threshold = c.threshold;
    r.config.grid = {c.grid_lo, c.grid_hi, c.grid_mesh};
    const auto curve = evaluate_curve(make_parent_table(tree, n), r);
    s.curves[0][i] = curve.f[0];
    s.curves[1][i] = curve.f[1];
  });
  s.x = GridSpec{c.grid_lo, c.grid_hi, c.grid_mesh}.points(static_cast<double>(full_tree_size(n)));
  for (int t = 0; t < 2; ++t) {
    s.bands[t] = confidence_bands(s.x, s.curves[t], level);
    for (double x : s.x) s.truth[t].push_back(model.pair[t](x));
  }
  return s;
}

inline void write_bands_csv(std::ostream& out, const BandStudy& s) {
  out << "x,f0_true,f0_lower,f0_upper,f1_true,f1_lower,f1_upper\n";
  for (std::size_t j = 0; j < s.x.size(); ++j)
    out << detail::format_real(s.x[j]) << ',' << detail::format_real(s.truth[0][j]) << ','
        << detail::format_real(s.bands[0].lower[j]) << ','
        << detail::format_real(s.bands[0].upper[j]) << ','
        << detail::format_real(s.truth[1][j]) << ','
        << detail::format_real(s.bands[1].lower[j]) << ','
        << detail::format_real(s.bands[1].upper[j]) << '\n';
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestSummary {
  std::size_t node_count = 0;
  std::array<std::size_t, 2> pair_count{0, 0};
  int depth = -1;
};

inline IngestSummary summarize(const BinaryTreeData& tree) {
  IngestSummary s;
  s.node_count = tree.size();
  s.depth = tree.depth();
  s.pair_count = {collect_pairs(tree, 0).size(), collect_pairs(tree, 1).size()};
  return s;
}

inline nlohmann::json to_json(const IngestSummary& s) {
  return {{"nodes", s.node_count},
          {"pairs_type0", s.pair_count[0]},
          {"pairs_type1", s.pair_count[1]},
          {"depth", s.depth}};
}

/**
 * Reads either the tree format (`node,value`) or the pair format
 * (`parent_node,child_type,child_value`). In the pair format each row gives
 * the trait of node parent_node + child_type; an empty child_type gives the
 * trait of parent_node itself (needed for the root).
 */
inline BinaryTreeData ingest_pairs(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) return BinaryTreeData::from_map({});
  const auto h = detail::split_csv(header);
  if (h.size() == 2 && h[0] == "node" && h[1] == "value") {
    std::stringstream rest;
    rest << header << '\n' << in.rdbuf();
    return read_tree_csv(rest);
  }
  if (!(h.size() == 3 && h[0] == "parent_node" && h[1] == "child_type" && h[2] == "child_value"))
    throw DataError("line 1: expected header 'node,value' or "
                    "'parent_node,child_type,child_value'");
  std::map<std::uint64_t, double> nodes;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw DataError("line " + std::to_string(line_no) + ": expected 3 fields");
    NodePath node;
    try {
      node = NodePath::parse(f[0]);
      if (!f[1].empty()) {
        if (f[1] != "0" && f[1] != "1") throw DataError("child_type must be 0 or 1");
        node = node.child(f[1] == "1" ? 1 : 0);
      }
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    const double v = detail::parse_real(f[2], line_no);
    if (!nodes.emplace(node.heap_index(), v).second)
      throw DataError("line " + std::to_string(line_no) + ": duplicate node '" + node.str() + "'");
  }
  return BinaryTreeData::from_map(nodes);
}

inline BinaryTreeData ingest_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return ingest_pairs(in);
}

/// Debiasing configuration with both bandwidth constants set by Silverman's
/// rule on the parent traits.
inline BierensConfig silverman_bierens(const ParentTable& t, int beta, double delta) {
  const double c = silverman_scale(t.x);
  return BierensConfig(beta, delta, c, c);
}

}  // namespace nbar
