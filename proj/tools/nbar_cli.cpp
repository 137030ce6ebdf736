// Command-line front end: simulation, estimation, the asymmetry test,
// assumption checks, ingestion and the Monte Carlo studies.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nbar/nbar.hpp"

namespace {

using nlohmann::json;
using nbar::ConfigError;
using nbar::DataError;

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

struct Global {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

// Writes to --out, or stdout when it is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  write(f);
  if (!f) throw ConfigError("error writing " + path);
}

void emit_json(const std::string& path, const json& j) {
  emit(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

nbar::BinaryTreeData load_tree(const std::string& path) { return nbar::ingest_pairs(path); }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("bad number '" + item + "' in list '" + s + "'");
    }
  }
  if (v.empty()) throw ConfigError("empty list");
  return v;
}

// "lo:hi:mesh" (regular), "lo:hi" with count (equidistant), or "x1,x2,...".
nbar::TestGrid parse_points(const std::string& s, int count) {
  if (s.find(':') == std::string::npos) return nbar::TestGrid(parse_list(s));
  if (count > 0) {
    const auto a = s.find(':');
    const auto b = s.find(':', a + 1);
    const double lo = parse_list(s.substr(0, a))[0];
    const double hi = parse_list(s.substr(a + 1, b == std::string::npos ? b : b - a - 1))[0];
    return nbar::TestGrid::equidistant(lo, hi, count);
  }
  const nbar::GridSpec g = nbar::parse_grid(s);
  if (!(g.mesh > 0.0)) throw ConfigError("test points need an explicit mesh");
  return nbar::TestGrid::regular(g.lo, g.hi, g.mesh);
}

// Flags shared by the Monte Carlo subcommands; unset flags keep the config
// file values.
struct StudyFlags {
  std::string config;
  std::optional<std::string> model;
  std::optional<std::string> model_json;
  std::optional<std::string> generations;
  std::optional<std::size_t> replicates;
  std::optional<std::string> kernel;
  std::optional<double> alpha;
  std::optional<double> bandwidth_constant;
  std::optional<std::string> grid;
  std::optional<int> beta;
  std::optional<double> delta;
  std::optional<double> mesh;
  std::optional<double> level;
  bool estimate_cov = false;
  std::optional<std::string> taus;
  std::string csv;

  void add_to(CLI::App* app, bool test_flags) {
    app->add_option("--config", config, "Study configuration JSON");
    app->add_option("--model", model, "Builtin model name");
    app->add_option("--model-json", model_json, "Model specification JSON file");
    app->add_option("--generations", generations, "Comma-separated generations n");
    app->add_option("--replicates", replicates, "Monte Carlo replicates M");
    app->add_option("--kernel", kernel, "gaussian | epanechnikov");
    app->add_option("--alpha", alpha, "Bandwidth exponent");
    app->add_option("--bandwidth-constant", bandwidth_constant, "Bandwidth constant c");
    app->add_option("--grid", grid, "Evaluation grid lo:hi:mesh (mesh may be auto)");
    app->add_option("--csv", csv, "Also write the tidy CSV here");
    if (test_flags) {
      app->add_option("--beta", beta, "Smoothness beta");
      app->add_option("--delta", delta, "Second-bandwidth exponent factor");
      app->add_option("--mesh", mesh, "Test grid mesh");
      app->add_option("--level", level, "Test level");
      app->add_flag("--estimate-cov", estimate_cov, "Estimate the noise covariance");
    }
  }

  nbar::StudyConfig resolve(const Global& g) const {
    json j = config.empty() ? json::object() : read_json_file(config);
    if (model_json) j["model_spec"] = read_json_file(*model_json);
    nbar::StudyConfig c = nbar::study_config_from_json(j);
    if (model) {
      c.model = *model;
      c.model_json.reset();
    }
    if (generations) {
      c.generations.clear();
      for (double v : parse_list(*generations)) c.generations.push_back(static_cast<int>(v));
    }
    if (replicates) c.replicates = *replicates;
    if (kernel) c.kernel = *kernel;
    if (alpha) c.alpha = *alpha;
    if (bandwidth_constant) c.bandwidth_constant = *bandwidth_constant;
    if (grid) {
      const auto gs = nbar::parse_grid(*grid);
      c.grid_lo = gs.lo;
      c.grid_hi = gs.hi;
      c.grid_mesh = gs.mesh;
    }
    if (beta) c.beta = *beta;
    if (delta) c.delta = *delta;
    if (mesh) c.test_mesh = *mesh;
    if (level) c.level = *level;
    if (estimate_cov) c.estimate_covariance = true;
    if (taus) c.taus = parse_list(*taus);
    if (g.seed) c.seed = *g.seed;
    c.threads = g.threads;
    c.validate();
    return c;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Nonlinear bifurcating autoregression: simulation, estimation and testing"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Base random seed")->group("Global");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->group("Global");
  app.add_option("--out", g.out, "Output file (default stdout)")->group("Global");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate one tree and write node,value CSV");
  std::string sim_model = "paper-neq";
  std::string sim_model_json;
  int sim_depth = 0;
  sim->add_option("--model", sim_model, "Builtin model name");
  sim->add_option("--model-json", sim_model_json, "Model specification JSON file");
  sim->add_option("--depth", sim_depth, "Last generation n + 1")->required();

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate nu, f0 and f1 on a grid");
  std::string est_tree, est_kind = "plain", est_kernel = "gaussian", est_grid = "-3:3:auto";
  double est_alpha = 0.2, est_c = 1.0, est_threshold = 0.0, est_delta = 0.5;
  int est_beta = 2;
  std::optional<double> est_h;
  std::size_t est_block = 0;
  est->add_option("--tree", est_tree, "Tree CSV (node,value or pair format)")->required();
  est->add_option("--kind", est_kind, "plain | recursive | bierens");
  est->add_option("--alpha", est_alpha, "Bandwidth exponent");
  est->add_option("--bandwidth-constant", est_c, "Bandwidth constant c");
  est->add_option("--bandwidth", est_h, "Fixed bandwidth (plain only)");
  est->add_option("--threshold", est_threshold, "Denominator threshold");
  est->add_option("--beta", est_beta, "Smoothness beta (bierens)");
  est->add_option("--delta", est_delta, "Second-bandwidth exponent factor (bierens)");
  est->add_option("--grid", est_grid, "lo:hi:mesh, mesh may be auto");
  est->add_option("--kernel", est_kernel, "gaussian | epanechnikov");
  est->add_option("--block", est_block, "Partial-sum block length");

  // test
  auto* tst = app.add_subcommand("test", "Wald test of f0 = f1 at grid points");
  std::string tst_tree, tst_points = "-3:3:0.5", tst_kernel = "gaussian";
  int tst_beta = 2, tst_count = 0;
  double tst_delta = 0.5, tst_level = 0.05;
  std::optional<double> tst_s0, tst_s1, tst_rho, tst_ca, tst_cb;
  bool tst_est = false, tst_silverman = false;
  tst->add_option("--tree", tst_tree, "Tree CSV")->required();
  tst->add_option("--points", tst_points, "lo:hi:mesh, lo:hi with --count, or x1,x2,...");
  tst->add_option("--count", tst_count, "Number of equidistant points on lo:hi");
  tst->add_option("--beta", tst_beta, "Smoothness beta");
  tst->add_option("--delta", tst_delta, "Second-bandwidth exponent factor");
  tst->add_option("--level", tst_level, "Test level");
  tst->add_option("--kernel", tst_kernel, "gaussian | epanechnikov");
  auto* s0_opt = tst->add_option("--sigma0", tst_s0, "Known noise sd of type 0");
  tst->add_option("--sigma1", tst_s1, "Known noise sd of type 1");
  tst->add_option("--rho", tst_rho, "Known noise correlation");
  tst->add_flag("--estimate-cov", tst_est, "Estimate the noise covariance")->excludes(s0_opt);
  tst->add_option("--constant-a", tst_ca, "Constant of the first bandwidth");
  tst->add_option("--constant-b", tst_cb, "Constant of the second bandwidth");
  tst->add_flag("--silverman", tst_silverman, "Bandwidth constants from Silverman's rule");

  // check
  auto* chk = app.add_subcommand("check", "Numeric checks of the ergodicity assumptions");
  double chk_gamma = 0.25, chk_ell = 0.5, chk_s0 = 1, chk_s1 = 1, chk_rho = 0.3;
  double chk_lambda = 4.0;
  std::string chk_m2 = "1,2,4,8,16";
  std::optional<std::string> chk_model;
  chk->add_option("--gamma", chk_gamma, "Contraction gamma");
  chk->add_option("--ell", chk_ell, "Offset ell");
  chk->add_option("--sigma0", chk_s0, "Noise sd of type 0");
  chk->add_option("--sigma1", chk_s1, "Noise sd of type 1");
  chk->add_option("--rho", chk_rho, "Noise correlation");
  chk->add_option("--lambda", chk_lambda, "Tail exponent for the eta bound");
  chk->add_option("--m2", chk_m2, "M2 values to scan");
  chk->add_option("--model", chk_model, "Also check |f(x)| <= gamma|x| + ell for this model");

  // ingest
  auto* ing = app.add_subcommand("ingest", "Read a tree or pair file and summarize it");
  std::string ing_file, ing_tree_out;
  ing->add_option("file", ing_file, "Input CSV")->required();
  ing->add_option("--tree-out", ing_tree_out, "Write the tree in node,value format");

  // Monte Carlo studies
  auto* mce = app.add_subcommand("mc-error", "Relative error study");
  StudyFlags fe;
  fe.add_to(mce, false);
  auto* mcr = app.add_subcommand("mc-reject", "Rejection proportions of the asymmetry test");
  StudyFlags fr;
  fr.add_to(mcr, true);
  auto* mcp = app.add_subcommand("mc-power", "Power of the asymmetry test along tau");
  StudyFlags fp;
  fp.add_to(mcp, true);
  mcp->add_option("--taus", fp.taus, "Comma-separated tau values in [1/8, 1/4]");
  auto* bnd = app.add_subcommand("bands", "Pointwise Monte Carlo bands of f0 and f1");
  StudyFlags fb;
  fb.add_to(bnd, false);
  int bnd_n = 10;
  double bnd_level = 0.95;
  bnd->add_option("--n", bnd_n, "Generation n");
  bnd->add_option("--band-level", bnd_level, "Coverage of the bands");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  const std::uint64_t seed = g.seed.value_or(1);

  if (*sim) {
    const nbar::ModelSpec m = sim_model_json.empty()
                                  ? nbar::builtin_model(sim_model)
                                  : nbar::model_from_json(read_json_file(sim_model_json));
    if (m.sd_functions) nbar::check_sd_functions(m);
    const auto tree = nbar::simulate_nbar(m, sim_depth, seed);
    emit(g.out, [&](std::ostream& o) { nbar::write_tree_csv(o, tree); });
  } else if (*est) {
    const auto tree = load_tree(est_tree);
    nbar::CurveRequest r;
    r.kind = nbar::parse_estimator_kind(est_kind);
    r.config.kernel = nbar::KernelSpec(nbar::parse_kernel_shape(est_kernel));
    r.config.bandwidth = nbar::BandwidthRule(est_alpha, est_c);
    r.config.fixed_bandwidth = est_h;
    r.config.threshold = est_threshold;
    r.config.grid = nbar::parse_grid(est_grid);
    r.config.block_size = est_block;
    r.config.threads = g.threads;
    r.bierens = nbar::BierensConfig(est_beta, est_delta, est_c, est_c);
    if (est_threshold < 0.0) throw ConfigError("threshold must be >= 0");
    const auto curve = nbar::evaluate_curve(tree, r);
    if (curve.flagged_points() > 0)
      std::cerr << "warning: " << curve.flagged_points()
                << " grid points have an undefined estimate (flag column)\n";
    emit(g.out, [&](std::ostream& o) { nbar::write_curve_csv(o, curve); });
  } else if (*tst) {
    const auto tree = load_tree(tst_tree);
    const auto table = nbar::make_parent_table(tree);
    const nbar::KernelSpec kernel(nbar::parse_kernel_shape(tst_kernel));
    nbar::BierensConfig b(tst_beta, tst_delta);
    if (tst_silverman) b = nbar::silverman_bierens(table, tst_beta, tst_delta);
    if (tst_ca) b.constant_a = *tst_ca;
    if (tst_cb) b.constant_b = *tst_cb;
    b.validate();
    nbar::VarianceInputs v = nbar::VarianceInputs::estimated();
    if (!tst_est) {
      if (!tst_s0 || !tst_s1 || !tst_rho)
        throw ConfigError("give --sigma0, --sigma1 and --rho, or --estimate-cov");
      v = nbar::VarianceInputs::known(*tst_s0, *tst_s1, *tst_rho);
    }
    const auto grid = parse_points(tst_points, tst_count);
    const auto r = nbar::asymmetry_test(table, kernel, b, grid, tst_level, v, g.threads);
    json j = nbar::to_json(r);
    j["bandwidth_a"] = b.bandwidth_a(table.sample_size());
    j["bandwidth_b"] = b.bandwidth_b(table.sample_size());
    j["weight"] = b.weight(table.sample_size());
    emit_json(g.out, j);
  } else if (*chk) {
    const nbar::NoiseModel noise(chk_s0, chk_s1, chk_rho);
    json j;
    j["gamma"] = chk_gamma;
    j["ell"] = chk_ell;
    j["noise"] = {{"sigma0", chk_s0}, {"sigma1", chk_s1}, {"rho", chk_rho}};
    j["delta"] = {{"M0", nbar::marginal_delta(noise, 0.0)}};
    j["assumption1"] = nbar::to_json(nbar::check_assumption1(chk_gamma, chk_ell, noise));
    j["assumption2"] =
        nbar::to_json(nbar::check_assumption2(chk_gamma, chk_ell, noise, parse_list(chk_m2), chk_lambda));
    if (chk_model) {
      const auto m = nbar::builtin_model(*chk_model);
      const auto grid = nbar::linspace(-100, 100, 200001);
      for (int t = 0; t < 2; ++t) {
        const auto rep = nbar::check_function_class(m.pair[t].fn, chk_gamma, chk_ell, grid);
        j["function_class"]["f" + std::to_string(t)] = {{"pass", rep.pass},
                                                        {"worst_x", rep.worst_x},
                                                        {"worst_excess", rep.worst_excess},
                                                        {"minimal_ell", rep.minimal_ell}};
      }
    }
    emit_json(g.out, j);
  } else if (*ing) {
    const auto tree = load_tree(ing_file);
    if (!ing_tree_out.empty())
      emit(ing_tree_out, [&](std::ostream& o) { nbar::write_tree_csv(o, tree); });
    emit_json(g.out, nbar::to_json(nbar::summarize(tree)));
  } else if (*mce) {
    const auto c = fe.resolve(g);
    const auto rep = nbar::run_error_study(c);
    if (!fe.csv.empty()) emit(fe.csv, [&](std::ostream& o) { nbar::write_error_csv(o, rep); });
    emit_json(g.out, nbar::to_json(rep));
  } else if (*mcr) {
    const auto c = fr.resolve(g);
    const auto rep = nbar::run_rejection_study(c);
    if (!fr.csv.empty()) emit(fr.csv, [&](std::ostream& o) { nbar::write_rejection_csv(o, rep); });
    emit_json(g.out, nbar::to_json(rep));
  } else if (*mcp) {
    const auto c = fp.resolve(g);
    const auto rep = nbar::run_power_study(c);
    if (!fp.csv.empty()) emit(fp.csv, [&](std::ostream& o) { nbar::write_rejection_csv(o, rep); });
    emit_json(g.out, nbar::to_json(rep));
  } else if (*bnd) {
    const auto c = fb.resolve(g);
    const auto s = nbar::run_band_study(c, bnd_n, bnd_level);
    for (const auto& b : s.bands)
      if (b.warning) std::cerr << "warning: " << *b.warning << '\n';
    emit(g.out, [&](std::ostream& o) { nbar::write_bands_csv(o, s); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
