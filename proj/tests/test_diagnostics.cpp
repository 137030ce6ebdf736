#include <gtest/gtest.h>

#include <cmath>

#include "nbar/diagnostics.hpp"
#include "nbar/simulate.hpp"

using namespace nbar;

TEST(MarginalDelta, Values) {
  const NoiseModel unit(1, 1, 0.3);
  EXPECT_NEAR(marginal_delta(unit, 0.0), 0.398942, 1e-6);
  EXPECT_NEAR(marginal_delta(unit, 1.0), 0.241971, 1e-6);
  EXPECT_NEAR(marginal_delta(NoiseModel(1, 2, 0), 0.0), 0.199471, 1e-6);
  double prev = marginal_delta(unit, 0.0);
  for (double m = 0.1; m < 10; m += 0.1) {
    const double d = marginal_delta(unit, m);
    EXPECT_LE(d, prev);
    prev = d;
  }
  EXPECT_THROW(marginal_delta(unit, -1.0), ConfigError);
}

TEST(Assumption1, GammaTooLarge) {
  const auto r = check_assumption1(0.6, 0.5, NoiseModel(1, 1, 0.3));
  EXPECT_FALSE(r.satisfiable);
  EXPECT_FALSE(r.verified);
  EXPECT_NE(r.note.find("gamma >= 1/2"), std::string::npos);
}

TEST(Assumption1, PaperScaleUnverified) {
  const NoiseModel unit(1, 1, 0.3);
  const auto r = check_assumption1(0.25, 0.5, unit);
  EXPECT_NEAR(r.mean_abs_noise, 0.797885, 1e-6);
  EXPECT_NEAR(r.m0, 0.5 + 0.797885, 1e-6);
  EXPECT_TRUE(r.satisfiable);
  EXPECT_FALSE(r.verified);
  EXPECT_LT(r.best_value, 0.5);
  // The unconstrained maximum of 2 M phi(1.25 M + 0.5) bounds every scan.
  double top = 0;
  for (double m = 0; m < 20; m += 1e-4) top = std::max(top, 2 * m * marginal_delta(unit, 1.25 * m + 0.5));
  EXPECT_NEAR(top, 0.22, 0.01);
  EXPECT_LE(r.best_value, top);
}

TEST(Assumption1, ScanWideningIsMonotone) {
  const NoiseModel n(0.2, 0.2, 0.0);
  const auto narrow = check_assumption1(0.1, 0.05, n, 5.0);
  const auto wide = check_assumption1(0.1, 0.05, n, 100.0);
  EXPECT_GE(wide.best_value, narrow.best_value);
  if (narrow.verified) EXPECT_TRUE(wide.verified);
}

TEST(Assumption2, DeltaClauseAlwaysHolds) {
  const auto r = check_assumption2(0.25, 0.5, NoiseModel(1, 1, 0.3), {1, 2, 4});
  EXPECT_TRUE(r.delta_positive);
  EXPECT_GT(r.delta_m3, 0.0);
  EXPECT_GT(r.r, 0.0);
}

TEST(Assumption2, EtaTailIntegralDiverges) {
  // The inner integral over x tends to a positive constant as |y| grows,
  // so truncations grow without bound and the scan reports this.
  const NoiseModel unit(1, 1, 0.3);
  const double r = gaussian_tail_constant(unit, 4.0);
  const double a = eta_truncated(0.25, 0.5, unit, r, 4.0, 2.0, 200.0, 900.0);
  const double b = eta_truncated(0.25, 0.5, unit, r, 4.0, 2.0, 400.0, 1700.0);
  EXPECT_GT(b, 1.8 * a - 1.0);
  const auto rep = check_assumption2(0.25, 0.5, unit, {1, 2, 4});
  for (bool c : rep.eta_converged) EXPECT_FALSE(c);
  EXPECT_FALSE(rep.m2.has_value());
  EXPECT_FALSE(rep.verified);
  EXPECT_NE(rep.note.find("does not converge"), std::string::npos);
}

TEST(Assumption2, EtaNonincreasingInM2) {
  const NoiseModel unit(1, 1, 0.3);
  const double r = gaussian_tail_constant(unit, 4.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double m : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    const double v = eta_truncated(0.25, 0.5, unit, r, 4.0, m, 100.0, 500.0);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(FunctionClass, Examples) {
  const auto grid = linspace(-100, 100, 20001);
  EXPECT_TRUE(check_function_class([](double x) { return x / 4; }, 0.25, 0.01, grid).pass);
  const auto bad = check_function_class([](double x) { return x; }, 0.25, 1.0, linspace(0, 10, 11));
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.worst_x, 10.0);
  EXPECT_DOUBLE_EQ(bad.worst_excess, 10.0 - 2.5 - 1.0);
}

TEST(FunctionClass, PaperFunctions) {
  const auto m = builtin_model("paper-neq");
  const auto grid = linspace(-100, 100, 200001);
  for (int t = 0; t < 2; ++t) {
    EXPECT_TRUE(check_function_class(m.pair[t].fn, 0.5, 0.22, grid).pass);
    EXPECT_TRUE(check_function_class(m.pair[t].fn, 0.5, 0.5, grid).pass);
  }
  // With gamma = 1/4 the tightest offset for f0 is sup x e^{-x^2}/2 = 1/(2 sqrt(2e)).
  const auto r = check_function_class(m.pair.f0.fn, 0.25, 0.22, grid);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.minimal_ell, 0.5 / std::sqrt(2 * std::exp(1.0)), 1e-6);
  EXPECT_FALSE(check_function_class(m.pair.f0.fn, 0.25, 0.2, grid).pass);
}

TEST(ManyToOne, ConstantIsExact) {
  const auto r = many_to_one_check(builtin_model("paper-neq"), [](double) { return 1.0; }, 3, 200, 1);
  EXPECT_EQ(r.tree_mean, 1.0);
  EXPECT_EQ(r.chain_mean, 1.0);
  EXPECT_EQ(r.discrepancy, 0.0);
}

TEST(ManyToOne, IdentityAndAbs) {
  for (const char* name : {"paper-neq", "paper-eq"}) {
    const auto m = builtin_model(name);
    for (int gen : {1, 3}) {
      const auto a = many_to_one_check(m, [](double x) { return x; }, gen, 4000, 2);
      EXPECT_LE(a.discrepancy, 3 * a.standard_error) << name << " m=" << gen;
      const auto b = many_to_one_check(m, [](double x) { return std::abs(x); }, gen, 4000, 3);
      EXPECT_LE(b.discrepancy, 3 * b.standard_error) << name << " m=" << gen;
    }
  }
}

TEST(ManyToOne, ThreadInvariant) {
  const auto m = builtin_model("paper-neq");
  auto g = [](double x) { return x * x; };
  const auto a = many_to_one_check(m, g, 4, 300, 9, 1);
  const auto b = many_to_one_check(m, g, 4, 300, 9, 3);
  EXPECT_EQ(a.tree_mean, b.tree_mean);
  EXPECT_EQ(a.chain_mean, b.chain_mean);
}

TEST(ReportJson, Fields) {
  const auto j1 = to_json(check_assumption1(0.25, 0.5, NoiseModel(1, 1, 0.3)));
  EXPECT_FALSE(j1["verified"].get<bool>());
  EXPECT_TRUE(j1.contains("M0"));
  const auto j2 = to_json(check_assumption2(0.25, 0.5, NoiseModel(1, 1, 0.3), {1}));
  EXPECT_TRUE(j2["M2"].is_null());
  EXPECT_TRUE(j2["delta_positive"].get<bool>());
}
