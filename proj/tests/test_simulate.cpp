#include <gtest/gtest.h>

#include <cmath>

#include "nbar/simulate.hpp"
#include "nbar/special_functions.hpp"

using namespace nbar;

namespace {

ModelSpec zero_model(double root) {
  ModelSpec m;
  m.name = "zero";
  m.pair = {constant_function(0.0), constant_function(0.0), 0.5, 0.5};
  m.noise = NoiseModel::degenerate();
  m.root = RootLaw::point(root);
  return m;
}

}  // namespace

TEST(Philox, KnownAnswers) {
  // Random123 kat_vectors for philox4x32_10.
  using C = Philox4x32::Counter;
  EXPECT_EQ(Philox4x32(Philox4x32::Key{0, 0})(C{0, 0, 0, 0}),
            (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32(Philox4x32::Key{0xffffffff, 0xffffffff})(
                C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}),
            (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32(Philox4x32::Key{0xa4093822, 0x299f31d0})(
                C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}),
            (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(NoiseModel, Validation) {
  EXPECT_NO_THROW(NoiseModel(1, 1, 0.3));
  EXPECT_THROW(NoiseModel(1, 1, 1.0), ConfigError);
  EXPECT_THROW(NoiseModel(1, 1, -1.0), ConfigError);
  EXPECT_THROW(NoiseModel(0, 1, 0.0), ConfigError);
  EXPECT_THROW(NoiseModel(1, -2, 0.0), ConfigError);
}

TEST(NoiseModel, MarginalsIntegrateToOne) {
  const NoiseModel n(1.0, 2.5, 0.3);
  for (int t = 0; t < 2; ++t)
    EXPECT_NEAR(integrate([&](double x) { return n.marginal_density(t, x); }, -60, 60), 1.0, 1e-6);
  const auto c = n.covariance();
  EXPECT_DOUBLE_EQ(c[1], c[2]);
  EXPECT_GT(c[0] * c[3] - c[1] * c[2], 0.0);
}

TEST(DrawNoise, IndependentWhenRhoZero) {
  const NoiseModel n(1, 1, 0);
  const CounterRng rng(42);
  const int N = 100000;
  double s0 = 0, s1 = 0, s01 = 0, q0 = 0, q1 = 0;
  for (int i = 0; i < N; ++i) {
    const auto [a, b] = draw_noise(n, rng, static_cast<std::uint64_t>(i));
    s0 += a;
    s1 += b;
    s01 += a * b;
    q0 += a * a;
    q1 += b * b;
  }
  const double m0 = s0 / N, m1 = s1 / N;
  const double corr = (s01 / N - m0 * m1) /
                      std::sqrt((q0 / N - m0 * m0) * (q1 / N - m1 * m1));
  EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(N));
}

TEST(Simulate, DegenerateModel) {
  const auto t = simulate_nbar(zero_model(1.0), 2, 9);
  ASSERT_EQ(t.size(), 7u);
  EXPECT_EQ(*t.value(0), 1.0);
  for (std::uint64_t i = 1; i < 7; ++i) EXPECT_EQ(*t.value(i), 0.0);
}

TEST(Simulate, PaperDepth15) {
  const auto t = simulate_nbar(builtin_model("paper-neq"), 15, 1);
  EXPECT_EQ(t.size(), 65535u);
  EXPECT_TRUE(t.is_full());
  EXPECT_EQ(*t.value(0), 1.0);
}

TEST(Simulate, Deterministic) {
  const auto m = builtin_model("paper-neq");
  const auto a = simulate_nbar(m, 8, 123);
  const auto b = simulate_nbar(m, 8, 123);
  const auto c = simulate_nbar(m, 8, 124);
  bool differs = false;
  for (std::uint64_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(*a.value(i), *b.value(i));
    differs = differs || *a.value(i) != *c.value(i);
  }
  EXPECT_TRUE(differs);
}

TEST(Simulate, NodeNoiseIsIndexedByNode) {
  // A deeper tree shares its upper generations with a shallower one.
  const auto m = builtin_model("paper-eq");
  const auto small = simulate_nbar(m, 5, 77);
  const auto big = simulate_nbar(m, 9, 77);
  for (std::uint64_t i = 0; i < small.size(); ++i) EXPECT_EQ(*small.value(i), *big.value(i));
}

TEST(Simulate, NonFiniteTraitNamesNode) {
  ModelSpec m = zero_model(1e200);
  m.pair.f0 = polynomial({0.0, 0.0, 1.0});
  try {
    simulate_nbar(m, 3, 1);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'0'"), std::string::npos);
  }
}

TEST(Simulate, DepthLimits) {
  EXPECT_THROW(simulate_nbar(zero_model(0), -1, 1), ConfigError);
  EXPECT_THROW(simulate_nbar(zero_model(0), 31, 1), ConfigError);
}

TEST(Simulate, BinnedRegressionMatchesTruth) {
  const auto m = builtin_model("paper-neq");
  const auto tree = simulate_nbar(m, 16, 2024);
  const double width = 0.1;
  for (int t = 0; t < 2; ++t) {
    std::map<int, std::vector<double>> bins;
    for (const auto& p : collect_pairs(tree, t)) {
      if (std::abs(p.parent) >= 2.0) continue;
      bins[static_cast<int>(std::floor(p.parent / width))].push_back(p.child);
    }
    int checked = 0;
    for (const auto& [b, ys] : bins) {
      if (ys.size() < 200) continue;
      double s = 0, ss = 0;
      for (double y : ys) s += y;
      const double mean = s / ys.size();
      for (double y : ys) ss += (y - mean) * (y - mean);
      const double se = std::sqrt(ss / (ys.size() - 1) / ys.size());
      const double center = (b + 0.5) * width;
      EXPECT_LT(std::abs(mean - m.pair[t](center)), 3.0 * se + 1e-3)
          << "type " << t << " bin " << center;
      ++checked;
    }
    EXPECT_GT(checked, 15);
  }
}

TEST(Simulate, NoiseCovarianceConverges) {
  const auto m = builtin_model("paper-neq");
  const auto tree = simulate_nbar(m, 12, 5);
  long double s00 = 0, s11 = 0, s01 = 0;
  const std::uint64_t parents = full_tree_size(11);
  for (std::uint64_t i = 0; i < parents; ++i) {
    const double x = *tree.value(i);
    const double e0 = *tree.value(2 * i + 1) - m.pair.f0(x);
    const double e1 = *tree.value(2 * i + 2) - m.pair.f1(x);
    s00 += e0 * e0;
    s11 += e1 * e1;
    s01 += e0 * e1;
  }
  const double n = static_cast<double>(parents);
  const auto g = m.noise.covariance();
  const double bound = 4.0 * std::max(g[0], g[3]) / std::sqrt(n);
  EXPECT_LT(std::abs(static_cast<double>(s00 / n) - g[0]), bound);
  EXPECT_LT(std::abs(static_cast<double>(s11 / n) - g[3]), bound);
  EXPECT_LT(std::abs(static_cast<double>(s01 / n) - g[1]), bound);
}

TEST(Simulate, ConstantSdFunctionsAreBitIdentical) {
  ModelSpec m = builtin_model("paper-neq");
  m.noise = NoiseModel(0.7, 1.3, 0.3);
  const auto homo = simulate_nbar(m, 10, 31);
  m.sd_functions.emplace(constant_function(0.7), constant_function(1.3));
  const auto hetero = simulate_nbar(m, 10, 31);
  for (std::uint64_t i = 0; i < homo.size(); ++i) ASSERT_EQ(*homo.value(i), *hetero.value(i));
}

TEST(Simulate, SdFunctionCheck) {
  ModelSpec m = builtin_model("paper-neq");
  m.sd_functions.emplace(polynomial({1.0, 0.0, 0.1}), constant_function(1.0));
  const auto [lo, hi] = check_sd_functions(m);
  EXPECT_DOUBLE_EQ(lo, 1.0);
  EXPECT_DOUBLE_EQ(hi, 251.0);
  m.sd_functions.emplace(polynomial({0.0, 1.0}), constant_function(1.0));
  EXPECT_THROW(check_sd_functions(m), ConfigError);
}

TEST(TaggedBranch, ZeroNoise) {
  const auto y = simulate_tagged_branch(zero_model(5.0), 6, 3);
  ASSERT_EQ(y.size(), 7u);
  EXPECT_EQ(y[0], 5.0);
  for (std::size_t k = 1; k < y.size(); ++k) EXPECT_EQ(y[k], 0.0);
}

TEST(TaggedBranch, ChainsDifferAndRepeat) {
  const auto m = builtin_model("paper-neq");
  EXPECT_EQ(simulate_tagged_branch(m, 20, 8, 4), simulate_tagged_branch(m, 20, 8, 4));
  EXPECT_NE(simulate_tagged_branch(m, 20, 8, 4), simulate_tagged_branch(m, 20, 8, 5));
  EXPECT_EQ(simulate_tagged_branch(m, 0, 8).size(), 1u);
}

TEST(BuiltinModels, Values) {
  const auto neq = builtin_model("paper-neq");
  EXPECT_EQ(neq.pair.f0(0.0), 0.0);
  EXPECT_EQ(neq.pair.f1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(neq.pair.f0(1.0), 0.25 + std::exp(-1.0) / 2);
  EXPECT_DOUBLE_EQ(neq.pair.f1(1.0), 0.125 + std::exp(-1.0) / 2);
  EXPECT_DOUBLE_EQ(neq.noise.rho(), 0.3);
  EXPECT_EQ(neq.root.kind, RootLaw::Kind::point);
  EXPECT_EQ(neq.root.location, 1.0);

  const auto eq = builtin_model("paper-eq");
  const auto tau = builtin_model("paper-tau(0.25)");
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    EXPECT_EQ(eq.pair.f0(x), eq.pair.f1(x));
    EXPECT_EQ(tau.pair.f1(x), eq.pair.f1(x));
  }
  EXPECT_THROW(builtin_model("paper-tau(0.3)"), ConfigError);
  EXPECT_THROW(builtin_model("paper-tau:0.1"), ConfigError);
  EXPECT_THROW(builtin_model("nope"), ConfigError);
}

TEST(ModelJson, CustomModel) {
  const auto j = nlohmann::json::parse(R"({"f0": {"poly": [0, 0.5]}, "f1": "paper-f1",
      "sigma0": 2, "sigma1": 1, "rho": -0.2, "root": {"mean": 0, "sd": 1}})");
  const ModelSpec m = model_from_json(j);
  EXPECT_DOUBLE_EQ(m.pair.f0(2.0), 1.0);
  EXPECT_DOUBLE_EQ(m.pair.f1(1.0), 0.125 + std::exp(-1.0) / 2);
  EXPECT_DOUBLE_EQ(m.noise.sigma0(), 2.0);
  EXPECT_EQ(m.root.kind, RootLaw::Kind::gaussian);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"f0": "zero"})")), ConfigError);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"model": "paper-eq", "rho": 1})")),
               ConfigError);
}

TEST(ModelJson, TableFunction) {
  const auto f = detail::function_from_json(
      nlohmann::json::parse(R"({"table": {"x": [0, 1, 2], "y": [0, 2, 0]}})"));
  EXPECT_DOUBLE_EQ(f(0.5), 1.0);
  EXPECT_DOUBLE_EQ(f(1.5), 1.0);
}
