#pragma once

/** @file
 * Simulation of NBAR trees and of the tagged-branch chain.
 */

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbar/errors.hpp"
#include "nbar/model.hpp"
#include "nbar/random.hpp"
#include "nbar/tree.hpp"

namespace nbar {

/// Noise pair (eps0, eps1) attached to the division of the node at
/// heap_index. A pure function of (seed, heap_index).
inline std::pair<double, double> draw_noise(const NoiseModel& noise, const CounterRng& rng,
                                            std::uint64_t heap_index) {
  const auto [z0, z1] = rng.normals(Stream::node_noise, heap_index);
  const auto [e0, e1] = noise.correlate(z0, z1);
  return {noise.sigma0() * e0, noise.sigma1() * e1};
}

/**
 * Full NBAR tree on generations 0..depth:
 *   X_{u0} = f0(X_u) + eps_{u0},  X_{u1} = f1(X_u) + eps_{u1}.
 * The noise of node u depends only on (seed, heap index of u).
 */
inline BinaryTreeData simulate_nbar(const ModelSpec& spec, int depth, std::uint64_t seed) {
  if (depth < 0) throw ConfigError("depth must be >= 0");
  if (depth > kMaxDepth) throw ConfigError("depth exceeds limit " + std::to_string(kMaxDepth));
  const CounterRng rng(seed);
  const std::uint64_t total = full_tree_size(depth);
  const std::uint64_t parents = full_tree_size(depth - 1);
  std::vector<double> x(total);
  x[0] = spec.root.draw(rng.normals(Stream::root, 0).first);

  const NoiseModel& noise = spec.noise;
  const auto& f0 = spec.pair.f0;
  const auto& f1 = spec.pair.f1;
  for (std::uint64_t i = 0; i < parents; ++i) {
    const double xu = x[i];
    const auto [z0, z1] = rng.normals(Stream::node_noise, i);
    const auto [e0, e1] = noise.correlate(z0, z1);
    double s0 = noise.sigma0();
    double s1 = noise.sigma1();
    if (spec.sd_functions) {
      s0 = spec.sd_functions->first(xu);
      s1 = spec.sd_functions->second(xu);
    }
    x[2 * i + 1] = f0(xu) + s0 * e0;
    x[2 * i + 2] = f1(xu) + s1 * e1;
    for (std::uint64_t c : {2 * i + 1, 2 * i + 2})
      if (!std::isfinite(x[c]))
        throw DataError("non-finite trait at node '" + NodePath::from_heap_index(c).str() + "'");
  }
  if (!std::isfinite(x[0])) throw DataError("non-finite root trait");
  return BinaryTreeData::full(depth, std::move(x));
}

/**
 * Tagged-branch chain Y_0..Y_m: Y_0 from the root law, then
 * Y_k = f_{i_k}(Y_{k-1}) + eps'_k with i_k ~ Bernoulli(1/2) and eps'_k drawn
 * from the marginal G_{i_k}. `chain` selects an independent chain under the
 * same seed.
 */
inline std::vector<double> simulate_tagged_branch(const ModelSpec& spec, std::uint32_t m,
                                                  std::uint64_t seed, std::uint64_t chain = 0) {
  const CounterRng rng(seed);
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(m) + 1);
  y.push_back(spec.root.draw(rng.normals(Stream::root, chain, 1).first));
  for (std::uint32_t k = 1; k <= m; ++k) {
    const double prev = y.back();
    const int type = rng.uniforms(Stream::tagged_branch_type, chain, k).first < 0.5 ? 0 : 1;
    const double z = rng.normals(Stream::tagged_branch, chain, k).first;
    const double s = spec.sd_functions
                         ? (type == 0 ? spec.sd_functions->first(prev)
                                      : spec.sd_functions->second(prev))
                         : spec.noise.sigma(type);
    y.push_back(spec.pair[type](prev) + s * z);
  }
  return y;
}

}  // namespace nbar
