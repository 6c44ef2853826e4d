#pragma once

// Test-only reference computations. Everything here walks the raw product
// space of decision variables directly and shares no code path with the
// library routines it is used to check.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/distribution.hpp"

namespace eesng::oracle {

// Every raw assignment of one supported option per variable, with its
// product probability.
inline void for_each_raw_assignment(
    const CategoricalParams& params,
    const std::function<void(const std::vector<int>&, double)>& visit) {
  const std::size_t n = params.num_variables();
  std::vector<int> x(n, 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t v,
                                                     double prob) {
    if (v == n) {
      visit(x, prob);
      return;
    }
    for (std::size_t i = 0; i < params.probs(v).size(); ++i) {
      if (!params.supported(v, i)) continue;
      x[v] = static_cast<int>(i);
      rec(v + 1, prob * params.prob(v, i));
    }
  };
  rec(0, 1.0);
}

// Probability of each distinct architecture, obtained by summing the raw
// product probabilities of every assignment that maps onto it.
inline std::map<std::string, double> architecture_probabilities(
    const CategoricalParams& params, const SearchSpace& space) {
  std::map<std::string, double> out;
  for_each_raw_assignment(params, [&](const std::vector<int>& x, double p) {
    const int depth = space.options(Dimension::kDepth)[x[0]];
    ArchitectureSpec arch;
    arch.depth = depth;
    for (int l = 0; l < space.max_depth(); ++l) {
      const bool live = l < depth;
      arch.heads.push_back(live ? space.options(Dimension::kHeads)[x[1 + 2 * l]]
                                : space.largest(Dimension::kHeads));
      arch.intermediates.push_back(
          live ? space.options(Dimension::kIntermediate)[x[2 + 2 * l]]
               : space.largest(Dimension::kIntermediate));
    }
    out[to_string(arch)] += p;
  });
  return out;
}

// Exact natural gradient of G(theta) = E[f(m)] in the full product family:
// sum over raw assignments x of P(x) f(x) (onehot(x) - theta). Inactive
// variables are included, so this is independent of the masking used by the
// library estimator.
inline CategoricalParams::Table exact_natural_gradient(
    const CategoricalParams& params, const SearchSpace& space,
    const std::function<double(const ArchitectureSpec&)>& f) {
  CategoricalParams::Table grad(params.num_variables());
  for (std::size_t v = 0; v < grad.size(); ++v) {
    grad[v].assign(params.probs(v).size(), 0.0);
  }
  for_each_raw_assignment(params, [&](const std::vector<int>& x, double p) {
    const int depth = space.options(Dimension::kDepth)[x[0]];
    ArchitectureSpec arch;
    arch.depth = depth;
    for (int l = 0; l < space.max_depth(); ++l) {
      const bool live = l < depth;
      arch.heads.push_back(live ? space.options(Dimension::kHeads)[x[1 + 2 * l]]
                                : space.largest(Dimension::kHeads));
      arch.intermediates.push_back(
          live ? space.options(Dimension::kIntermediate)[x[2 + 2 * l]]
               : space.largest(Dimension::kIntermediate));
    }
    const double value = f(arch);
    for (std::size_t v = 0; v < grad.size(); ++v) {
      for (std::size_t i = 0; i < grad[v].size(); ++i) {
        if (!params.supported(v, i)) continue;
        const double onehot = x[v] == static_cast<int>(i) ? 1.0 : 0.0;
        grad[v][i] += p * value * (onehot - params.prob(v, i));
      }
    }
  });
  return grad;
}

}  // namespace eesng::oracle
