#include "eesng/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "eesng/error.hpp"

namespace eesng {

CategoricalParams::CategoricalParams(Table probs, Support support)
    : probs_(std::move(probs)), support_(std::move(support)) {
  if (probs_.size() != support_.size()) {
    fail(ErrorCode::kInvalidArgument, "probability/support size mismatch");
  }
  for (std::size_t v = 0; v < probs_.size(); ++v) {
    const auto& p = probs_[v];
    if (p.size() != support_[v].size() || p.empty()) {
      fail(ErrorCode::kInvalidArgument,
           "variable " + std::to_string(v) + ": malformed probability vector");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(p[i] >= 0.0) || (!support_[v][i] && p[i] != 0.0)) {
        fail(ErrorCode::kInvalidArgument,
             "variable " + std::to_string(v) +
                 ": probabilities must be nonnegative and zero off support");
      }
      sum += p[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(ErrorCode::kInvalidArgument,
           "variable " + std::to_string(v) + ": probabilities sum to " +
               std::to_string(sum));
    }
  }
}

std::size_t CategoricalParams::support_size(std::size_t var) const {
  return static_cast<std::size_t>(
      std::count(support_[var].begin(), support_[var].end(), true));
}

CategoricalParams::Support support_of(const SearchSpace& space) {
  CategoricalParams::Support support(space.num_variables());
  for (std::size_t v = 0; v < support.size(); ++v) {
    const auto dim = space.variable_dimension(v);
    support[v].resize(space.options(dim).size());
    for (std::size_t i = 0; i < support[v].size(); ++i) {
      support[v][i] = space.is_active(dim, i);
    }
  }
  return support;
}

CategoricalParams uniform_init(const CategoricalParams::Support& support) {
  CategoricalParams::Table table(support.size());
  for (std::size_t v = 0; v < support.size(); ++v) {
    const auto n =
        static_cast<double>(std::count(support[v].begin(), support[v].end(), true));
    table[v].resize(support[v].size(), 0.0);
    for (std::size_t i = 0; i < support[v].size(); ++i) {
      if (support[v][i]) table[v][i] = 1.0 / n;
    }
  }
  return CategoricalParams(std::move(table), support);
}

CategoricalParams uniform_init(const SearchSpace& space) {
  return uniform_init(support_of(space));
}

std::vector<int> sample_choices(const CategoricalParams& params, Rng& rng) {
  std::vector<int> out(params.num_variables());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = static_cast<int>(rng.categorical(params.probs(v)));
  }
  return out;
}

ArchitectureSpec sample(const CategoricalParams& params,
                        const SearchSpace& space, Rng& rng) {
  const auto choices = sample_choices(params, rng);
  return from_choices(choices, space);
}

ArchitectureSpec sample_uniform(const SearchSpace& space, Rng& rng) {
  std::vector<int> choices(space.num_variables());
  for (std::size_t v = 0; v < choices.size(); ++v) {
    const auto active = space.active_indices(space.variable_dimension(v));
    choices[v] = static_cast<int>(active[rng.below(active.size())]);
  }
  return from_choices(choices, space);
}

double log_likelihood(const CategoricalParams& params,
                      std::span<const int> choices, bool strict) {
  if (choices.size() != params.num_variables()) {
    fail(ErrorCode::kInvalidArgument, "choice vector has the wrong length");
  }
  double ll = 0.0;
  for (std::size_t v = 0; v < choices.size(); ++v) {
    if (choices[v] < 0) continue;
    const double p = params.prob(v, static_cast<std::size_t>(choices[v]));
    if (p <= 0.0) {
      if (strict) {
        fail(ErrorCode::kInvalidArgument,
             "variable " + std::to_string(v) + " selects a zero-probability option");
      }
      return -std::numeric_limits<double>::infinity();
    }
    ll += std::log(p);
  }
  return ll;
}

double log_likelihood(const CategoricalParams& params,
                      const SearchSpace& space, const ArchitectureSpec& arch,
                      bool strict) {
  return log_likelihood(params, choice_indices(arch, space), strict);
}

double entropy(const CategoricalParams& params) {
  double h = 0.0;
  for (const auto& p : params.table()) {
    for (double x : p) {
      if (x > 0.0) h -= x * std::log(x);
    }
  }
  return h;
}

double max_entropy(const CategoricalParams::Support& support) {
  double h = 0.0;
  for (const auto& s : support) {
    h += std::log(static_cast<double>(std::count(s.begin(), s.end(), true)));
  }
  return h;
}

double max_entropy(const SearchSpace& space) {
  return max_entropy(support_of(space));
}

void project_to_floor(std::vector<double>& probs,
                      const std::vector<bool>& support, double floor) {
  const std::size_t n = static_cast<std::size_t>(
      std::count(support.begin(), support.end(), true));
  if (n == 0) fail(ErrorCode::kInvalidArgument, "empty support");
  if (floor * static_cast<double>(n) > 1.0) {
    fail(ErrorCode::kInvalidArgument, "probability floor too large for support");
  }
  std::vector<bool> floored(probs.size(), false);
  std::vector<double> out(probs.size(), 0.0);
  while (true) {
    std::size_t n_floored = 0;
    double free_sum = 0.0;
    std::size_t n_free = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!support[i]) continue;
      if (floored[i]) {
        ++n_floored;
      } else {
        ++n_free;
        free_sum += std::max(probs[i], 0.0);
      }
    }
    const double mass = 1.0 - floor * static_cast<double>(n_floored);
    bool changed = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!support[i]) {
        out[i] = 0.0;
      } else if (floored[i]) {
        out[i] = floor;
      } else {
        out[i] = free_sum > 0.0
                     ? mass * std::max(probs[i], 0.0) / free_sum
                     : mass / static_cast<double>(n_free);
        if (out[i] < floor) {
          floored[i] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  probs = std::move(out);
}

CategoricalParams::Table natural_gradient_estimate(
    const CategoricalParams& params,
    std::span<const std::vector<int>> choices,
    std::span<const double> utilities) {
  if (choices.size() != utilities.size() || choices.empty()) {
    fail(ErrorCode::kInvalidArgument,
         "natural gradient needs one utility per sample and at least one sample");
  }
  const double inv_lambda = 1.0 / static_cast<double>(choices.size());
  CategoricalParams::Table grad(params.num_variables());
  for (std::size_t v = 0; v < grad.size(); ++v) {
    const auto& theta = params.probs(v);
    grad[v].assign(theta.size(), 0.0);
    for (std::size_t j = 0; j < choices.size(); ++j) {
      const int c = choices[j][v];
      if (c < 0) continue;
      const double u = utilities[j];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!params.supported(v, i)) continue;
        const double onehot = static_cast<std::size_t>(c) == i ? 1.0 : 0.0;
        grad[v][i] += inv_lambda * u * (onehot - theta[i]);
      }
    }
  }
  return grad;
}

CategoricalParams natural_gradient_step(
    const CategoricalParams& params,
    std::span<const std::vector<int>> choices,
    std::span<const double> utilities, double lr, double floor) {
  const auto grad = natural_gradient_estimate(params, choices, utilities);
  CategoricalParams::Table next = params.table();
  for (std::size_t v = 0; v < next.size(); ++v) {
    for (std::size_t i = 0; i < next[v].size(); ++i) {
      next[v][i] -= lr * grad[v][i];
    }
    project_to_floor(next[v], params.support()[v], floor);
  }
  return CategoricalParams(std::move(next), params.support());
}

const char* utility_mode_name(UtilityMode mode) {
  return mode == UtilityMode::kRanking ? "ranking" : "raw_loss";
}

UtilityMode parse_utility_mode(std::string_view name) {
  if (name == "ranking") return UtilityMode::kRanking;
  if (name == "raw_loss") return UtilityMode::kRawLoss;
  fail(ErrorCode::kConfig, "unknown utility mode '" + std::string(name) + "'");
}

std::vector<double> utility_transform(std::span<const double> losses,
                                      UtilityMode mode) {
  if (mode == UtilityMode::kRawLoss) {
    return {losses.begin(), losses.end()};
  }
  const std::size_t n = losses.size();
  if (n < 2) {
    fail(ErrorCode::kInvalidArgument, "ranking utilities need at least 2 samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b];
  });
  const auto by_rank = [n](std::size_t r) {
    if (r < n / 2) return -1.0;
    if (r >= (n + 1) / 2) return 1.0;
    return 0.0;
  };
  std::vector<double> out(n);
  std::size_t r = 0;
  while (r < n) {
    std::size_t end = r + 1;
    while (end < n && losses[order[end]] == losses[order[r]]) ++end;
    double mean = 0.0;
    for (std::size_t k = r; k < end; ++k) mean += by_rank(k);
    mean /= static_cast<double>(end - r);
    for (std::size_t k = r; k < end; ++k) out[order[k]] = mean;
    r = end;
  }
  return out;
}

CategoricalParams widen(const CategoricalParams& params, const SearchSpace& to,
                        double floor) {
  const auto support = support_of(to);
  if (support.size() != params.num_variables()) {
    fail(ErrorCode::kInvalidArgument, "space does not match the distribution");
  }
  CategoricalParams::Table next = params.table();
  for (std::size_t v = 0; v < next.size(); ++v) {
    if (support[v].size() != next[v].size()) {
      fail(ErrorCode::kInvalidArgument, "space does not match the distribution");
    }
    const auto dim = to.variable_dimension(v);
    // New options enter largest first, as expansion activates them.
    std::vector<std::size_t> fresh;
    std::size_t active = 0;
    for (std::size_t i = 0; i < support[v].size(); ++i) {
      if (params.supported(v, i)) {
        ++active;
      } else if (support[v][i]) {
        fresh.push_back(i);
      }
    }
    if (fresh.empty()) continue;
    std::sort(fresh.begin(), fresh.end(), [&](std::size_t a, std::size_t b) {
      return to.rank(dim, a) < to.rank(dim, b);
    });
    for (std::size_t i : fresh) {
      ++active;
      const double p_new = 1.0 / (2.0 * static_cast<double>(active));
      for (double& x : next[v]) x *= 1.0 - p_new;
      next[v][i] = p_new;
    }
    project_to_floor(next[v], support[v], floor);
  }
  return CategoricalParams(std::move(next), support);
}

ControllerState update_controller(const CategoricalParams& params,
                                  const SearchSpace& space,
                                  const ControllerState& state) {
  ControllerState next = state;
  next.max_entropy = max_entropy(space);
  next.entropy = std::clamp(entropy(params), 0.0, next.max_entropy);
  next.exploit_probability =
      next.max_entropy > 0.0
          ? std::clamp(next.entropy / next.max_entropy, 0.0, 1.0)
          : 1.0;
  return next;
}

const char* gate_name(Gate gate) {
  return gate == Gate::kExploit ? "exploit" : "explore";
}

Gate controller_gate(const ControllerState& state, Rng& rng) {
  return rng.bernoulli(state.exploit_probability) ? Gate::kExploit
                                                  : Gate::kExplore;
}

double exact_expected_loss(
    const CategoricalParams& params, const SearchSpace& space,
    const std::function<double(const ArchitectureSpec&)>& loss,
    std::uint64_t limit) {
  double total = 0.0;
  for_each_architecture(space, limit, [&](const ArchitectureSpec& arch) {
    const double ll = log_likelihood(params, space, arch);
    if (std::isinf(ll)) return;
    total += std::exp(ll) * loss(arch);
  });
  return total;
}

ArchitectureSpec mode_architecture(const CategoricalParams& params,
                                   const SearchSpace& space) {
  std::vector<int> choices(params.num_variables());
  for (std::size_t v = 0; v < choices.size(); ++v) {
    const auto& p = params.probs(v);
    choices[v] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return from_choices(choices, space);
}

std::string to_table(const CategoricalParams& params, const SearchSpace& space) {
  std::ostringstream out;
  out << "variable\toption\tprobability\n";
  out.precision(6);
  for (std::size_t v = 0; v < params.num_variables(); ++v) {
    const auto dim = space.variable_dimension(v);
    const int layer = space.variable_layer(v);
    const std::string name =
        layer < 0 ? "depth"
                  : std::string(dimension_name(dim)) + "[" + std::to_string(layer) + "]";
    for (std::size_t i = 0; i < params.probs(v).size(); ++i) {
      if (!params.supported(v, i)) continue;
      out << name << '\t' << space.options(dim)[i] << '\t' << params.prob(v, i)
          << '\n';
    }
  }
  return out.str();
}

}  // namespace eesng
