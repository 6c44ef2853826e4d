#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/rng.hpp"

namespace eesng {

inline constexpr double kDefaultProbabilityFloor = 1e-3;

// Product of independent categoricals, one per decision variable, in the
// variable order of SearchSpace. Each vector spans the full option list;
// options outside the support are exactly 0.
//
// Values are immutable snapshots: updates return new params.
class CategoricalParams {
 public:
  using Table = std::vector<std::vector<double>>;
  using Support = std::vector<std::vector<bool>>;

  CategoricalParams() = default;
  // Throws kInvalidArgument unless every vector is nonnegative, zero off
  // support, and sums to 1 within 1e-9.
  CategoricalParams(Table probs, Support support);

  std::size_t num_variables() const { return probs_.size(); }
  const std::vector<double>& probs(std::size_t var) const { return probs_[var]; }
  double prob(std::size_t var, std::size_t option) const {
    return probs_[var][option];
  }
  bool supported(std::size_t var, std::size_t option) const {
    return support_[var][option];
  }
  std::size_t support_size(std::size_t var) const;
  const Table& table() const { return probs_; }
  const Support& support() const { return support_; }

  bool operator==(const CategoricalParams&) const = default;

 private:
  Table probs_;
  Support support_;
};

// Active options of each variable of `space`.
CategoricalParams::Support support_of(const SearchSpace& space);

CategoricalParams uniform_init(const SearchSpace& space);
CategoricalParams uniform_init(const CategoricalParams::Support& support);

// One option index per variable, each drawn independently.
std::vector<int> sample_choices(const CategoricalParams& params, Rng& rng);
// Canonicalized architecture drawn from params.
ArchitectureSpec sample(const CategoricalParams& params,
                        const SearchSpace& space, Rng& rng);
// Draw from the exploration distribution: uniform over the active space.
ArchitectureSpec sample_uniform(const SearchSpace& space, Rng& rng);

// Sum over variables of ln p(choice); entries < 0 are skipped. A zero
// probability yields -infinity, or throws kInvalidArgument when strict.
double log_likelihood(const CategoricalParams& params,
                      std::span<const int> choices, bool strict = false);
// ln P(arch): depth plus the layers below depth. Inactive-layer variables are
// marginalized out, so exp(log_likelihood) summed over all distinct
// architectures is 1.
double log_likelihood(const CategoricalParams& params,
                      const SearchSpace& space, const ArchitectureSpec& arch,
                      bool strict = false);

// Shannon entropy in nats summed over variables.
double entropy(const CategoricalParams& params);
// Sum over variables of ln |support|.
double max_entropy(const CategoricalParams::Support& support);
double max_entropy(const SearchSpace& space);

// Moves each vector onto {p : sum p = 1, p_i >= floor on support, p_i = 0 off
// support}, keeping the proportions of entries above the floor.
void project_to_floor(std::vector<double>& probs,
                      const std::vector<bool>& support, double floor);

// theta_i <- theta_i - lr / lambda * sum_j u_j * (onehot_i(m_j) - theta_i),
// then projection onto the floored simplex. `choices[j][i] < 0` excludes
// sample j from variable i (inactive layer). Positive utility pushes
// probability away from the sampled option.
CategoricalParams natural_gradient_step(
    const CategoricalParams& params,
    std::span<const std::vector<int>> choices,
    std::span<const double> utilities, double lr,
    double floor = kDefaultProbabilityFloor);

// The raw update direction (before the learning rate and projection):
// (1/lambda) * sum_j u_j * (onehot(m_j) - theta), same masking rule.
CategoricalParams::Table natural_gradient_estimate(
    const CategoricalParams& params,
    std::span<const std::vector<int>> choices,
    std::span<const double> utilities);

enum class UtilityMode { kRanking, kRawLoss };

const char* utility_mode_name(UtilityMode mode);
UtilityMode parse_utility_mode(std::string_view name);

// Ranking: the better (lower-loss) half gets -1, the worse half +1, an odd
// median 0; tied losses share the mean of their rank utilities. Throws
// kInvalidArgument for fewer than two losses. Raw: losses unchanged.
std::vector<double> utility_transform(std::span<const double> losses,
                                      UtilityMode mode);

// Mass 1 / (2 * |active|) for every option that became active between `from`
// and `to`, taken proportionally from the existing options.
CategoricalParams widen(const CategoricalParams& params,
                        const SearchSpace& to,
                        double floor = kDefaultProbabilityFloor);

struct ControllerState {
  double exploit_probability = 1.0;  // K
  int update_interval = 1;           // epochs
  double entropy = 0.0;              // rho
  double max_entropy = 0.0;          // rho_max

  bool operator==(const ControllerState&) const = default;
};

// K = rho / rho_max over the active support; K = 1 when rho_max is 0.
ControllerState update_controller(const CategoricalParams& params,
                                  const SearchSpace& space,
                                  const ControllerState& state);

enum class Gate { kExploit, kExplore };

const char* gate_name(Gate gate);

// Bernoulli(K): Exploit samples from theta, Explore from the uniform
// distribution over the active space.
Gate controller_gate(const ControllerState& state, Rng& rng);

// Sum over the enumerated space of P(m) * loss(m). Throws kSpaceTooLarge
// above `limit` architectures.
double exact_expected_loss(
    const CategoricalParams& params, const SearchSpace& space,
    const std::function<double(const ArchitectureSpec&)>& loss,
    std::uint64_t limit = 1'000'000);

// Most probable option per variable, canonicalized.
ArchitectureSpec mode_architecture(const CategoricalParams& params,
                                   const SearchSpace& space);

// Tab-separated "variable, option, probability" rows.
std::string to_table(const CategoricalParams& params, const SearchSpace& space);

}  // namespace eesng
