#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/backend.hpp"
#include "eesng/cost_model.hpp"
#include "eesng/distribution.hpp"
#include "eesng/rng.hpp"
#include "eesng/supernet.hpp"

namespace eesng {

enum class PenaltyForm { kAsWritten, kViolationProportional };

const char* penalty_form_name(PenaltyForm form);
PenaltyForm parse_penalty_form(std::string_view name);

struct RewardConfig {
  double omega = 0.0;    // budget, in metric units
  double alpha = 2.0;
  CostMetric metric = CostMetric::kParams;
  double t_max = 0.0;    // cost of the full supernet architecture
  PenaltyForm form = PenaltyForm::kAsWritten;
};

// Throws kConfig unless omega < t_max and alpha > 0 (both finite).
void validate(const RewardConfig& config);

// acc when t < omega. Otherwise acc * ((t - omega) / (t_max - omega))^alpha
// as written, or acc * ((t_max - t) / (t_max - omega))^alpha in the
// violation-proportional form. Throws kInvalidArgument for t > t_max.
double reward(double accuracy, double cost, const RewardConfig& config);

// How a searcher measures candidates. Accuracy must be deterministic.
struct Evaluator {
  std::function<double(const ArchitectureSpec&)> accuracy;
  std::function<double(const ArchitectureSpec&)> cost;
};

// Accuracy from inherited supernet weights, cost from the cost model.
Evaluator supernet_evaluator(const SupernetWeights& weights,
                             const SupernetConfig& config,
                             std::span<const Batch> validation,
                             CostMetric metric);

// Accuracy from the backend (noise-free for tabular ones), cost from its
// network dimensions. The backend must outlive the evaluator.
Evaluator backend_evaluator(const Backend& backend, CostMetric metric);

// Mean validation accuracy with sliced weights; no gradients, no writes.
double evaluate_arch(const SupernetWeights& weights, const SupernetConfig& config,
                     const ArchitectureSpec& arch, std::span<const Batch> validation);

struct ScoredArchitecture {
  ArchitectureSpec arch;
  double accuracy = 0.0;
  double cost = 0.0;
  double reward = 0.0;
  bool feasible = false;
};

struct SearchStepTrace {
  int step = 0;
  std::int64_t evaluations = 0;  // cumulative
  double mean_reward = 0.0;
  double best_reward = 0.0;      // best feasible so far, or best overall
  // Rewards of the 10 best distinct architectures so far, descending.
  std::vector<double> top10;
};

struct SearchResult {
  std::string method;
  // Best feasible candidate when one was seen, else the best by reward.
  std::optional<ScoredArchitecture> best;
  std::vector<SearchStepTrace> trace;
  // 10 best distinct architectures by reward.
  std::vector<ScoredArchitecture> top10;
  std::optional<CategoricalParams> theta;  // distribution search only
  std::int64_t evaluations = 0;
  // Evaluation index (1-based) at which `best` was first seen.
  std::int64_t evaluations_to_best = 0;
};

struct DistributionSearchConfig {
  int steps = 200;
  int samples_per_step = 8;
  // Defaults to 0.5 / samples_per_step.
  std::optional<double> learning_rate;
  double probability_floor = kDefaultProbabilityFloor;
  UtilityMode utility = UtilityMode::kRanking;
};

// Samples from theta, scores, and moves theta towards higher reward. The
// evaluator is the only way candidates are measured, so weights stay frozen.
// theta_init defaults to uniform over the full space.
SearchResult distribution_search(const Evaluator& eval, const SearchSpace& space,
                                 const RewardConfig& reward_config,
                                 const DistributionSearchConfig& config, Rng& rng,
                                 std::optional<CategoricalParams> theta_init = {});

// Uniform draws over the full space. With dedup, repeats are redrawn, so a
// budget equal to the cardinality visits every architecture. Throws
// kInvalidArgument for budget 0. Trace steps are single evaluations.
SearchResult random_search(const Evaluator& eval, const SearchSpace& space,
                           const RewardConfig& reward_config, std::int64_t budget,
                           Rng& rng, bool dedup = false);

struct EvolutionConfig {
  int population = 16;
  int generations = 100;
  double mutation_rate = 0.1;
};

// Per generation: `population` children, each from two size-2 tournaments,
// uniform crossover over the canonical choice vectors and per-variable
// mutation to a uniformly drawn option. The next population is the best
// member of parents and children (elitism 1) plus population - 1 children.
SearchResult evolutionary_search(const Evaluator& eval, const SearchSpace& space,
                                 const RewardConfig& reward_config,
                                 const EvolutionConfig& config, Rng& rng);

// Best feasible reward over the enumerated space (the constrained optimum)
// and the architectures attaining it.
struct ConstrainedOptimum {
  double reward = 0.0;
  std::vector<ArchitectureSpec> archs;
};
ConstrainedOptimum enumerate_optimum(const Evaluator& eval, const SearchSpace& space,
                                     const RewardConfig& reward_config,
                                     std::uint64_t limit = 1'000'000);

std::string search_json(const SearchResult& result, const RewardConfig& reward_config,
                        const std::string& trace_path);
// CSV: step,evaluations,mean_reward,best_reward,top1..top10
std::string search_trace_csv(const SearchResult& result);

}  // namespace eesng
