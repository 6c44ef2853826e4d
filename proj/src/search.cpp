#include "eesng/search.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <unordered_map>

#include "eesng/error.hpp"
#include "eesng/format.hpp"

namespace eesng {

const char* penalty_form_name(PenaltyForm form) {
  return form == PenaltyForm::kAsWritten ? "as_written" : "violation_proportional";
}

PenaltyForm parse_penalty_form(std::string_view name) {
  if (name == "as_written") return PenaltyForm::kAsWritten;
  if (name == "violation_proportional") return PenaltyForm::kViolationProportional;
  fail(ErrorCode::kConfig, "unknown penalty form '" + std::string(name) +
                               "' (expected as_written|violation_proportional)");
}

void validate(const RewardConfig& c) {
  if (!std::isfinite(c.omega) || !std::isfinite(c.t_max) || !(c.omega < c.t_max)) {
    fail(ErrorCode::kConfig, "reward budget omega (" + format_double(c.omega) +
                                 ") must be below the supernet cost (" +
                                 format_double(c.t_max) + ")");
  }
  if (!std::isfinite(c.alpha) || c.alpha <= 0.0) {
    fail(ErrorCode::kConfig, "reward exponent alpha must be positive");
  }
}

double reward(double accuracy, double cost, const RewardConfig& c) {
  validate(c);
  if (cost > c.t_max) {
    fail(ErrorCode::kInvalidArgument, "cost " + format_double(cost) +
                                          " exceeds the supernet cost " +
                                          format_double(c.t_max));
  }
  if (cost < c.omega) return accuracy;
  const double span = c.t_max - c.omega;
  const double base = c.form == PenaltyForm::kAsWritten ? (cost - c.omega) / span
                                                        : (c.t_max - cost) / span;
  return accuracy * std::pow(base, c.alpha);
}

double evaluate_arch(const SupernetWeights& weights, const SupernetConfig& config,
                     const ArchitectureSpec& arch, std::span<const Batch> validation) {
  return evaluate_accuracy(weights, config, arch, validation);
}

Evaluator supernet_evaluator(const SupernetWeights& weights,
                             const SupernetConfig& config,
                             std::span<const Batch> validation, CostMetric metric) {
  return Evaluator{
      [&weights, config, validation](const ArchitectureSpec& a) {
        return evaluate_arch(weights, config, a, validation);
      },
      [config, metric](const ArchitectureSpec& a) {
        return static_cast<double>(arch_cost(a, config, metric));
      }};
}

Evaluator backend_evaluator(const Backend& backend, CostMetric metric) {
  return Evaluator{
      [&backend](const ArchitectureSpec& a) { return backend.accuracy(a); },
      [&backend, metric](const ArchitectureSpec& a) {
        return static_cast<double>(arch_cost(a, backend.net_config(), metric));
      }};
}

namespace {

// Scores candidates (memoized: accuracy is deterministic) and keeps the
// incumbent, the distinct top 10 and the evaluation count.
class Tracker {
 public:
  Tracker(const Evaluator& eval, const SearchSpace& space, const RewardConfig& rc)
      : eval_(eval), space_(space), rc_(rc) {
    validate(rc_);
  }

  ScoredArchitecture score(const ArchitectureSpec& raw) {
    const ArchitectureSpec arch = canonicalize(raw, space_);
    ++evaluations_;
    const std::string key = to_string(arch);
    auto it = memo_.find(key);
    if (it == memo_.end()) {
      ScoredArchitecture s;
      s.arch = arch;
      s.accuracy = eval_.accuracy(arch);
      s.cost = eval_.cost(arch);
      s.reward = reward(s.accuracy, s.cost, rc_);
      s.feasible = s.cost < rc_.omega;
      it = memo_.emplace(key, s).first;
      insert_top(s);
    }
    const ScoredArchitecture& s = it->second;
    const bool better =
        !best_ || (s.feasible && !best_->feasible) ||
        (s.feasible == best_->feasible && s.reward > best_->reward);
    if (better) {
      best_ = s;
      evaluations_to_best_ = evaluations_;
    }
    return s;
  }

  SearchStepTrace trace(int step, double mean_reward) const {
    SearchStepTrace t;
    t.step = step;
    t.evaluations = evaluations_;
    t.mean_reward = mean_reward;
    t.best_reward = best_ ? best_->reward : 0.0;
    for (const auto& s : top_) t.top10.push_back(s.reward);
    return t;
  }

  void finish(SearchResult& r) const {
    r.best = best_;
    r.top10 = top_;
    r.evaluations = evaluations_;
    r.evaluations_to_best = evaluations_to_best_;
  }

 private:
  void insert_top(const ScoredArchitecture& s) {
    const auto pos = std::find_if(top_.begin(), top_.end(), [&](const auto& t) {
      return s.reward > t.reward;
    });
    top_.insert(pos, s);
    if (top_.size() > 10) top_.pop_back();
  }

  const Evaluator& eval_;
  const SearchSpace& space_;
  RewardConfig rc_;
  std::unordered_map<std::string, ScoredArchitecture> memo_;
  std::optional<ScoredArchitecture> best_;
  std::vector<ScoredArchitecture> top_;
  std::int64_t evaluations_ = 0;
  std::int64_t evaluations_to_best_ = 0;
};

// Canonical option index for every variable (inactive layers included).
std::vector<int> full_choices(const ArchitectureSpec& arch, const SearchSpace& space) {
  const auto groups = encode(arch, space);
  std::vector<int> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    out.push_back(static_cast<int>(std::find(g.begin(), g.end(), 1) - g.begin()));
  }
  return out;
}

}  // namespace

SearchResult distribution_search(const Evaluator& eval, const SearchSpace& space,
                                 const RewardConfig& reward_config,
                                 const DistributionSearchConfig& config, Rng& rng,
                                 std::optional<CategoricalParams> theta_init) {
  if (config.steps < 1 || config.samples_per_step < 1) {
    fail(ErrorCode::kConfig, "search needs steps >= 1 and samples_per_step >= 1");
  }
  const SearchSpace full = space.full();
  Tracker tracker(eval, full, reward_config);
  CategoricalParams theta =
      theta_init ? widen(*theta_init, full, config.probability_floor) : uniform_init(full);
  const double lr =
      config.learning_rate.value_or(0.5 / static_cast<double>(config.samples_per_step));
  SearchResult result;
  result.method = "distribution";
  for (int step = 0; step < config.steps; ++step) {
    std::vector<std::vector<int>> choices;
    std::vector<double> neg_rewards;
    double sum = 0.0;
    for (int j = 0; j < config.samples_per_step; ++j) {
      const auto arch = sample(theta, full, rng);
      const auto s = tracker.score(arch);
      choices.push_back(choice_indices(s.arch, full));
      neg_rewards.push_back(-s.reward);
      sum += s.reward;
    }
    const std::vector<double> utilities =
        neg_rewards.size() == 1 && config.utility == UtilityMode::kRanking
            ? std::vector<double>{0.0}
            : utility_transform(neg_rewards, config.utility);
    theta = natural_gradient_step(theta, choices, utilities, lr, config.probability_floor);
    result.trace.push_back(
        tracker.trace(step, sum / static_cast<double>(config.samples_per_step)));
  }
  tracker.finish(result);
  result.theta = theta;
  return result;
}

SearchResult random_search(const Evaluator& eval, const SearchSpace& space,
                           const RewardConfig& reward_config, std::int64_t budget,
                           Rng& rng, bool dedup) {
  if (budget <= 0) {
    fail(ErrorCode::kInvalidArgument, "random search budget must be positive");
  }
  const SearchSpace full = space.full();
  if (dedup && static_cast<std::uint64_t>(budget) > cardinality(full)) {
    fail(ErrorCode::kInvalidArgument, "dedup budget exceeds the number of architectures");
  }
  Tracker tracker(eval, full, reward_config);
  SearchResult result;
  result.method = "random";
  std::unordered_map<std::string, bool> seen;
  for (std::int64_t i = 0; i < budget; ++i) {
    ArchitectureSpec arch = sample_uniform(full, rng);
    if (dedup) {
      while (seen.count(to_string(arch))) arch = sample_uniform(full, rng);
      seen[to_string(arch)] = true;
    }
    const auto s = tracker.score(arch);
    result.trace.push_back(tracker.trace(static_cast<int>(i), s.reward));
  }
  tracker.finish(result);
  return result;
}

SearchResult evolutionary_search(const Evaluator& eval, const SearchSpace& space,
                                 const RewardConfig& reward_config,
                                 const EvolutionConfig& config, Rng& rng) {
  if (config.population < 1 || config.generations < 0 || config.mutation_rate < 0.0 ||
      config.mutation_rate > 1.0) {
    fail(ErrorCode::kConfig,
         "evolution needs population >= 1, generations >= 0, mutation_rate in [0, 1]");
  }
  const SearchSpace full = space.full();
  Tracker tracker(eval, full, reward_config);
  SearchResult result;
  result.method = "evolutionary";
  const auto pop_size = static_cast<std::size_t>(config.population);

  std::vector<ScoredArchitecture> pop;
  double sum = 0.0;
  for (std::size_t i = 0; i < pop_size; ++i) {
    pop.push_back(tracker.score(sample_uniform(full, rng)));
    sum += pop.back().reward;
  }
  result.trace.push_back(tracker.trace(0, sum / static_cast<double>(pop_size)));

  const auto tournament = [&]() -> const ScoredArchitecture& {
    const auto& a = pop[rng.below(pop_size)];
    const auto& b = pop[rng.below(pop_size)];
    return b.reward > a.reward ? b : a;
  };
  for (int gen = 1; gen <= config.generations; ++gen) {
    std::vector<ScoredArchitecture> children;
    sum = 0.0;
    for (std::size_t i = 0; i < pop_size; ++i) {
      const auto pa = full_choices(tournament().arch, full);
      const auto pb = full_choices(tournament().arch, full);
      std::vector<int> child(pa.size());
      for (std::size_t v = 0; v < child.size(); ++v) {
        child[v] = rng.bernoulli(0.5) ? pa[v] : pb[v];
        if (rng.bernoulli(config.mutation_rate)) {
          child[v] = static_cast<int>(rng.below(full.variable_option_count(v)));
        }
      }
      children.push_back(tracker.score(from_choices(child, full)));
      sum += children.back().reward;
    }
    const auto elite_of = [](const std::vector<ScoredArchitecture>& v) {
      return *std::max_element(v.begin(), v.end(), [](const auto& a, const auto& b) {
        return a.reward < b.reward;
      });
    };
    const ScoredArchitecture elite = std::max(elite_of(pop), elite_of(children),
                                              [](const auto& a, const auto& b) {
                                                return a.reward < b.reward;
                                              });
    pop.clear();
    pop.push_back(elite);
    for (std::size_t i = 0; i + 1 < pop_size; ++i) pop.push_back(children[i]);
    result.trace.push_back(tracker.trace(gen, sum / static_cast<double>(pop_size)));
  }
  tracker.finish(result);
  return result;
}

ConstrainedOptimum enumerate_optimum(const Evaluator& eval, const SearchSpace& space,
                                     const RewardConfig& reward_config,
                                     std::uint64_t limit) {
  validate(reward_config);
  ConstrainedOptimum best;
  best.reward = -1.0;
  for_each_architecture(space.full(), limit, [&](const ArchitectureSpec& a) {
    if (!(eval.cost(a) < reward_config.omega)) return;
    const double r = eval.accuracy(a);
    if (r > best.reward) {
      best.reward = r;
      best.archs.clear();
    }
    if (r == best.reward) best.archs.push_back(a);
  });
  if (best.archs.empty()) {
    fail(ErrorCode::kInfeasible, "no architecture satisfies the budget");
  }
  return best;
}

std::string search_json(const SearchResult& result, const RewardConfig& rc,
                        const std::string& trace_path) {
  using nlohmann::ordered_json;
  const auto scored = [](const ScoredArchitecture& s) {
    ordered_json j;
    j["architecture"] = to_string(s.arch);
    j["depth"] = s.arch.depth;
    j["heads"] = std::vector<int>(s.arch.heads.begin(), s.arch.heads.begin() + s.arch.depth);
    j["intermediates"] = std::vector<int>(s.arch.intermediates.begin(),
                                          s.arch.intermediates.begin() + s.arch.depth);
    j["accuracy"] = s.accuracy;
    j["cost"] = s.cost;
    j["reward"] = s.reward;
    j["feasible"] = s.feasible;
    return j;
  };
  ordered_json j;
  j["method"] = result.method;
  j["metric"] = metric_name(rc.metric);
  j["omega"] = rc.omega;
  j["alpha"] = rc.alpha;
  j["penalty_form"] = penalty_form_name(rc.form);
  j["supernet_cost"] = rc.t_max;
  j["feasible"] = result.best && result.best->feasible;
  j["best"] = result.best ? scored(*result.best) : ordered_json(nullptr);
  j["evaluations"] = result.evaluations;
  j["evaluations_to_best"] = result.evaluations_to_best;
  ordered_json top = ordered_json::array();
  for (const auto& s : result.top10) top.push_back(scored(s));
  j["top10"] = top;
  j["trace"] = trace_path;
  return j.dump(2) + "\n";
}

std::string search_trace_csv(const SearchResult& result) {
  std::string out = "step,evaluations,mean_reward,best_reward";
  for (int i = 1; i <= 10; ++i) out += ",top" + std::to_string(i);
  out += "\n";
  for (const auto& t : result.trace) {
    out += std::to_string(t.step) + "," + std::to_string(t.evaluations) + "," +
           format_double(t.mean_reward) + "," + format_double(t.best_reward);
    for (std::size_t i = 0; i < 10; ++i) {
      out += ",";
      if (i < t.top10.size()) out += format_double(t.top10[i]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace eesng
