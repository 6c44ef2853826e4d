#include "eesng/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "eesng/error.hpp"
#include "eesng/format.hpp"

namespace eesng {

const char* gate_mode_name(GateMode mode) {
  switch (mode) {
    case GateMode::kEe: return "ee";
    case GateMode::kExploitOnly: return "exploit_only";
    case GateMode::kExploreOnly: return "explore_only";
  }
  return "?";
}

GateMode parse_gate_mode(std::string_view name) {
  if (name == "ee") return GateMode::kEe;
  if (name == "exploit_only") return GateMode::kExploitOnly;
  if (name == "explore_only") return GateMode::kExploreOnly;
  fail(ErrorCode::kConfig, "unknown gate mode '" + std::string(name) +
                               "' (expected ee|exploit_only|explore_only)");
}

double TrainConfig::effective_theta_lr() const {
  return theta_lr.value_or(0.1 / static_cast<double>(lambda));
}

void validate(const TrainConfig& c) {
  const auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, what); };
  if (c.epochs < 1) bad("epochs must be >= 1");
  if (c.steps_per_epoch < 1) bad("steps_per_epoch must be >= 1");
  if (c.lambda < 1) bad("lambda must be >= 1");
  if (c.update_interval < 1) bad("update_interval must be >= 1");
  if (c.theta_lr && (*c.theta_lr < 0.0 || !std::isfinite(*c.theta_lr))) {
    bad("theta_lr must be a finite nonnegative number");
  }
  if (c.probability_floor < 0.0 || c.probability_floor >= 1.0) {
    bad("probability_floor must lie in [0, 1)");
  }
  if (c.expansion_spacing && *c.expansion_spacing <= 0.0) {
    bad("expansion_spacing must be positive");
  }
}

double TrainHistory::best_loss() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : steps) {
    for (double l : s.losses) best = std::min(best, l);
  }
  return best;
}

TrainState initial_state(const SearchSpace& full_space, const TrainConfig& config,
                         std::uint64_t seed) {
  validate(config);
  const SearchSpace full = full_space.full();
  TrainState st{config.progressive ? full.initial() : full,
                config.progressive
                    ? default_schedule(full, config.epochs, config.expansion_spacing)
                    : ExpansionSchedule{},
                {},
                {},
                Rng(seed),
                0,
                0,
                {}};
  st.theta = uniform_init(st.space);
  ControllerState c;
  c.update_interval = config.update_interval;
  st.controller = update_controller(st.theta, st.space, c);
  return st;
}

std::vector<ArchitectureSpec> sample_step(const CategoricalParams& theta,
                                          const SearchSpace& space, Gate gate,
                                          int lambda, Rng& rng) {
  if (lambda < 1) fail(ErrorCode::kInvalidArgument, "lambda must be >= 1");
  std::vector<ArchitectureSpec> out;
  out.reserve(static_cast<std::size_t>(lambda));
  for (int j = 0; j < lambda; ++j) {
    out.push_back(gate == Gate::kExploit ? sample(theta, space, rng)
                                         : sample_uniform(space, rng));
  }
  return out;
}

void train(Backend& backend, const TrainConfig& config, TrainState& state,
           const EpochCallback& on_epoch) {
  validate(config);
  if (!backend.space().same_options(state.space)) {
    fail(ErrorCode::kConfig, "backend space does not match the training space");
  }
  const double lr = config.effective_theta_lr();
  while (state.epoch < config.epochs) {
    const int epoch = state.epoch;
    const SearchSpace grown = expand(state.space, state.schedule, epoch);
    if (!(grown == state.space)) {
      state.theta = widen(state.theta, grown, config.probability_floor);
      state.space = grown;
    }
    for (const auto& ev : state.schedule) {
      if (ev.epoch == epoch) state.history.expansions.push_back({epoch, ev});
    }
    if (epoch % config.update_interval == 0) {
      state.controller = update_controller(state.theta, state.space, state.controller);
    }
    if (config.gate == GateMode::kExploitOnly) state.controller.exploit_probability = 1.0;
    if (config.gate == GateMode::kExploreOnly) state.controller.exploit_probability = 0.0;

    const CategoricalParams uniform = uniform_init(state.space);
    for (int s = 0; s < config.steps_per_epoch; ++s) {
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = state.step;
      rec.exploit_probability = state.controller.exploit_probability;
      rec.entropy = entropy(state.theta);
      rec.gate = controller_gate(state.controller, state.rng);
      rec.archs = sample_step(state.theta, state.space, rec.gate, config.lambda, state.rng);
      rec.losses = backend.train_step(rec.archs, state.rng);
      state.history.steps.push_back(rec);
      for (std::size_t j = 0; j < rec.losses.size(); ++j) {
        if (!std::isfinite(rec.losses[j])) {
          fail(ErrorCode::kNonFinite,
               "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                   std::to_string(state.step) + " for " + to_string(rec.archs[j]));
        }
      }

      std::vector<double> utilities =
          config.lambda == 1 && config.utility == UtilityMode::kRanking
              ? std::vector<double>{0.0}  // a single sample has no rank
              : utility_transform(rec.losses, config.utility);
      if (config.importance_weighting && rec.gate == Gate::kExplore) {
        for (std::size_t j = 0; j < utilities.size(); ++j) {
          const double ratio =
              std::exp(log_likelihood(state.theta, state.space, rec.archs[j]) -
                       log_likelihood(uniform, state.space, rec.archs[j]));
          utilities[j] *= std::clamp(ratio, 0.1, 10.0);
        }
      }
      std::vector<std::vector<int>> choices;
      choices.reserve(rec.archs.size());
      for (const auto& a : rec.archs) choices.push_back(choice_indices(a, state.space));
      state.theta = natural_gradient_step(state.theta, choices, utilities, lr,
                                          config.probability_floor);
      ++state.step;
    }
    ++state.epoch;
    if (on_epoch) on_epoch(state);
  }
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,step,gate,K,entropy,sample,arch,loss\n";
  for (const auto& s : history.steps) {
    const std::string head = std::to_string(s.epoch) + "," + std::to_string(s.step) +
                             "," + gate_name(s.gate) + "," +
                             format_double(s.exploit_probability) + "," +
                             format_double(s.entropy) + ",";
    for (std::size_t j = 0; j < s.archs.size(); ++j) {
      out += head + std::to_string(j) + "," + to_string(s.archs[j]) + "," +
             format_double(s.losses[j]) + "\n";
    }
  }
  return out;
}

std::vector<EpochSummary> progress_report(const TrainHistory& history) {
  std::vector<EpochSummary> rows;
  std::map<int, std::size_t> index;
  std::vector<std::size_t> samples, explores, steps;
  for (const auto& s : history.steps) {
    auto it = index.find(s.epoch);
    if (it == index.end()) {
      it = index.emplace(s.epoch, rows.size()).first;
      EpochSummary row;
      row.epoch = s.epoch;
      row.entropy = s.entropy;
      row.exploit_probability = s.exploit_probability;
      row.min_loss = std::numeric_limits<double>::infinity();
      rows.push_back(row);
      samples.push_back(0);
      explores.push_back(0);
      steps.push_back(0);
    }
    const std::size_t i = it->second;
    for (double l : s.losses) {
      rows[i].mean_loss += l;
      rows[i].min_loss = std::min(rows[i].min_loss, l);
    }
    samples[i] += s.losses.size();
    explores[i] += s.gate == Gate::kExplore;
    ++steps[i];
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].mean_loss /= static_cast<double>(samples[i]);
    rows[i].explore_fraction =
        static_cast<double>(explores[i]) / static_cast<double>(steps[i]);
  }
  return rows;
}

std::string progress_csv(const std::vector<EpochSummary>& rows) {
  std::string out = "epoch,mean_loss,min_loss,entropy,K,explore_fraction\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + format_double(r.mean_loss) + "," +
           format_double(r.min_loss) + "," + format_double(r.entropy) + "," +
           format_double(r.exploit_probability) + "," +
           format_double(r.explore_fraction) + "\n";
  }
  return out;
}

}  // namespace eesng
