#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/backend.hpp"
#include "eesng/distribution.hpp"
#include "eesng/rng.hpp"

namespace eesng {

enum class GateMode { kEe, kExploitOnly, kExploreOnly };

const char* gate_mode_name(GateMode mode);
GateMode parse_gate_mode(std::string_view name);

struct TrainConfig {
  int epochs = 10;
  int steps_per_epoch = 50;
  int lambda = 8;
  // Controller refresh period in epochs.
  int update_interval = 1;
  // Defaults to 0.1 / lambda.
  std::optional<double> theta_lr;
  double probability_floor = kDefaultProbabilityFloor;
  UtilityMode utility = UtilityMode::kRanking;
  GateMode gate = GateMode::kEe;
  // Weight exploration samples by P_theta(m) / pi(m), clipped to [0.1, 10].
  bool importance_weighting = false;
  // Off: train on the full space from the first step.
  bool progressive = true;
  std::optional<double> expansion_spacing;

  double effective_theta_lr() const;
};

// Throws kConfig on out-of-range fields.
void validate(const TrainConfig& config);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  Gate gate = Gate::kExploit;
  double exploit_probability = 1.0;
  double entropy = 0.0;  // of theta before the step's update
  std::vector<ArchitectureSpec> archs;
  std::vector<double> losses;

  bool operator==(const StepRecord&) const = default;
};

struct ExpansionRecord {
  int epoch = 0;
  ExpansionEvent event;

  bool operator==(const ExpansionRecord&) const = default;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<ExpansionRecord> expansions;

  // Smallest loss observed in any step.
  double best_loss() const;

  bool operator==(const TrainHistory&) const = default;
};

// Everything the loop needs to continue: a checkpoint of this plus the
// backend's weights reproduces an uninterrupted run bit for bit.
struct TrainState {
  SearchSpace space = SearchSpace::preset("desk");  // active options
  ExpansionSchedule schedule;
  CategoricalParams theta;
  ControllerState controller;
  Rng rng;
  int epoch = 0;  // next epoch to run
  std::int64_t step = 0;
  TrainHistory history;

  bool operator==(const TrainState&) const = default;
};

// Fresh state at epoch 0: initial (or full) active space, uniform theta.
TrainState initial_state(const SearchSpace& full_space, const TrainConfig& config,
                         std::uint64_t seed);

// lambda draws from the gated distribution over the active space. Throws
// kInvalidArgument for lambda < 1.
std::vector<ArchitectureSpec> sample_step(const CategoricalParams& theta,
                                          const SearchSpace& space, Gate gate,
                                          int lambda, Rng& rng);

using EpochCallback = std::function<void(const TrainState&)>;

// Runs epochs state.epoch .. config.epochs - 1. Per epoch: expansion events
// (theta widened), controller refresh every update_interval epochs, then
// steps of gate draw, sampling, backend step, theta update. on_epoch runs
// after every completed epoch. A non-finite loss throws kNonFinite after the
// offending step is appended to the history.
void train(Backend& backend, const TrainConfig& config, TrainState& state,
           const EpochCallback& on_epoch = {});

// CSV: epoch,step,gate,K,entropy,sample,arch,loss (one row per sample).
std::string history_csv(const TrainHistory& history);

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  double min_loss = 0.0;
  double entropy = 0.0;  // at the epoch's first step
  double exploit_probability = 0.0;
  double explore_fraction = 0.0;
};

std::vector<EpochSummary> progress_report(const TrainHistory& history);
// CSV: epoch,mean_loss,min_loss,entropy,K,explore_fraction
std::string progress_csv(const std::vector<EpochSummary>& rows);

}  // namespace eesng
