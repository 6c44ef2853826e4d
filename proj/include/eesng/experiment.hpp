#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eesng/backend.hpp"
#include "eesng/checkpoint.hpp"
#include "eesng/config.hpp"
#include "eesng/cost_model.hpp"
#include "eesng/search.hpp"
#include "eesng/trainer.hpp"

namespace eesng {

// Everything needed to rebuild a backend. Stored verbatim (as canonical
// key = value text) inside checkpoints so search needs no config file.
struct BackendSettings {
  BackendKind kind = BackendKind::kTabular;
  SupernetConfig net;  // space plus network dimensions (cost model for tabular)
  // tabular
  LandscapeConfig landscape;
  // neural
  TaskSpec task;
  int batch_size = 32;
  AdamConfig adam;
  int validation_batches = 4;
  int validation_size = 100;
  std::uint64_t validation_seed = 0;
  int threads = 1;
  std::uint64_t init_seed = 0;
};

struct SearchJob {
  std::string name;
  std::string method = "distribution";  // distribution | random | evolutionary
  // Exactly one of the two is set.
  std::optional<double> omega;
  std::optional<double> omega_fraction;  // of the supernet cost
  CostMetric metric = CostMetric::kParams;
  PenaltyForm penalty = PenaltyForm::kAsWritten;
  double alpha = 2.0;
  DistributionSearchConfig distribution;
  EvolutionConfig evolution;
  // random: evaluations; 0 means steps * samples_per_step
  std::int64_t budget = 0;
  bool warm_start = false;
  std::uint64_t seed = 1;
};

struct BenchmarkConfig {
  int seeds = 20;
  std::uint64_t seed_base = 1000;
  std::vector<std::string> methods{"distribution", "random", "evolutionary"};
  std::vector<GateMode> gate_modes{GateMode::kEe, GateMode::kExploitOnly,
                                   GateMode::kExploreOnly};
  double omega_fraction = 0.5;
  CostMetric metric = CostMetric::kParams;
  PenaltyForm penalty = PenaltyForm::kAsWritten;
  int search_steps = 200;
  int samples_per_step = 8;
  int population = 16;
  double mutation_rate = 0.1;
  LandscapeKind search_landscape = LandscapeKind::kPlantedOptimum;
  LandscapeKind train_landscape = LandscapeKind::kDeceptive;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  BackendSettings backend;
  TrainConfig train;
  std::vector<SearchJob> searches;
  std::string output_dir;
  BenchmarkConfig benchmark;
};

// Sections: top level (seed), [space], [backend], [train], [search.NAME]...,
// [output], [benchmark]. Unknown fields and missing required fields raise
// kConfig naming the field (and line, when it has one).
ExperimentConfig parse_experiment(const KeyValueConfig& config);
ExperimentConfig load_experiment(const std::string& path);

// Canonical [space] + [backend] text, and its inverse.
std::string backend_settings_text(const BackendSettings& settings);
BackendSettings parse_backend_settings(const std::string& text);

// Fresh backend: neural weights from settings.init_seed.
std::unique_ptr<Backend> make_backend(const BackendSettings& settings);
// Backend restored from a checkpoint (weights and moments for neural).
std::unique_ptr<Backend> restore_backend(const Checkpoint& checkpoint);

// Network dimensions from a preset name ("desk", "bert"), a checkpoint file
// or an experiment config file.
SupernetConfig resolve_network(const std::string& source);

// "d2|h4,2|k64,32" style text; per-layer lists may stop at the depth. The
// result is validated and canonical.
ArchitectureSpec parse_user_architecture(const std::string& text, const SearchSpace& space);

// Exclusive claim on an output directory via a lock file; kIo if taken.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

// ---- commands -------------------------------------------------------------
// Outputs are pure functions of (inputs, seed); wall-clock times go only to
// run.log in the output directory.

struct TrainOutputs {
  std::string checkpoint_path;
  std::string history_path;
  std::string progress_path;
  double best_loss = 0.0;
};
// Writes checkpoint.eesn after every epoch, then history.csv and
// progress.csv. With resume, continues from an existing checkpoint.
TrainOutputs cmd_train(const std::string& config_path, bool resume = false);

struct SearchRequest {
  std::string checkpoint_path;
  SearchJob job;
  std::string output_dir;  // defaults to the checkpoint's directory
};
// Runs one Stage-II search with frozen weights; writes search_NAME.json and
// search_NAME_trace.csv and returns the JSON. kInfeasible when omega is not
// above the minimum architecture cost, or when no sampled architecture was
// feasible.
std::string cmd_search(const SearchRequest& request);

// All [search.*] jobs of a config against one checkpoint; JSON array.
std::string cmd_search_all(const std::string& checkpoint_path,
                           const std::string& config_path);

struct BenchmarkOutputs {
  std::string search_csv;
  std::string train_csv;
  std::string summary_csv;
};
// Tabular comparisons per [benchmark]; writes benchmark_search.csv,
// benchmark_train.csv and benchmark_summary.csv into the output dir.
BenchmarkOutputs cmd_benchmark(const std::string& config_path);

// CSV: arch,depth,params,flops[,accuracy] for every architecture. Accuracy
// is included when `source` is a checkpoint.
std::string cmd_enumerate(const std::string& source);
// Cost breakdown JSON of one architecture.
std::string cmd_cost(const std::string& source, const std::string& arch);
// JSON: architecture, accuracy (inherited weights), params, flops.
std::string cmd_eval(const std::string& checkpoint_path, const std::string& arch);

// Median and quartiles (linear interpolation between order statistics).
struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};
Quartiles quartiles(std::vector<double> values);

}  // namespace eesng
