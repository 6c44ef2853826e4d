#pragma once

#include <memory>
#include <span>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/landscape.hpp"
#include "eesng/rng.hpp"
#include "eesng/supernet.hpp"
#include "eesng/tasks.hpp"

namespace eesng {

enum class BackendKind { kTabular, kNeural };

// Loss source for training and accuracy source for search. Both backends
// share one interface so the trainer and searchers are backend-agnostic.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendKind kind() const = 0;
  // Full option lists the backend is bound to.
  virtual const SearchSpace& space() const = 0;
  // Dimensions used for cost accounting.
  virtual const SupernetConfig& net_config() const = 0;

  // Losses of every architecture on one shared draw of data (or noise) from
  // rng, then one weight update with the gradient averaged over `archs` in
  // order. Tabular backends have no weights.
  virtual std::vector<double> train_step(std::span<const ArchitectureSpec> archs,
                                         Rng& rng) = 0;
  // Validation accuracy in [0, 1]; never touches the weights.
  virtual double accuracy(const ArchitectureSpec& arch) const = 0;
};

class TabularBackend final : public Backend {
 public:
  // `net` only supplies cost-model dimensions; its space must match.
  TabularBackend(TabularLandscape landscape, SupernetConfig net);

  BackendKind kind() const override { return BackendKind::kTabular; }
  const SearchSpace& space() const override { return landscape_.space(); }
  const SupernetConfig& net_config() const override { return net_; }
  std::vector<double> train_step(std::span<const ArchitectureSpec> archs,
                                 Rng& rng) override;
  double accuracy(const ArchitectureSpec& arch) const override;

  const TabularLandscape& landscape() const { return landscape_; }

 private:
  TabularLandscape landscape_;
  SupernetConfig net_;
};

struct NeuralTrainOptions {
  TaskSpec task;
  int batch_size = 32;
  AdamConfig adam;
  // Worker threads for the per-architecture gradients of a step; results are
  // reduced in architecture order, so any thread count gives the same bits.
  int threads = 1;
};

class NeuralBackend final : public Backend {
 public:
  NeuralBackend(SupernetConfig net, NeuralTrainOptions options,
                SupernetWeights weights, std::vector<Batch> validation);

  BackendKind kind() const override { return BackendKind::kNeural; }
  const SearchSpace& space() const override { return net_.space; }
  const SupernetConfig& net_config() const override { return net_; }
  std::vector<double> train_step(std::span<const ArchitectureSpec> archs,
                                 Rng& rng) override;
  double accuracy(const ArchitectureSpec& arch) const override;

  const SupernetWeights& weights() const { return weights_; }
  SupernetWeights& mutable_weights() { return weights_; }
  const AdamState& adam_state() const { return adam_; }
  AdamState& mutable_adam_state() { return adam_; }
  const NeuralTrainOptions& options() const { return options_; }
  NeuralTrainOptions& mutable_options() { return options_; }
  const std::vector<Batch>& validation() const { return validation_; }

 private:
  SupernetConfig net_;
  NeuralTrainOptions options_;
  SupernetWeights weights_;
  AdamState adam_;
  std::vector<Batch> validation_;
};

// `count` batches of `size` examples from a dedicated stream.
std::vector<Batch> make_validation_set(const TaskSpec& task, int count,
                                       int size, std::uint64_t seed);

}  // namespace eesng
