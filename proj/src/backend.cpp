#include "eesng/backend.hpp"

#include <cmath>
#include <thread>

#include "eesng/error.hpp"

namespace eesng {

TabularBackend::TabularBackend(TabularLandscape landscape, SupernetConfig net)
    : landscape_(std::move(landscape)), net_(std::move(net)) {
  if (!net_.space.same_options(landscape_.space())) {
    fail(ErrorCode::kConfig, "cost-model space differs from the landscape space");
  }
  validate(net_);
}

std::vector<double> TabularBackend::train_step(
    std::span<const ArchitectureSpec> archs, Rng& rng) {
  std::vector<double> losses;
  losses.reserve(archs.size());
  for (const auto& a : archs) losses.push_back(landscape_.noisy_loss(a, rng));
  return losses;
}

double TabularBackend::accuracy(const ArchitectureSpec& arch) const {
  return landscape_.accuracy(arch);
}

NeuralBackend::NeuralBackend(SupernetConfig net, NeuralTrainOptions options,
                             SupernetWeights weights,
                             std::vector<Batch> validation)
    : net_(std::move(net)),
      options_(std::move(options)),
      weights_(std::move(weights)),
      adam_(AdamState::zeros(net_)),
      validation_(std::move(validation)) {
  validate(net_);
  validate(options_.task);
  if (options_.task.vocab_size > net_.vocab_size ||
      options_.task.seq_len != net_.seq_len) {
    fail(ErrorCode::kConfig, "task vocabulary or sequence length does not fit the supernet");
  }
  if (options_.batch_size < 1) fail(ErrorCode::kConfig, "batch_size must be >= 1");
  if (options_.threads < 1) fail(ErrorCode::kConfig, "threads must be >= 1");
  if (validation_.empty()) fail(ErrorCode::kConfig, "validation set is empty");
  if (weights_.layers.size() != static_cast<std::size_t>(net_.space.max_depth()) ||
      weights_.embedding.rows() != net_.vocab_size ||
      weights_.embedding.cols() != net_.embed_dim ||
      weights_.classifier.cols() != net_.num_classes ||
      weights_.layers[0].w1.cols() != net_.max_intermediate()) {
    fail(ErrorCode::kConfig, "weights do not match the supernet config");
  }
}

std::vector<double> NeuralBackend::train_step(
    std::span<const ArchitectureSpec> archs, Rng& rng) {
  if (archs.empty()) fail(ErrorCode::kInvalidArgument, "no architectures to train");
  const Batch batch = make_batch(options_.task, options_.batch_size, rng);
  std::vector<GradientResult> results(archs.size());
  const auto work = [&](std::size_t i) {
    results[i] = gradients(weights_, net_, archs[i], batch);
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(options_.threads), archs.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < archs.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < archs.size(); i += threads) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> losses;
  SupernetWeights total = std::move(results[0].grads);
  losses.push_back(results[0].forward.loss);
  for (std::size_t i = 1; i < results.size(); ++i) {
    losses.push_back(results[i].forward.loss);
    std::vector<Matrix*> dst;
    total.for_each([&](const std::string&, Matrix& m) { dst.push_back(&m); });
    std::size_t k = 0;
    results[i].grads.for_each([&](const std::string&, const Matrix& m) { *dst[k++] += m; });
  }
  for (double l : losses) {
    if (!std::isfinite(l)) return losses;  // the trainer reports and aborts
  }
  const double scale = 1.0 / static_cast<double>(archs.size());
  total.for_each([&](const std::string&, Matrix& m) { m *= scale; });
  apply_update(weights_, adam_, total, SliceCoverage::of(net_, archs), options_.adam);
  return losses;
}

double NeuralBackend::accuracy(const ArchitectureSpec& arch) const {
  return evaluate_accuracy(weights_, net_, arch, validation_);
}

std::vector<Batch> make_validation_set(const TaskSpec& task, int count,
                                       int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Batch> out;
  for (int i = 0; i < count; ++i) out.push_back(make_batch(task, size, rng));
  return out;
}

}  // namespace eesng
