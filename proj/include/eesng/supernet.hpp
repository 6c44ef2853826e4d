#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/rng.hpp"
#include "eesng/tasks.hpp"

namespace eesng {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

// Dimensions of the elastic encoder. Per-head width is fixed at
// embed_dim / max heads; choosing fewer heads narrows the attention.
struct SupernetConfig {
  int vocab_size = 8;
  int embed_dim = 32;
  int seq_len = 16;
  int num_classes = 2;
  SearchSpace space = SearchSpace::preset("desk");

  int max_heads() const { return space.largest(Dimension::kHeads); }
  int max_intermediate() const { return space.largest(Dimension::kIntermediate); }
  int head_dim() const { return embed_dim / max_heads(); }

  // E=32, vocab 8, seq_len 16, 2 classes over the desk space.
  static SupernetConfig desk();
  // BERT-base dimensions over the bert space (cost accounting only).
  static SupernetConfig bert();
};

// Throws kConfig unless embed_dim is a multiple of the largest head option.
void validate(const SupernetConfig& config);

struct LayerWeights {
  Matrix wq, bq, wk, bk, wv, bv;  // [E x E], [1 x E]
  Matrix wo, bo;                  // [E x E], [1 x E]
  Matrix ln1_gamma, ln1_beta;     // [1 x E]
  Matrix w1, b1;                  // [E x K], [1 x K]
  Matrix w2, b2;                  // [K x E], [1 x E]
  Matrix ln2_gamma, ln2_beta;     // [1 x E]
};

// Maximal-size shared tensors. Sub-network weights are the leading slices:
// the first h*head_dim columns of wq/wk/wv (and rows of wo), the first k
// columns of w1 (and rows of w2), layers below the depth. Layer norms and
// the output biases act on the full residual width and are never sliced.
struct SupernetWeights {
  Matrix embedding;        // [V x E]
  std::vector<LayerWeights> layers;
  Matrix classifier;       // [E x C]
  Matrix classifier_bias;  // [1 x C]

  static SupernetWeights zeros(const SupernetConfig& config);

  // Visits every tensor with a stable name ("embedding", "layer0.wq", ...,
  // "classifier.w", "classifier.b") in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Matrix&)>& fn) const;

  bool operator==(const SupernetWeights& other) const;
};

// 64-bit FNV-1a over the raw bytes of every tensor in visiting order.
std::uint64_t checksum(const SupernetWeights& weights);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every matrix (fan_in =
// vocab_size for the embedding), zero biases, unit layer-norm gains.
SupernetWeights init_weights(const SupernetConfig& config, Rng& rng);

// Non-owning view of a sub-network's weights: every accessor returns a block
// of the shared tensors, so no data is copied.
class SubnetView {
 public:
  SubnetView(const SupernetWeights& weights, const SupernetConfig& config,
             const ArchitectureSpec& arch);

  int depth() const { return depth_; }
  int head_dim() const { return head_dim_; }
  int heads(int l) const { return heads_[l]; }
  int width(int l) const { return heads_[l] * head_dim_; }
  int hidden(int l) const { return hidden_[l]; }

  const Matrix& embedding() const { return w_->embedding; }
  auto wq(int l) const { return w_->layers[l].wq.leftCols(width(l)); }
  auto bq(int l) const { return w_->layers[l].bq.leftCols(width(l)); }
  auto wk(int l) const { return w_->layers[l].wk.leftCols(width(l)); }
  auto bk(int l) const { return w_->layers[l].bk.leftCols(width(l)); }
  auto wv(int l) const { return w_->layers[l].wv.leftCols(width(l)); }
  auto bv(int l) const { return w_->layers[l].bv.leftCols(width(l)); }
  auto wo(int l) const { return w_->layers[l].wo.topRows(width(l)); }
  const Matrix& bo(int l) const { return w_->layers[l].bo; }
  const Matrix& ln1_gamma(int l) const { return w_->layers[l].ln1_gamma; }
  const Matrix& ln1_beta(int l) const { return w_->layers[l].ln1_beta; }
  auto w1(int l) const { return w_->layers[l].w1.leftCols(hidden(l)); }
  auto b1(int l) const { return w_->layers[l].b1.leftCols(hidden(l)); }
  auto w2(int l) const { return w_->layers[l].w2.topRows(hidden(l)); }
  const Matrix& b2(int l) const { return w_->layers[l].b2; }
  const Matrix& ln2_gamma(int l) const { return w_->layers[l].ln2_gamma; }
  const Matrix& ln2_beta(int l) const { return w_->layers[l].ln2_beta; }
  const Matrix& classifier() const { return w_->classifier; }
  const Matrix& classifier_bias() const { return w_->classifier_bias; }

  int vocab_size() const { return static_cast<int>(w_->embedding.rows()); }
  int embed_dim() const { return static_cast<int>(w_->embedding.cols()); }

 private:
  const SupernetWeights* w_;
  int depth_;
  int head_dim_;
  std::vector<int> heads_;
  std::vector<int> hidden_;
};

SubnetView extract_subnet(const SupernetWeights& weights,
                          const SupernetConfig& config,
                          const ArchitectureSpec& arch);

struct ForwardResult {
  double loss = 0.0;      // mean cross-entropy over the batch
  Matrix logits;          // [batch x C]
  int correct = 0;        // argmax(logits) == label
};

// Per layer: h-head self-attention (scale 1/sqrt(head_dim)), residual,
// layer norm, GELU FFN of width k, residual, layer norm. Then mean-pool over
// positions, linear classifier, cross-entropy. Throws kInvalidArgument on
// token ids or labels out of range.
ForwardResult forward(const SubnetView& subnet, const Batch& batch);
ForwardResult forward(const SupernetWeights& weights,
                      const SupernetConfig& config,
                      const ArchitectureSpec& arch, const Batch& batch);

// Exact gradient of the mean loss with respect to every tensor. Entries
// outside the sub-network's slices are zero.
struct GradientResult {
  ForwardResult forward;
  SupernetWeights grads;
};

GradientResult gradients(const SupernetWeights& weights,
                         const SupernetConfig& config,
                         const ArchitectureSpec& arch, const Batch& batch);

// Union of the slices touched by a set of architectures: per layer, the
// widest attention and FFN width used (0 = layer unused).
struct SliceCoverage {
  std::vector<int> width;
  std::vector<int> hidden;

  static SliceCoverage of(const SupernetConfig& config,
                          std::span<const ArchitectureSpec> archs);
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Linear decay to 0 at this step count; 0 disables decay.
  std::int64_t total_steps = 0;
};

// First/second moments shaped like the weights, plus the step counter.
struct AdamState {
  SupernetWeights m;
  SupernetWeights v;
  std::int64_t step = 0;

  static AdamState zeros(const SupernetConfig& config);
};

// Current learning rate under linear decay.
double scheduled_learning_rate(const AdamConfig& config, std::int64_t step);

// One Adam step (no weight decay) restricted to the covered slices; the
// embedding and classifier are always covered. Weights and moments outside
// the coverage are untouched.
void apply_update(SupernetWeights& weights, AdamState& state,
                  const SupernetWeights& grads, const SliceCoverage& coverage,
                  const AdamConfig& config);

// Fraction of correctly classified examples, averaged over batches.
double evaluate_accuracy(const SupernetWeights& weights,
                         const SupernetConfig& config,
                         const ArchitectureSpec& arch,
                         std::span<const Batch> batches);

}  // namespace eesng
