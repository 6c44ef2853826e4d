#include "eesng/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "eesng/error.hpp"

namespace eesng {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using Vector = Eigen::VectorXd;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                Matrix& y, Matrix& xhat, Vector& rstd) {
  const auto n = x.rows();
  const auto e = static_cast<double>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).sum() / e;
    const double var = (x.row(r).array() - mean).square().sum() / e;
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() +
      beta.row(0).array();
}

// Returns dL/dx; accumulates the gain and shift gradients.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                           const Vector& rstd, const Matrix& gamma,
                           Matrix& dgamma, Matrix& dbeta) {
  dgamma.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  const auto e = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / e;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / e;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d -
                           xhat.row(r).array() * mean_dx);
  }
  return dx;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

struct LayerCache {
  Matrix input;         // [N x E]
  Matrix q, k, v;       // [N x A]
  std::vector<Matrix> probs;  // per (sequence, head): [S x S]
  Matrix attended;      // [N x A]
  Matrix xhat1;
  Vector rstd1;
  Matrix normed1;       // [N x E]
  Matrix pre;           // [N x K]
  Matrix act;           // [N x K]
  Matrix xhat2;
  Vector rstd2;
};

void check_batch(const SubnetView& net, const Batch& batch, int num_classes) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
  const std::size_t len = batch.front().tokens.size();
  for (const auto& ex : batch) {
    if (ex.tokens.size() != len || len == 0) {
      fail(ErrorCode::kInvalidArgument, "sequences must share one nonzero length");
    }
    for (int t : ex.tokens) {
      if (t < 0 || t >= net.vocab_size()) {
        fail(ErrorCode::kInvalidArgument,
             "token id " + std::to_string(t) + " outside the vocabulary");
      }
    }
    if (ex.label < 0 || ex.label >= num_classes) {
      fail(ErrorCode::kInvalidArgument,
           "label " + std::to_string(ex.label) + " outside the class range");
    }
  }
}

// Forward pass, plus the backward pass into `grads` when non-null.
ForwardResult run(const SubnetView& net, const Batch& batch,
                  SupernetWeights* grads) {
  const int num_classes = static_cast<int>(net.classifier().cols());
  check_batch(net, batch, num_classes);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto S = static_cast<Eigen::Index>(batch.front().tokens.size());
  const Eigen::Index N = B * S;
  const Eigen::Index E = net.embed_dim();
  const int dh = net.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(N, E);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index s = 0; s < S; ++s) {
      x.row(b * S + s) = net.embedding().row(batch[b].tokens[s]);
    }
  }

  std::vector<LayerCache> caches(static_cast<std::size_t>(net.depth()));
  for (int l = 0; l < net.depth(); ++l) {
    LayerCache& c = caches[l];
    const int h = net.heads(l);
    c.input = x;
    c.q = (x * net.wq(l)).rowwise() + net.bq(l).row(0);
    c.k = (x * net.wk(l)).rowwise() + net.bk(l).row(0);
    c.v = (x * net.wv(l)).rowwise() + net.bv(l).row(0);
    c.attended.resize(N, net.width(l));
    c.probs.resize(static_cast<std::size_t>(B * h));
    for (Eigen::Index b = 0; b < B; ++b) {
      for (int j = 0; j < h; ++j) {
        Matrix& p = c.probs[b * h + j];
        p = scale * c.q.block(b * S, j * dh, S, dh) *
            c.k.block(b * S, j * dh, S, dh).transpose();
        softmax_rows(p);
        c.attended.block(b * S, j * dh, S, dh) =
            p * c.v.block(b * S, j * dh, S, dh);
      }
    }
    const Matrix resid1 =
        x + ((c.attended * net.wo(l)).rowwise() + net.bo(l).row(0));
    layer_norm(resid1, net.ln1_gamma(l), net.ln1_beta(l), c.normed1, c.xhat1,
               c.rstd1);
    c.pre = (c.normed1 * net.w1(l)).rowwise() + net.b1(l).row(0);
    c.act = c.pre.unaryExpr([](double z) { return gelu(z); });
    const Matrix resid2 =
        c.normed1 + ((c.act * net.w2(l)).rowwise() + net.b2(l).row(0));
    layer_norm(resid2, net.ln2_gamma(l), net.ln2_beta(l), x, c.xhat2, c.rstd2);
  }

  Matrix pooled(B, E);
  for (Eigen::Index b = 0; b < B; ++b) {
    pooled.row(b) = x.middleRows(b * S, S).colwise().mean();
  }
  ForwardResult out;
  out.logits = (pooled * net.classifier()).rowwise() +
               net.classifier_bias().row(0);
  Matrix probs = out.logits;
  softmax_rows(probs);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto row = out.logits.row(b);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    loss += lse - row(batch[b].label);
    Eigen::Index arg = 0;
    row.maxCoeff(&arg);
    out.correct += arg == batch[b].label;
  }
  out.loss = loss / static_cast<double>(B);
  if (grads == nullptr) return out;

  // Backward.
  SupernetWeights& g = *grads;
  Matrix dlogits = probs;
  for (Eigen::Index b = 0; b < B; ++b) dlogits(b, batch[b].label) -= 1.0;
  dlogits /= static_cast<double>(B);
  g.classifier += pooled.transpose() * dlogits;
  g.classifier_bias.row(0) += dlogits.colwise().sum();
  const Matrix dpooled = dlogits * net.classifier().transpose();
  Matrix dx(N, E);
  for (Eigen::Index b = 0; b < B; ++b) {
    dx.middleRows(b * S, S).rowwise() =
        dpooled.row(b) / static_cast<double>(S);
  }

  for (int l = net.depth() - 1; l >= 0; --l) {
    const LayerCache& c = caches[l];
    LayerWeights& gl = g.layers[l];
    const int h = net.heads(l);
    const int A = net.width(l);
    const int K = net.hidden(l);

    const Matrix dresid2 = layer_norm_backward(
        dx, c.xhat2, c.rstd2, net.ln2_gamma(l), gl.ln2_gamma, gl.ln2_beta);
    gl.w2.topRows(K) += c.act.transpose() * dresid2;
    gl.b2.row(0) += dresid2.colwise().sum();
    Matrix dpre = dresid2 * net.w2(l).transpose();
    dpre = dpre.cwiseProduct(c.pre.unaryExpr([](double z) { return gelu_grad(z); }));
    gl.w1.leftCols(K) += c.normed1.transpose() * dpre;
    gl.b1.leftCols(K).row(0) += dpre.colwise().sum();
    const Matrix dnormed1 = dresid2 + dpre * net.w1(l).transpose();

    const Matrix dresid1 = layer_norm_backward(
        dnormed1, c.xhat1, c.rstd1, net.ln1_gamma(l), gl.ln1_gamma, gl.ln1_beta);
    gl.wo.topRows(A) += c.attended.transpose() * dresid1;
    gl.bo.row(0) += dresid1.colwise().sum();
    const Matrix dattended = dresid1 * net.wo(l).transpose();

    Matrix dq(N, A), dk(N, A), dv(N, A);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (int j = 0; j < h; ++j) {
        const Matrix& p = c.probs[b * h + j];
        const auto d_out = dattended.block(b * S, j * dh, S, dh);
        const Matrix dp = d_out * c.v.block(b * S, j * dh, S, dh).transpose();
        dv.block(b * S, j * dh, S, dh) = p.transpose() * d_out;
        Matrix dscore = p.cwiseProduct(
            (dp.colwise() - (dp.cwiseProduct(p)).rowwise().sum()));
        dscore *= scale;
        dq.block(b * S, j * dh, S, dh) = dscore * c.k.block(b * S, j * dh, S, dh);
        dk.block(b * S, j * dh, S, dh) =
            dscore.transpose() * c.q.block(b * S, j * dh, S, dh);
      }
    }
    gl.wq.leftCols(A) += c.input.transpose() * dq;
    gl.bq.leftCols(A).row(0) += dq.colwise().sum();
    gl.wk.leftCols(A) += c.input.transpose() * dk;
    gl.bk.leftCols(A).row(0) += dk.colwise().sum();
    gl.wv.leftCols(A) += c.input.transpose() * dv;
    gl.bv.leftCols(A).row(0) += dv.colwise().sum();
    dx = dresid1 + dq * net.wq(l).transpose() + dk * net.wk(l).transpose() +
         dv * net.wv(l).transpose();
  }

  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index s = 0; s < S; ++s) {
      g.embedding.row(batch[b].tokens[s]) += dx.row(b * S + s);
    }
  }
  return out;
}

template <typename Fn>
void visit_tensors(SupernetWeights& w, Fn&& fn) {
  fn(std::string("embedding"), w.embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(p + "wq", L.wq);
    fn(p + "bq", L.bq);
    fn(p + "wk", L.wk);
    fn(p + "bk", L.bk);
    fn(p + "wv", L.wv);
    fn(p + "bv", L.bv);
    fn(p + "wo", L.wo);
    fn(p + "bo", L.bo);
    fn(p + "ln1_gamma", L.ln1_gamma);
    fn(p + "ln1_beta", L.ln1_beta);
    fn(p + "w1", L.w1);
    fn(p + "b1", L.b1);
    fn(p + "w2", L.w2);
    fn(p + "b2", L.b2);
    fn(p + "ln2_gamma", L.ln2_gamma);
    fn(p + "ln2_beta", L.ln2_beta);
  }
  fn(std::string("classifier.w"), w.classifier);
  fn(std::string("classifier.b"), w.classifier_bias);
}

}  // namespace

SupernetConfig SupernetConfig::desk() { return SupernetConfig{}; }

SupernetConfig SupernetConfig::bert() {
  SupernetConfig c;
  c.vocab_size = 30522;
  c.embed_dim = 768;
  c.seq_len = 128;
  c.num_classes = 2;
  c.space = SearchSpace::preset("bert");
  return c;
}

void validate(const SupernetConfig& config) {
  if (config.vocab_size < 1 || config.embed_dim < 1 || config.seq_len < 1 ||
      config.num_classes < 2) {
    fail(ErrorCode::kConfig, "supernet dimensions must be positive (>= 2 classes)");
  }
  if (config.embed_dim % config.max_heads() != 0) {
    fail(ErrorCode::kConfig, "embed_dim " + std::to_string(config.embed_dim) +
                                 " is not divisible by the largest head count " +
                                 std::to_string(config.max_heads()));
  }
}

SupernetWeights SupernetWeights::zeros(const SupernetConfig& config) {
  validate(config);
  const int E = config.embed_dim;
  const int K = config.max_intermediate();
  SupernetWeights w;
  w.embedding = Matrix::Zero(config.vocab_size, E);
  w.layers.resize(static_cast<std::size_t>(config.space.max_depth()));
  for (auto& L : w.layers) {
    for (Matrix* m : {&L.wq, &L.wk, &L.wv, &L.wo}) *m = Matrix::Zero(E, E);
    for (Matrix* m : {&L.bq, &L.bk, &L.bv, &L.bo, &L.b2, &L.ln1_gamma,
                      &L.ln1_beta, &L.ln2_gamma, &L.ln2_beta}) {
      *m = Matrix::Zero(1, E);
    }
    L.w1 = Matrix::Zero(E, K);
    L.b1 = Matrix::Zero(1, K);
    L.w2 = Matrix::Zero(K, E);
  }
  w.classifier = Matrix::Zero(E, config.num_classes);
  w.classifier_bias = Matrix::Zero(1, config.num_classes);
  return w;
}

void SupernetWeights::for_each(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  visit_tensors(*this, fn);
}

void SupernetWeights::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  visit_tensors(const_cast<SupernetWeights&>(*this),
                [&](const std::string& name, Matrix& m) { fn(name, m); });
}

bool SupernetWeights::operator==(const SupernetWeights& other) const {
  if (layers.size() != other.layers.size()) return false;
  std::vector<const Matrix*> mine, theirs;
  for_each([&](const std::string&, const Matrix& m) { mine.push_back(&m); });
  other.for_each([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->rows() != theirs[i]->rows() ||
        mine[i]->cols() != theirs[i]->cols() || *mine[i] != *theirs[i]) {
      return false;
    }
  }
  return true;
}

std::uint64_t checksum(const SupernetWeights& weights) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  weights.for_each([&](const std::string&, const Matrix& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(m.size()); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ull;
    }
  });
  return h;
}

SupernetWeights init_weights(const SupernetConfig& config, Rng& rng) {
  SupernetWeights w = SupernetWeights::zeros(config);
  const auto fill = [&](Matrix& m, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    // Column-major fill order keeps the stream layout fixed.
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
    }
  };
  fill(w.embedding, config.vocab_size);
  const double E = config.embed_dim;
  for (auto& L : w.layers) {
    fill(L.wq, E);
    fill(L.wk, E);
    fill(L.wv, E);
    fill(L.wo, E);
    L.ln1_gamma.setOnes();
    fill(L.w1, E);
    fill(L.w2, config.max_intermediate());
    L.ln2_gamma.setOnes();
  }
  fill(w.classifier, E);
  return w;
}

SubnetView::SubnetView(const SupernetWeights& weights,
                       const SupernetConfig& config,
                       const ArchitectureSpec& arch)
    : w_(&weights), depth_(arch.depth), head_dim_(config.head_dim()) {
  validate(arch, config.space);
  if (static_cast<int>(weights.layers.size()) != config.space.max_depth() ||
      weights.embedding.cols() != config.embed_dim) {
    fail(ErrorCode::kInvalidArgument, "weights do not match the supernet config");
  }
  heads_.assign(arch.heads.begin(), arch.heads.begin() + arch.depth);
  hidden_.assign(arch.intermediates.begin(),
                 arch.intermediates.begin() + arch.depth);
}

SubnetView extract_subnet(const SupernetWeights& weights,
                          const SupernetConfig& config,
                          const ArchitectureSpec& arch) {
  return SubnetView(weights, config, arch);
}

ForwardResult forward(const SubnetView& subnet, const Batch& batch) {
  return run(subnet, batch, nullptr);
}

ForwardResult forward(const SupernetWeights& weights,
                      const SupernetConfig& config,
                      const ArchitectureSpec& arch, const Batch& batch) {
  return run(extract_subnet(weights, config, arch), batch, nullptr);
}

GradientResult gradients(const SupernetWeights& weights,
                         const SupernetConfig& config,
                         const ArchitectureSpec& arch, const Batch& batch) {
  GradientResult out;
  out.grads = SupernetWeights::zeros(config);
  out.forward = run(extract_subnet(weights, config, arch), batch, &out.grads);
  return out;
}

SliceCoverage SliceCoverage::of(const SupernetConfig& config,
                                std::span<const ArchitectureSpec> archs) {
  SliceCoverage c;
  const auto n = static_cast<std::size_t>(config.space.max_depth());
  c.width.assign(n, 0);
  c.hidden.assign(n, 0);
  for (const auto& a : archs) {
    for (int l = 0; l < a.depth; ++l) {
      c.width[l] = std::max(c.width[l], a.heads[l] * config.head_dim());
      c.hidden[l] = std::max(c.hidden[l], a.intermediates[l]);
    }
  }
  return c;
}

AdamState AdamState::zeros(const SupernetConfig& config) {
  return AdamState{SupernetWeights::zeros(config), SupernetWeights::zeros(config), 0};
}

double scheduled_learning_rate(const AdamConfig& config, std::int64_t step) {
  if (config.total_steps <= 0) return config.learning_rate;
  const double frac = 1.0 - static_cast<double>(step) /
                                static_cast<double>(config.total_steps);
  return config.learning_rate * std::max(frac, 0.0);
}

void apply_update(SupernetWeights& weights, AdamState& state,
                  const SupernetWeights& grads, const SliceCoverage& coverage,
                  const AdamConfig& config) {
  const double lr = scheduled_learning_rate(config, state.step);
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const auto step = [&](auto&& w, auto&& m, auto&& v, const auto& g) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    w.array() -= lr * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + config.epsilon);
  };
  step(weights.embedding, state.m.embedding, state.v.embedding, grads.embedding);
  step(weights.classifier, state.m.classifier, state.v.classifier, grads.classifier);
  step(weights.classifier_bias, state.m.classifier_bias, state.v.classifier_bias,
       grads.classifier_bias);
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const int A = coverage.width[l];
    const int K = coverage.hidden[l];
    if (A == 0) continue;
    auto& W = weights.layers[l];
    auto& M = state.m.layers[l];
    auto& V = state.v.layers[l];
    const auto& G = grads.layers[l];
    step(W.wq.leftCols(A), M.wq.leftCols(A), V.wq.leftCols(A), G.wq.leftCols(A));
    step(W.bq.leftCols(A), M.bq.leftCols(A), V.bq.leftCols(A), G.bq.leftCols(A));
    step(W.wk.leftCols(A), M.wk.leftCols(A), V.wk.leftCols(A), G.wk.leftCols(A));
    step(W.bk.leftCols(A), M.bk.leftCols(A), V.bk.leftCols(A), G.bk.leftCols(A));
    step(W.wv.leftCols(A), M.wv.leftCols(A), V.wv.leftCols(A), G.wv.leftCols(A));
    step(W.bv.leftCols(A), M.bv.leftCols(A), V.bv.leftCols(A), G.bv.leftCols(A));
    step(W.wo.topRows(A), M.wo.topRows(A), V.wo.topRows(A), G.wo.topRows(A));
    step(W.bo, M.bo, V.bo, G.bo);
    step(W.ln1_gamma, M.ln1_gamma, V.ln1_gamma, G.ln1_gamma);
    step(W.ln1_beta, M.ln1_beta, V.ln1_beta, G.ln1_beta);
    step(W.w1.leftCols(K), M.w1.leftCols(K), V.w1.leftCols(K), G.w1.leftCols(K));
    step(W.b1.leftCols(K), M.b1.leftCols(K), V.b1.leftCols(K), G.b1.leftCols(K));
    step(W.w2.topRows(K), M.w2.topRows(K), V.w2.topRows(K), G.w2.topRows(K));
    step(W.b2, M.b2, V.b2, G.b2);
    step(W.ln2_gamma, M.ln2_gamma, V.ln2_gamma, G.ln2_gamma);
    step(W.ln2_beta, M.ln2_beta, V.ln2_beta, G.ln2_beta);
  }
}

double evaluate_accuracy(const SupernetWeights& weights,
                         const SupernetConfig& config,
                         const ArchitectureSpec& arch,
                         std::span<const Batch> batches) {
  if (batches.empty()) fail(ErrorCode::kInvalidArgument, "no validation batches");
  const SubnetView net = extract_subnet(weights, config, arch);
  double total = 0.0;
  for (const auto& b : batches) {
    total += static_cast<double>(forward(net, b).correct) /
             static_cast<double>(b.size());
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace eesng
