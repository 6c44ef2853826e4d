#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eesng/distribution.hpp"
#include "eesng/error.hpp"
#include "eesng/supernet.hpp"
#include "supernet_oracles.hpp"

using namespace eesng;

namespace {

// Small enough for per-coordinate finite differences to stay fast.
SupernetConfig small_config() {
  SupernetConfig c;
  c.vocab_size = 6;
  c.embed_dim = 8;
  c.seq_len = 5;
  c.space = SearchSpace(3, {1, 2, 3}, {4, 2, 1}, {12, 6, 3});
  return c;
}

Batch random_batch(const SupernetConfig& c, int size, Rng& rng) {
  Batch b(static_cast<std::size_t>(size));
  for (auto& ex : b) {
    ex.tokens.resize(static_cast<std::size_t>(c.seq_len));
    for (auto& t : ex.tokens) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab_size)));
    ex.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_classes)));
  }
  return b;
}

// Nonzero biases and gains so every parameter kind affects the loss.
SupernetWeights perturbed_weights(const SupernetConfig& c, Rng& rng) {
  SupernetWeights w = init_weights(c, rng);
  w.for_each([&](const std::string& name, Matrix& m) {
    const bool gain = name.find("gamma") != std::string::npos;
    const bool bias = name.find(".b") != std::string::npos || name.find("beta") != std::string::npos;
    if (gain || bias) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) += rng.uniform(-0.3, 0.3);
    }
  });
  return w;
}

}  // namespace

TEST_CASE("supernet config validation and shapes") {
  SupernetConfig bad = SupernetConfig::desk();
  bad.embed_dim = 30;
  CHECK_THROWS_AS(validate(bad), Error);
  const auto c = SupernetConfig::desk();
  CHECK(c.head_dim() == 8);
  Rng rng(1);
  const auto w = init_weights(c, rng);
  CHECK(w.embedding.rows() == 8);
  CHECK(w.embedding.cols() == 32);
  REQUIRE(w.layers.size() == 4);
  CHECK(w.layers[0].wq.rows() == 32);
  CHECK(w.layers[0].wq.cols() == 32);
  CHECK(w.layers[0].w1.cols() == 64);
  CHECK(w.layers[0].w2.rows() == 64);
  CHECK(w.classifier.cols() == 2);
  int count = 0;
  std::vector<std::string> names;
  w.for_each([&](const std::string& n, const Matrix&) { names.push_back(n); ++count; });
  CHECK(count == 1 + 16 * 4 + 2);
  CHECK(names.front() == "embedding");
  CHECK(names[1] == "layer0.wq");
  CHECK(names.back() == "classifier.b");
}

TEST_CASE("init is seed-determined and scaled by fan-in") {
  const auto c = SupernetConfig::desk();
  Rng a(7), b(7), d(8);
  const auto wa = init_weights(c, a);
  const auto wb = init_weights(c, b);
  const auto wd = init_weights(c, d);
  CHECK(wa == wb);
  CHECK(checksum(wa) == checksum(wb));
  CHECK_FALSE(wa == wd);
  CHECK(checksum(wa) != checksum(wd));
  CHECK(wa.layers[0].wq.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
  CHECK(wa.layers[0].w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(64.0));
  CHECK(wa.embedding.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(wa.layers[1].bq.isZero());
  CHECK(wa.layers[1].ln2_gamma.isOnes());
}

TEST_CASE("subnet view slices the leading blocks") {
  const auto c = SupernetConfig::desk();
  Rng rng(3);
  const auto w = init_weights(c, rng);
  const ArchitectureSpec a{3, {2, 4, 1, 4}, {32, 64, 16, 64}};
  const SubnetView v(w, c, a);
  CHECK(v.wq(0).rows() == 32);
  CHECK(v.wq(0).cols() == 16);
  CHECK(v.wo(2).rows() == 8);
  CHECK(v.w1(2).cols() == 16);
  CHECK(v.w2(0).rows() == 32);
  CHECK(v.wq(0)(5, 3) == w.layers[0].wq(5, 3));
  CHECK(v.wq(1).data() == w.layers[1].wq.data());
  const ArchitectureSpec bad{3, {3, 4, 1, 4}, {32, 64, 16, 64}};
  CHECK_THROWS_AS(SubnetView(w, c, bad), Error);
}

TEST_CASE("forward rejects malformed batches") {
  const auto c = SupernetConfig::desk();
  Rng rng(5);
  const auto w = init_weights(c, rng);
  const auto full = max_architecture(c.space);
  Batch b = random_batch(c, 2, rng);
  b[0].tokens[0] = 8;
  CHECK_THROWS_AS(forward(w, c, full, b), Error);
  b = random_batch(c, 2, rng);
  b[1].label = 2;
  CHECK_THROWS_AS(forward(w, c, full, b), Error);
  b = random_batch(c, 2, rng);
  b[1].tokens.pop_back();
  CHECK_THROWS_AS(forward(w, c, full, b), Error);
  CHECK_THROWS_AS(forward(w, c, full, Batch{}), Error);
}

TEST_CASE("zero classifier gives ln(num_classes)") {
  auto c = SupernetConfig::desk();
  c.num_classes = 3;
  Rng rng(11);
  auto w = init_weights(c, rng);
  w.classifier.setZero();
  w.classifier_bias.setZero();
  Batch b = random_batch(c, 4, rng);
  for (auto& ex : b) ex.label = ex.label % 3;
  CHECK(forward(w, c, max_architecture(c.space), b).loss ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("batch order does not change the mean loss") {
  const auto c = SupernetConfig::desk();
  Rng rng(13);
  const auto w = init_weights(c, rng);
  Batch b = random_batch(c, 6, rng);
  const auto arch = sample_uniform(c.space, rng);
  const double before = forward(w, c, arch, b).loss;
  std::reverse(b.begin(), b.end());
  std::rotate(b.begin(), b.begin() + 2, b.end());
  CHECK(forward(w, c, arch, b).loss == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("sliced forward equals the masked full-width oracle") {
  const auto c = SupernetConfig::desk();
  Rng rng(17);
  const auto w = perturbed_weights(c, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto arch = sample_uniform(c.space, rng);
    const Batch b = random_batch(c, 3, rng);
    const auto got = forward(w, c, arch, b);
    const auto [logits, loss] = oracle::masked_forward(w, c, arch, b);
    CHECK((got.logits - logits).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(got.loss - loss) < 1e-6);
  }
}

TEST_CASE("gradients match central finite differences") {
  const auto c = small_config();
  Rng rng(19);
  const auto w = perturbed_weights(c, rng);
  const Batch b = random_batch(c, 3, rng);
  for (const auto& arch : {max_architecture(c.space),
                           ArchitectureSpec{2, {2, 1, 4}, {6, 3, 12}},
                           ArchitectureSpec{1, {1, 4, 4}, {3, 12, 12}}}) {
    const auto g = gradients(w, c, arch, b);
    const auto rep = oracle::finite_difference_check(w, c, arch, b, g.grads, 10, rng);
    CAPTURE(rep.worst_name);
    CHECK(rep.checked > 0);
    CHECK(rep.worst_relative < 1e-4);
    CHECK(g.forward.loss == doctest::Approx(forward(w, c, arch, b).loss).epsilon(1e-14));
  }
}

TEST_CASE("inactive slices receive exactly zero gradient") {
  const auto c = small_config();
  Rng rng(23);
  const auto w = perturbed_weights(c, rng);
  const Batch b = random_batch(c, 2, rng);
  const ArchitectureSpec arch{2, {2, 1, 4}, {6, 3, 12}};
  const auto g = gradients(w, c, arch, b).grads;
  g.for_each([&](const std::string& name, const Matrix& m) {
    const auto [rows, cols] = oracle::active_extent(name, m, c, arch);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        if (r >= rows || col >= cols) {
          if (m(r, col) != 0.0) FAIL_CHECK(name << "(" << r << "," << col << ")");
        }
      }
    }
  });
  // Unused layer is all zero.
  CHECK(g.layers[2].wq.isZero(0.0));
  CHECK(g.layers[2].ln1_gamma.isZero(0.0));
}

TEST_CASE("duplicated batch has the single-example gradient") {
  const auto c = small_config();
  Rng rng(29);
  const auto w = perturbed_weights(c, rng);
  const Batch one = random_batch(c, 1, rng);
  const Batch three{one[0], one[0], one[0]};
  const auto arch = max_architecture(c.space);
  const auto g1 = gradients(w, c, arch, one).grads;
  const auto g3 = gradients(w, c, arch, three).grads;
  std::vector<const Matrix*> a, b;
  g1.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  g3.for_each([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((*a[i] - *b[i]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a[i]->cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("adam update edge cases") {
  const auto c = small_config();
  Rng rng(31);
  const auto w0 = perturbed_weights(c, rng);
  const auto full = max_architecture(c.space);
  const std::vector<ArchitectureSpec> archs{full};
  const auto cov = SliceCoverage::of(c, archs);

  SUBCASE("zero gradient leaves weights unchanged") {
    auto w = w0;
    auto st = AdamState::zeros(c);
    apply_update(w, st, SupernetWeights::zeros(c), cov, AdamConfig{});
    CHECK(w == w0);
    CHECK(st.step == 1);
  }
  SUBCASE("zero learning rate leaves weights unchanged") {
    auto w = w0;
    auto st = AdamState::zeros(c);
    AdamConfig cfg;
    cfg.learning_rate = 0.0;
    const Batch b = random_batch(c, 2, rng);
    apply_update(w, st, gradients(w, c, full, b).grads, cov, cfg);
    CHECK(w == w0);
  }
  SUBCASE("fresh step moves against the gradient sign by lr") {
    auto w = w0;
    auto st = AdamState::zeros(c);
    const Batch b = random_batch(c, 2, rng);
    const auto g = gradients(w, c, full, b).grads;
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    apply_update(w, st, g, cov, cfg);
    const double gv = g.layers[0].w1(1, 2);
    const double dv = w.layers[0].w1(1, 2) - w0.layers[0].w1(1, 2);
    REQUIRE(gv != 0.0);
    CHECK(dv * gv < 0.0);
    CHECK(std::abs(dv) == doctest::Approx(1e-3).epsilon(1e-4));
  }
  SUBCASE("linear decay reaches zero") {
    AdamConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.total_steps = 100;
    CHECK(scheduled_learning_rate(cfg, 0) == doctest::Approx(0.01));
    CHECK(scheduled_learning_rate(cfg, 50) == doctest::Approx(0.005));
    CHECK(scheduled_learning_rate(cfg, 100) == 0.0);
    CHECK(scheduled_learning_rate(cfg, 150) == 0.0);
  }
}

TEST_CASE("training one architecture only touches its slices") {
  const auto c = small_config();
  Rng rng(37);
  const auto w0 = perturbed_weights(c, rng);
  auto w = w0;
  auto st = AdamState::zeros(c);
  const ArchitectureSpec arch{2, {2, 1, 4}, {6, 3, 12}};
  const std::vector<ArchitectureSpec> archs{arch};
  const auto cov = SliceCoverage::of(c, archs);
  CHECK(cov.width == std::vector<int>{4, 2, 0});
  CHECK(cov.hidden == std::vector<int>{6, 3, 0});
  for (int s = 0; s < 3; ++s) {
    const Batch b = random_batch(c, 2, rng);
    apply_update(w, st, gradients(w, c, arch, b).grads, cov, AdamConfig{});
  }
  std::vector<std::pair<std::string, const Matrix*>> before;
  w0.for_each([&](const std::string& n, const Matrix& m) { before.emplace_back(n, &m); });
  std::size_t i = 0;
  w.for_each([&](const std::string& name, const Matrix& m) {
    const Matrix& old = *before[i++].second;
    const auto [rows, cols] = oracle::active_extent(name, m, c, arch);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        if ((r >= rows || col >= cols) && m(r, col) != old(r, col)) {
          FAIL_CHECK(name << "(" << r << "," << col << ") changed");
        }
      }
    }
  });
  CHECK_FALSE(w.layers[0].wq == w0.layers[0].wq);
  CHECK(st.m.layers[2].w1.isZero(0.0));
}

TEST_CASE("training is bit-reproducible and lowers held-out loss") {
  const auto c = SupernetConfig::desk();
  const TaskSpec task{TaskKind::kMajority, 8, 16};
  const auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    auto w = init_weights(c, rng);
    auto st = AdamState::zeros(c);
    const auto arch = max_architecture(c.space);
    const std::vector<ArchitectureSpec> archs{arch};
    const auto cov = SliceCoverage::of(c, archs);
    AdamConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.total_steps = 60;
    for (int s = 0; s < 60; ++s) {
      const Batch b = make_batch(task, 16, rng);
      apply_update(w, st, gradients(w, c, arch, b).grads, cov, cfg);
    }
    return w;
  };
  const auto a = run(41);
  const auto b = run(41);
  CHECK(checksum(a) == checksum(b));

  Rng init_rng(41);
  const auto w0 = init_weights(c, init_rng);
  Rng data(999);
  const Batch held = make_batch(task, 128, data);
  const auto full = max_architecture(c.space);
  CHECK(forward(a, c, full, held).loss < forward(w0, c, full, held).loss);
}

TEST_CASE("evaluate_accuracy is deterministic and near chance at init") {
  const auto c = SupernetConfig::desk();
  const TaskSpec task{TaskKind::kMajority, 8, 16};
  Rng rng(43);
  const auto w = init_weights(c, rng);
  Rng data(44);
  std::vector<Batch> val;
  for (int i = 0; i < 8; ++i) val.push_back(make_batch(task, 50, data));
  const auto arch = sample_uniform(c.space, rng);
  const double acc = evaluate_accuracy(w, c, arch, val);
  CHECK(acc == evaluate_accuracy(w, c, arch, val));
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK_THROWS_AS(evaluate_accuracy(w, c, arch, std::span<const Batch>{}), Error);
}

TEST_CASE("synthetic tasks label correctly") {
  Rng rng(47);
  const TaskSpec maj{TaskKind::kMajority, 8, 16};
  for (const auto& ex : make_batch(maj, 200, rng)) {
    const auto zeros = std::count(ex.tokens.begin(), ex.tokens.end(), 0);
    const auto ones = std::count(ex.tokens.begin(), ex.tokens.end(), 1);
    CHECK(zeros != ones);
    CHECK(ex.label == (zeros > ones ? 1 : 0));
  }
  const TaskSpec dup{TaskKind::kDuplicate, 16, 16};
  int positives = 0;
  for (const auto& ex : make_batch(dup, 200, rng)) {
    auto sorted = ex.tokens;
    std::sort(sorted.begin(), sorted.end());
    const bool has_dup = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    CHECK(ex.label == (has_dup ? 1 : 0));
    positives += ex.label;
  }
  CHECK(positives > 60);
  CHECK(positives < 140);
  CHECK_THROWS_AS(validate(TaskSpec{TaskKind::kDuplicate, 8, 16}), Error);
  const Batch parsed = parse_dataset("0 1 2\t1\n\n3 4 5\t0\n");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].tokens == std::vector<int>{3, 4, 5});
  CHECK(parsed[0].label == 1);
  CHECK_THROWS_AS(parse_dataset("0 1 2 1\n"), Error);
  CHECK_THROWS_AS(parse_dataset("0 x\t1\n"), Error);
}
