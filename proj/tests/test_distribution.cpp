#include <doctest.h>

#include <cmath>
#include <map>

#include "eesng/distribution.hpp"
#include "eesng/error.hpp"
#include "oracles.hpp"

using namespace eesng;

namespace {

CategoricalParams single_variable(std::vector<double> p) {
  std::vector<bool> s(p.size(), true);
  return CategoricalParams({std::move(p)}, {s});
}

// 16 architectures: one depth option, two layers of (2 heads x 2 sizes).
SearchSpace space16() { return SearchSpace(2, {2}, {2, 1}, {8, 4}); }

// 20 architectures with a variable depth, so inactive layers occur.
SearchSpace space20() { return SearchSpace(2, {1, 2}, {2, 1}, {8, 4}); }

CategoricalParams random_params(const SearchSpace& space, Rng& rng) {
  auto support = support_of(space);
  CategoricalParams::Table t(support.size());
  for (std::size_t v = 0; v < t.size(); ++v) {
    double sum = 0;
    for (bool s : support[v]) {
      const double x = s ? 0.05 + rng.uniform() : 0.0;
      t[v].push_back(x);
      sum += x;
    }
    for (double& x : t[v]) x /= sum;
  }
  return CategoricalParams(t, support);
}

}  // namespace

TEST_CASE("uniform_init covers the active options only") {
  const auto desk = SearchSpace::preset("desk");
  const auto p = uniform_init(desk);
  CHECK(p.num_variables() == 9);
  for (std::size_t v = 0; v < p.num_variables(); ++v) {
    for (double x : p.probs(v)) CHECK(x == doctest::Approx(1.0 / 3.0));
  }
  const auto narrow = uniform_init(desk.with_active_counts({1, 2, 3}));
  CHECK(narrow.probs(0)[2] == 1.0);  // depth 4 only
  CHECK(narrow.probs(0)[0] == 0.0);
  CHECK(narrow.probs(1) == std::vector<double>{0.5, 0.5, 0.0});
}

TEST_CASE("params constructor enforces the simplex") {
  CHECK_THROWS_AS(single_variable({0.5, 0.6}), Error);
  CHECK_THROWS_AS(single_variable({-0.1, 1.1}), Error);
  CHECK_THROWS_AS(CategoricalParams({{0.5, 0.5}}, {{true, false}}), Error);
}

TEST_CASE("log-likelihood examples") {
  // Five variables, nine options each, uniform.
  CategoricalParams::Table t(5, std::vector<double>(9, 1.0 / 9.0));
  CategoricalParams::Support s(5, std::vector<bool>(9, true));
  const CategoricalParams p(t, s);
  const std::vector<int> choice{0, 3, 8, 1, 4};
  CHECK(log_likelihood(p, choice) == doctest::Approx(5 * std::log(1.0 / 9.0)));
  CHECK(log_likelihood(p, choice) == doctest::Approx(-10.986).epsilon(1e-4));

  const auto det = single_variable({0.0, 1.0});
  CHECK(log_likelihood(det, std::vector<int>{1}) == 0.0);
  CHECK(std::isinf(log_likelihood(det, std::vector<int>{0})));
  CHECK_THROWS_AS(log_likelihood(det, std::vector<int>{0}, true), Error);
}

TEST_CASE("architecture probabilities match raw-assignment enumeration") {
  Rng rng(3);
  for (const auto& space : {space16(), space20()}) {
    const auto params = random_params(space, rng);
    const auto oracle_probs = oracle::architecture_probabilities(params, space);
    double total = 0;
    for (const auto& arch : enumerate(space, 100)) {
      const double p = std::exp(log_likelihood(params, space, arch));
      CHECK(p == doctest::Approx(oracle_probs.at(to_string(arch))).epsilon(1e-12));
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oracle_probs.size() == cardinality(space));
  }
}

TEST_CASE("entropy and maximum entropy") {
  CHECK(entropy(single_variable({1 / 3.0, 1 / 3.0, 1 / 3.0})) ==
        doctest::Approx(std::log(3.0)));
  CHECK(entropy(single_variable({0.0, 1.0, 0.0})) == 0.0);
  const auto desk = SearchSpace::preset("desk");
  CHECK(max_entropy(desk) == doctest::Approx(9 * std::log(3.0)));
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    CHECK(entropy(random_params(desk, rng)) <= max_entropy(desk) + 1e-12);
  }
}

TEST_CASE("natural gradient step direct formula") {
  const auto p = single_variable({0.5, 0.5});
  const std::vector<std::vector<int>> batch{{0}};
  const std::vector<double> u{-1.0};
  const auto next = natural_gradient_step(p, batch, u, 0.1);
  CHECK(next.prob(0, 0) == doctest::Approx(0.55).epsilon(1e-14));
  CHECK(next.prob(0, 1) == doctest::Approx(0.45).epsilon(1e-14));

  const std::vector<double> zero{0.0};
  CHECK(natural_gradient_step(p, batch, zero, 0.1) == p);
}

TEST_CASE("inactive-layer variables are not updated by a sample") {
  const auto space = space20();
  const auto params = uniform_init(space);
  const ArchitectureSpec shallow{1, {1, 2}, {4, 8}};
  const std::vector<std::vector<int>> batch{choice_indices(shallow, space)};
  const std::vector<double> u{-1.0};
  const auto next = natural_gradient_step(params, batch, u, 0.2);
  CHECK(next.probs(3) == params.probs(3));
  CHECK(next.probs(4) == params.probs(4));
  CHECK(next.prob(1, 1) > params.prob(1, 1));
}

TEST_CASE("projection keeps the floor and the simplex") {
  std::vector<double> p{0.9995, 0.0005, -0.2, 0.4};
  const std::vector<bool> s{true, true, true, false};
  project_to_floor(p, s, 1e-3);
  CHECK(p[3] == 0.0);
  CHECK(p[1] == doctest::Approx(1e-3));
  CHECK(p[2] == doctest::Approx(1e-3));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));

  std::vector<double> one{0.2};
  project_to_floor(one, {true}, 1e-3);
  CHECK(one[0] == 1.0);
  std::vector<double> tight{0.0, 0.0};
  CHECK_THROWS_AS(project_to_floor(tight, {true, true}, 0.6), Error);
}

TEST_CASE("reinforcement: a uniquely best sample gains probability") {
  // Ranking utilities on a pair: the better sample gets -1, the other +1.
  // Options picked only by the better sample must gain probability; options
  // both picked cancel out.
  Rng rng(11);
  const auto space = SearchSpace::preset("desk");
  for (int trial = 0; trial < 200; ++trial) {
    const auto params = random_params(space, rng);
    const std::vector<std::vector<int>> batch{
        choice_indices(sample(params, space, rng), space),
        choice_indices(sample(params, space, rng), space)};
    const std::vector<double> losses{0.1, 0.7};
    const auto u = utility_transform(losses, UtilityMode::kRanking);
    const auto next = natural_gradient_step(params, batch, u, 0.05);
    for (std::size_t v = 0; v < params.num_variables(); ++v) {
      const int best = batch[0][v];
      if (best < 0) continue;
      if (best != batch[1][v]) {
        CHECK(next.prob(v, best) > params.prob(v, best));
      } else {
        CHECK(next.prob(v, best) >= params.prob(v, best) - 1e-15);
      }
    }
  }
}

TEST_CASE("utility transform") {
  CHECK(utility_transform(std::vector<double>{0.2, 0.9}, UtilityMode::kRanking) ==
        std::vector<double>{-1.0, 1.0});
  CHECK(utility_transform(std::vector<double>{0.4, 0.4}, UtilityMode::kRanking) ==
        std::vector<double>{0.0, 0.0});
  CHECK(utility_transform(std::vector<double>{3, 1, 2}, UtilityMode::kRanking) ==
        std::vector<double>{1.0, -1.0, 0.0});
  CHECK(utility_transform(std::vector<double>{0.3, 7}, UtilityMode::kRawLoss) ==
        std::vector<double>{0.3, 7});
  CHECK_THROWS_AS(utility_transform(std::vector<double>{1.0}, UtilityMode::kRanking),
                  Error);

  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> losses(2 + rng.below(10));
    for (double& x : losses) x = rng.uniform();
    const auto u = utility_transform(losses, UtilityMode::kRanking);
    double sum = 0;
    for (double x : u) sum += x;
    CHECK(sum == doctest::Approx(0.0));
    std::vector<double> warped;
    for (double x : losses) warped.push_back(std::exp(3 * x) - 10);
    CHECK(utility_transform(warped, UtilityMode::kRanking) == u);
  }
}

TEST_CASE("sampling: deterministic params, reproducibility, uniform frequencies") {
  const auto desk = SearchSpace::preset("desk");
  const ArchitectureSpec target{3, {2, 1, 4, 4}, {16, 64, 32, 64}};
  const auto choices = choice_indices(target, desk);
  auto support = support_of(desk);
  CategoricalParams::Table t(support.size());
  for (std::size_t v = 0; v < t.size(); ++v) {
    t[v].assign(3, 0.0);
    t[v][choices[v] < 0 ? desk.largest_index(desk.variable_dimension(v))
                        : static_cast<std::size_t>(choices[v])] = 1.0;
  }
  const CategoricalParams det(t, support);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample(det, desk, rng) == target);

  Rng a(99), b(99);
  const auto u = uniform_init(desk);
  for (int i = 0; i < 50; ++i) CHECK(sample(u, desk, a) == sample(u, desk, b));

  // Per-option frequencies of the raw draws: chi-square with 2 dof per
  // variable. 18.4 = -2 ln(1e-4), the 0.9999 quantile, so the family of 9
  // tests has a false-alarm rate below 0.1%.
  Rng r(2024);
  const int n = 100'000;
  std::vector<std::array<int, 3>> counts(desk.num_variables(), {0, 0, 0});
  for (int i = 0; i < n; ++i) {
    const auto x = sample_choices(u, r);
    for (std::size_t v = 0; v < x.size(); ++v) ++counts[v][x[v]];
  }
  for (const auto& c : counts) {
    double chi2 = 0;
    for (int k : c) chi2 += std::pow(k - n / 3.0, 2) / (n / 3.0);
    CHECK(chi2 < 18.4);
  }
}

TEST_CASE("natural gradient estimator is unbiased on a variable-depth space") {
  const auto space = space20();
  Rng rng(17);
  const auto params = random_params(space, rng);
  const auto loss = [](const ArchitectureSpec& a) {
    return 0.1 * a.depth + 0.01 * a.heads[0] * a.intermediates[0] +
           0.02 * a.heads[1];
  };
  const auto exact = oracle::exact_natural_gradient(params, space, loss);
  const int n = 100'000;
  std::vector<std::vector<int>> batch;
  std::vector<double> utilities;
  batch.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto arch = sample(params, space, rng);
    batch.push_back(choice_indices(arch, space));
    utilities.push_back(loss(arch));
  }
  const auto est = natural_gradient_estimate(params, batch, utilities);
  for (std::size_t v = 0; v < exact.size(); ++v) {
    for (std::size_t i = 0; i < exact[v].size(); ++i) {
      CHECK(std::abs(est[v][i] - exact[v][i]) < 0.01);
    }
  }
}

TEST_CASE("widening gives new options 1/(2|active|) mass") {
  const auto desk = SearchSpace::preset("desk");
  const auto narrow = desk.with_active_counts({1, 1, 1});
  const auto p = uniform_init(narrow);
  const auto wider = widen(p, desk.with_active_counts({1, 2, 1}));
  // Head variables: {4} -> {4, 2}; the new option takes 1/4.
  CHECK(wider.prob(1, 1) == doctest::Approx(0.25));
  CHECK(wider.prob(1, 0) == doctest::Approx(0.75));
  CHECK(wider.probs(2) == p.probs(2));
  CHECK(wider.supported(1, 1));

  const auto twice = widen(p, desk.with_active_counts({1, 3, 1}));
  // {4} -> {4, 2} (p_new 1/4) -> {4, 2, 1} (p_new 1/6).
  CHECK(twice.prob(1, 2) == doctest::Approx(1.0 / 6.0));
  CHECK(twice.prob(1, 1) == doctest::Approx(0.25 * 5.0 / 6.0));
}

TEST_CASE("controller ratio and gate") {
  const auto desk = SearchSpace::preset("desk");
  ControllerState state;
  state = update_controller(uniform_init(desk), desk, state);
  CHECK(state.exploit_probability == doctest::Approx(1.0));

  auto support = support_of(desk);
  CategoricalParams::Table t(support.size(), std::vector<double>{1.0, 0.0, 0.0});
  state = update_controller(CategoricalParams(t, support), desk, state);
  CHECK(state.exploit_probability == 0.0);

  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    state = update_controller(random_params(desk, rng), desk, state);
    CHECK(state.exploit_probability >= 0.0);
    CHECK(state.exploit_probability <= 1.0);
  }

  ControllerState always{1.0, 1, 0, 0};
  ControllerState never{0.0, 1, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    CHECK(controller_gate(always, rng) == Gate::kExploit);
    CHECK(controller_gate(never, rng) == Gate::kExplore);
  }
}

TEST_CASE("exact expected loss") {
  const auto space = space20();
  const auto loss = [](const ArchitectureSpec& a) {
    return static_cast<double>(a.depth * 10 + a.heads[0]);
  };
  // Uniform over variables is not uniform over architectures when depth
  // varies; on the fixed-depth space it is.
  const auto fixed = space16();
  double fixed_mean = 0;
  const auto fixed_archs = enumerate(fixed, 100);
  for (const auto& a : fixed_archs) fixed_mean += loss(a);
  fixed_mean /= static_cast<double>(fixed_archs.size());
  CHECK(exact_expected_loss(uniform_init(fixed), fixed, loss) ==
        doctest::Approx(fixed_mean));

  Rng rng(8);
  const auto params = random_params(space, rng);
  const double exact = exact_expected_loss(params, space, loss);
  double mc = 0, mc2 = 0;
  const int n = 20'000;
  for (int i = 0; i < n; ++i) {
    const double x = loss(sample(params, space, rng));
    mc += x;
    mc2 += x * x;
  }
  mc /= n;
  const double sd = std::sqrt((mc2 / n - mc * mc) / n);
  CHECK(std::abs(mc - exact) < 3 * sd);

  const ArchitectureSpec only{2, {1, 2}, {4, 8}};
  const auto c = choice_indices(only, space);
  auto support = support_of(space);
  CategoricalParams::Table t(support.size());
  for (std::size_t v = 0; v < t.size(); ++v) {
    t[v].assign(2, 0.0);
    t[v][c[v]] = 1.0;
  }
  CHECK(exact_expected_loss(CategoricalParams(t, support), space, loss) ==
        loss(only));
}
