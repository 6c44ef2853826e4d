#include "eesng/landscape.hpp"

#include <algorithm>
#include <string>

#include "eesng/error.hpp"

namespace eesng {

const char* landscape_name(LandscapeKind kind) {
  return kind == LandscapeKind::kPlantedOptimum ? "planted_optimum" : "deceptive";
}

LandscapeKind parse_landscape(std::string_view name) {
  if (name == "planted_optimum") return LandscapeKind::kPlantedOptimum;
  if (name == "deceptive") return LandscapeKind::kDeceptive;
  fail(ErrorCode::kConfig, "unknown landscape '" + std::string(name) +
                               "' (expected planted_optimum|deceptive)");
}

int hamming_distance(const ArchitectureSpec& a, const ArchitectureSpec& b,
                     const SearchSpace& space) {
  const auto ca = canonicalize(a, space);
  const auto cb = canonicalize(b, space);
  int d = ca.depth != cb.depth;
  for (int l = 0; l < space.max_depth(); ++l) {
    d += ca.heads[l] != cb.heads[l];
    d += ca.intermediates[l] != cb.intermediates[l];
  }
  return d;
}

namespace {

// Option index differing from `avoid`, uniform among the rest.
int other_option(std::size_t count, int avoid, Rng& rng) {
  if (count < 2) return avoid;
  auto pick = static_cast<int>(rng.below(count - 1));
  if (pick >= avoid) ++pick;
  return pick;
}

}  // namespace

TabularLandscape::TabularLandscape(SearchSpace space, LandscapeConfig config)
    : space_(space.full()), config_(std::move(config)) {
  if (config_.noise_sigma < 0.0) {
    fail(ErrorCode::kConfig, "landscape noise must be nonnegative");
  }
  if (config_.kind == LandscapeKind::kDeceptive &&
      (config_.basin_floor <= 0.0 || config_.basin_slope <= 0.0)) {
    fail(ErrorCode::kConfig, "deceptive basin floor and slope must be positive");
  }
  Rng rng(config_.seed);
  Rng target_rng = rng.split();
  Rng basin_rng = rng.split();
  if (config_.target) {
    validate(*config_.target, space_);
    target_ = canonicalize(*config_.target, space_);
  } else {
    std::vector<int> choices(space_.num_variables());
    for (std::size_t v = 0; v < choices.size(); ++v) {
      choices[v] = static_cast<int>(target_rng.below(space_.variable_option_count(v)));
    }
    target_ = from_choices(choices, space_);
  }
  basin_ = target_;
  if (config_.kind == LandscapeKind::kDeceptive) {
    // Differ from the target's canonical choices in every variable.
    const auto groups = encode(target_, space_);
    std::vector<int> choices(space_.num_variables());
    for (std::size_t v = 0; v < choices.size(); ++v) {
      const auto at = std::find(groups[v].begin(), groups[v].end(), 1) - groups[v].begin();
      choices[v] = other_option(space_.variable_option_count(v), static_cast<int>(at), basin_rng);
    }
    basin_ = from_choices(choices, space_);
  }
}

double TabularLandscape::loss(const ArchitectureSpec& arch) const {
  validate(arch, space_);
  const double to_target = hamming_distance(arch, target_, space_);
  if (config_.kind == LandscapeKind::kPlantedOptimum) return to_target;
  const double to_basin = hamming_distance(arch, basin_, space_);
  return std::min(to_target, config_.basin_floor + config_.basin_slope * to_basin);
}

double TabularLandscape::noisy_loss(const ArchitectureSpec& arch, Rng& rng) const {
  const double base = loss(arch);
  return config_.noise_sigma > 0.0 ? base + config_.noise_sigma * rng.normal() : base;
}

double TabularLandscape::max_loss() const {
  const auto n = static_cast<double>(space_.num_variables());
  if (config_.kind == LandscapeKind::kPlantedOptimum) return n;
  return std::min(n, config_.basin_floor + config_.basin_slope * n);
}

double TabularLandscape::accuracy(const ArchitectureSpec& arch) const {
  return std::clamp(1.0 - loss(arch) / max_loss(), 0.0, 1.0);
}

}  // namespace eesng
