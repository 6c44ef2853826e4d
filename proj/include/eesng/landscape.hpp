#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "eesng/arch_space.hpp"
#include "eesng/rng.hpp"

namespace eesng {

// Synthetic loss surfaces over a search space with known optima.
//  - planted_optimum: loss = Hamming distance between the canonical choice
//    vectors of the architecture and a target (0 at the target).
//  - deceptive: min(D_target, basin_floor + basin_slope * D_basin). The
//    basin sits at an architecture that differs from the target in every
//    variable; its shallow slope dominates the landscape, so greedy
//    per-variable descent from uniform is drawn to the basin while the
//    global optimum (loss 0) stays at the target.
enum class LandscapeKind { kPlantedOptimum, kDeceptive };

const char* landscape_name(LandscapeKind kind);
LandscapeKind parse_landscape(std::string_view name);

// Number of decision variables on which two architectures differ, after
// canonicalization.
int hamming_distance(const ArchitectureSpec& a, const ArchitectureSpec& b,
                     const SearchSpace& space);

struct LandscapeConfig {
  LandscapeKind kind = LandscapeKind::kPlantedOptimum;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  // Drawn from the seed when absent.
  std::optional<ArchitectureSpec> target;
  double basin_floor = 0.3;
  double basin_slope = 0.1;
};

class TabularLandscape {
 public:
  TabularLandscape(SearchSpace space, LandscapeConfig config);

  const SearchSpace& space() const { return space_; }
  const LandscapeConfig& config() const { return config_; }
  const ArchitectureSpec& target() const { return target_; }
  // The deceptive basin centre; equals the target for planted_optimum.
  const ArchitectureSpec& basin() const { return basin_; }

  // Noise-free value. Throws kInvalidArchitecture for archs outside the space.
  double loss(const ArchitectureSpec& arch) const;
  // loss + noise_sigma * N(0, 1) drawn from rng (no draw when sigma is 0).
  double noisy_loss(const ArchitectureSpec& arch, Rng& rng) const;
  // Upper bound on loss(): the variable count, or the basin ceiling.
  double max_loss() const;
  // 1 - loss / max_loss, noise-free.
  double accuracy(const ArchitectureSpec& arch) const;

 private:
  SearchSpace space_;
  LandscapeConfig config_;
  ArchitectureSpec target_;
  ArchitectureSpec basin_;
};

}  // namespace eesng
