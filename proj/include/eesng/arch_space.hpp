#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eesng {

enum class Dimension : int { kDepth = 0, kHeads = 1, kIntermediate = 2 };

inline constexpr std::size_t kNumDimensions = 3;

const char* dimension_name(Dimension dim);
Dimension parse_dimension(std::string_view name);

// One candidate sub-network. `heads` and `intermediates` always have
// max_depth entries; entries for layers >= depth are carried but inactive.
struct ArchitectureSpec {
  int depth = 0;
  std::vector<int> heads;
  std::vector<int> intermediates;

  bool operator==(const ArchitectureSpec&) const = default;
};

// Compact, stable text key such as "d2|h4,4,4,4|k64,64,64,64".
std::string to_string(const ArchitectureSpec& arch);
ArchitectureSpec parse_architecture(std::string_view text);

struct ArchitectureHash {
  std::size_t operator()(const ArchitectureSpec& arch) const;
};

// Option lists per decision dimension plus the progressive-expansion state.
//
// Expansion activates options from the largest value downwards, so the active
// subset of a dimension is always "the n largest options". For head and
// intermediate lists (stored largest first) that is a prefix of the list.
// Options may be listed in any order; one-hot groups follow list order.
//
// Decision variables are laid out as: depth, then (head, intermediate) for
// layer 0, 1, ..., max_depth - 1.
class SearchSpace {
 public:
  SearchSpace(int max_depth, std::vector<int> depth_options,
              std::vector<int> head_options,
              std::vector<int> intermediate_options);

  // Named built-ins: "desk" (depth {2,3,4}, heads {4,2,1}, intermediate
  // {64,32,16}) and "bert" (depth {6,8,10,12}, heads {12,8,4}, intermediate
  // {3072,1024,768,512}).
  static SearchSpace preset(std::string_view name);
  // `key = comma,separated,ints` lines; keys max_depth (optional), depth,
  // heads, intermediate.
  static SearchSpace parse(std::string_view text);
  static SearchSpace load(const std::string& path);

  int max_depth() const { return max_depth_; }
  const std::vector<int>& options(Dimension dim) const {
    return options_[static_cast<int>(dim)];
  }
  std::size_t active_count(Dimension dim) const {
    return active_[static_cast<int>(dim)];
  }
  // Rank by value, 0 = largest option.
  std::size_t rank(Dimension dim, std::size_t option_index) const {
    return rank_[static_cast<int>(dim)][option_index];
  }
  bool is_active(Dimension dim, std::size_t option_index) const {
    return rank(dim, option_index) < active_count(dim);
  }
  std::vector<std::size_t> active_indices(Dimension dim) const;
  std::size_t largest_index(Dimension dim) const;
  int largest(Dimension dim) const;
  int smallest_active(Dimension dim) const;
  std::optional<std::size_t> index_of(Dimension dim, int value) const;

  std::array<std::size_t, kNumDimensions> active_counts() const {
    return active_;
  }
  SearchSpace with_active_counts(
      const std::array<std::size_t, kNumDimensions>& counts) const;
  // Only the largest option of each dimension active.
  SearchSpace initial() const;
  SearchSpace full() const;
  bool fully_active() const;

  std::size_t num_variables() const {
    return 1 + 2 * static_cast<std::size_t>(max_depth_);
  }
  Dimension variable_dimension(std::size_t var) const;
  // Layer a per-layer variable belongs to; -1 for the depth variable.
  int variable_layer(std::size_t var) const;
  std::size_t variable_option_count(std::size_t var) const {
    return options(variable_dimension(var)).size();
  }

  // Same option lists (active state ignored).
  bool same_options(const SearchSpace& other) const;
  bool operator==(const SearchSpace&) const = default;

 private:
  int max_depth_;
  std::array<std::vector<int>, kNumDimensions> options_;
  std::array<std::vector<std::size_t>, kNumDimensions> rank_;
  std::array<std::size_t, kNumDimensions> active_{};
};

// Membership check; throws kInvalidArchitecture. With active_only, every
// entry that matters (depth and layers < depth) must be an active option.
void validate(const ArchitectureSpec& arch, const SearchSpace& space,
              bool active_only = false);

// Inactive-layer entries set to the largest option of their dimension.
ArchitectureSpec canonicalize(const ArchitectureSpec& arch,
                              const SearchSpace& space);

// Largest architecture of the space (full option lists).
ArchitectureSpec max_architecture(const SearchSpace& space);
// Smallest architecture among the active options (canonical fill).
ArchitectureSpec min_architecture(const SearchSpace& space);

// Option index per decision variable; -1 marks per-layer variables of layers
// >= depth, which do not affect the architecture.
std::vector<int> choice_indices(const ArchitectureSpec& arch,
                                const SearchSpace& space);
// Builds an architecture from one option index per variable (all entries
// must be >= 0); the result is canonicalized.
ArchitectureSpec from_choices(std::span<const int> choices,
                              const SearchSpace& space);

using OneHotGroups = std::vector<std::vector<int>>;

// One one-hot group per decision variable over the full option list, in the
// variable order documented on SearchSpace. The canonical form is encoded.
OneHotGroups encode(const ArchitectureSpec& arch, const SearchSpace& space);
// Inverse of encode. Rejects malformed groups, inactive options and
// non-canonical inactive-layer entries.
ArchitectureSpec decode(const OneHotGroups& groups, const SearchSpace& space);

// Number of distinct architectures: sum over depth options d of
// (|heads| * |intermediate|)^d. Throws kSpaceTooLarge on uint64 overflow.
std::uint64_t cardinality(const SearchSpace& space, bool active_only = false);

// Visits every distinct (canonical) architecture once: depth options in list
// order, then layer choices in mixed-radix order with layer 0 slowest.
// Throws kSpaceTooLarge when the cardinality exceeds `limit`.
void for_each_architecture(
    const SearchSpace& space, std::uint64_t limit,
    const std::function<void(const ArchitectureSpec&)>& visit,
    bool active_only = false);
std::vector<ArchitectureSpec> enumerate(const SearchSpace& space,
                                        std::uint64_t limit,
                                        bool active_only = false);

struct ExpansionEvent {
  int epoch = 0;
  Dimension dimension = Dimension::kHeads;
  int option = 0;

  bool operator==(const ExpansionEvent&) const = default;
};

using ExpansionSchedule = std::vector<ExpansionEvent>;

// Heads first, then intermediate sizes, then depth; one option per event,
// each event the next-largest inactive option. Event i (0-based) fires at
// epoch floor((i + 1) * spacing), capped at total_epochs - 1. The default
// spacing is total_epochs / (number_of_events + 1), giving every stage from
// "largest only" to "fully expanded" the same number of epochs.
ExpansionSchedule default_schedule(const SearchSpace& full_space,
                                   int total_epochs,
                                   std::optional<double> spacing = {});

// Applies every event with epoch <= `epoch`. Idempotent and monotone: the
// active set never shrinks.
SearchSpace expand(const SearchSpace& space, const ExpansionSchedule& schedule,
                   int epoch);

}  // namespace eesng
