#include "eesng/arch_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "eesng/config.hpp"
#include "eesng/error.hpp"

namespace eesng {
namespace {

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void check_options(const std::vector<int>& opts, const char* what) {
  if (opts.empty()) {
    fail(ErrorCode::kConfig, std::string(what) + " options must be non-empty");
  }
  std::set<int> seen;
  for (int v : opts) {
    if (v <= 0) {
      fail(ErrorCode::kConfig,
           std::string(what) + " options must be positive integers");
    }
    if (!seen.insert(v).second) {
      fail(ErrorCode::kConfig, std::string(what) + " option " +
                                   std::to_string(v) + " listed twice");
    }
  }
}

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  return !__builtin_mul_overflow(a, b, &out);
}

}  // namespace

const char* dimension_name(Dimension dim) {
  switch (dim) {
    case Dimension::kDepth:
      return "depth";
    case Dimension::kHeads:
      return "heads";
    case Dimension::kIntermediate:
      return "intermediate";
  }
  return "?";
}

Dimension parse_dimension(std::string_view name) {
  if (name == "depth") return Dimension::kDepth;
  if (name == "heads") return Dimension::kHeads;
  if (name == "intermediate") return Dimension::kIntermediate;
  fail(ErrorCode::kConfig, "unknown dimension '" + std::string(name) + "'");
}

std::string to_string(const ArchitectureSpec& arch) {
  return "d" + std::to_string(arch.depth) + "|h" + join(arch.heads) + "|k" +
         join(arch.intermediates);
}

ArchitectureSpec parse_architecture(std::string_view text) {
  ArchitectureSpec arch;
  const auto bar1 = text.find('|');
  const auto bar2 =
      bar1 == std::string_view::npos ? bar1 : text.find('|', bar1 + 1);
  if (bar2 == std::string_view::npos || text.size() < 2 || text[0] != 'd' ||
      text[bar1 + 1] != 'h' || text[bar2 + 1] != 'k') {
    fail(ErrorCode::kInvalidArchitecture,
         "malformed architecture '" + std::string(text) + "'");
  }
  try {
    const auto depth = parse_int_list(text.substr(1, bar1 - 1));
    if (depth.size() != 1) throw Error(ErrorCode::kConfig, "depth");
    arch.depth = depth[0];
    arch.heads = parse_int_list(text.substr(bar1 + 2, bar2 - bar1 - 2));
    arch.intermediates = parse_int_list(text.substr(bar2 + 2));
  } catch (const Error&) {
    fail(ErrorCode::kInvalidArchitecture,
         "malformed architecture '" + std::string(text) + "'");
  }
  return arch;
}

std::size_t ArchitectureHash::operator()(const ArchitectureSpec& arch) const {
  std::size_t h = std::hash<int>{}(arch.depth);
  auto mix = [&h](int v) {
    h ^= std::hash<int>{}(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  for (int v : arch.heads) mix(v);
  for (int v : arch.intermediates) mix(v);
  return h;
}

SearchSpace::SearchSpace(int max_depth, std::vector<int> depth_options,
                         std::vector<int> head_options,
                         std::vector<int> intermediate_options)
    : max_depth_(max_depth),
      options_{std::move(depth_options), std::move(head_options),
               std::move(intermediate_options)} {
  check_options(options_[0], "depth");
  check_options(options_[1], "head");
  check_options(options_[2], "intermediate");
  const int deepest = *std::max_element(options_[0].begin(), options_[0].end());
  if (max_depth_ <= 0 || deepest != max_depth_) {
    fail(ErrorCode::kConfig, "max_depth must equal the largest depth option (" +
                                 std::to_string(deepest) + ")");
  }
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    const auto& opts = options_[d];
    std::vector<std::size_t> order(opts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return opts[a] > opts[b]; });
    rank_[d].assign(opts.size(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) rank_[d][order[r]] = r;
    active_[d] = opts.size();
  }
}

SearchSpace SearchSpace::preset(std::string_view name) {
  if (name == "desk") return SearchSpace(4, {2, 3, 4}, {4, 2, 1}, {64, 32, 16});
  if (name == "bert") {
    return SearchSpace(12, {6, 8, 10, 12}, {12, 8, 4}, {3072, 1024, 768, 512});
  }
  fail(ErrorCode::kConfig, "unknown space preset '" + std::string(name) + "'");
}

SearchSpace SearchSpace::parse(std::string_view text) {
  const auto cfg = KeyValueConfig::parse(text, "<space>");
  cfg.require_known("", {"max_depth", "depth", "heads", "intermediate"});
  auto depth = cfg.get_int_list("", "depth");
  const int deepest = *std::max_element(depth.begin(), depth.end());
  const int max_depth = static_cast<int>(cfg.get_int("", "max_depth", deepest));
  return SearchSpace(max_depth, std::move(depth),
                     cfg.get_int_list("", "heads"),
                     cfg.get_int_list("", "intermediate"));
}

SearchSpace SearchSpace::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kConfig, "cannot open space file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<std::size_t> SearchSpace::active_indices(Dimension dim) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < options(dim).size(); ++i) {
    if (is_active(dim, i)) out.push_back(i);
  }
  return out;
}

std::size_t SearchSpace::largest_index(Dimension dim) const {
  const auto& r = rank_[static_cast<int>(dim)];
  return static_cast<std::size_t>(std::find(r.begin(), r.end(), 0) -
                                  r.begin());
}

int SearchSpace::largest(Dimension dim) const {
  return options(dim)[largest_index(dim)];
}

int SearchSpace::smallest_active(Dimension dim) const {
  int best = largest(dim);
  for (auto i : active_indices(dim)) best = std::min(best, options(dim)[i]);
  return best;
}

std::optional<std::size_t> SearchSpace::index_of(Dimension dim,
                                                 int value) const {
  const auto& opts = options(dim);
  const auto it = std::find(opts.begin(), opts.end(), value);
  if (it == opts.end()) return std::nullopt;
  return static_cast<std::size_t>(it - opts.begin());
}

SearchSpace SearchSpace::with_active_counts(
    const std::array<std::size_t, kNumDimensions>& counts) const {
  SearchSpace out = *this;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    if (counts[d] == 0 || counts[d] > options_[d].size()) {
      fail(ErrorCode::kInvalidArgument,
           std::string("active count out of range for ") +
               dimension_name(static_cast<Dimension>(d)));
    }
    out.active_[d] = counts[d];
  }
  return out;
}

SearchSpace SearchSpace::initial() const {
  return with_active_counts({1, 1, 1});
}

SearchSpace SearchSpace::full() const {
  return with_active_counts(
      {options_[0].size(), options_[1].size(), options_[2].size()});
}

bool SearchSpace::fully_active() const {
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    if (active_[d] != options_[d].size()) return false;
  }
  return true;
}

Dimension SearchSpace::variable_dimension(std::size_t var) const {
  if (var == 0) return Dimension::kDepth;
  return (var - 1) % 2 == 0 ? Dimension::kHeads : Dimension::kIntermediate;
}

int SearchSpace::variable_layer(std::size_t var) const {
  return var == 0 ? -1 : static_cast<int>((var - 1) / 2);
}

bool SearchSpace::same_options(const SearchSpace& other) const {
  return max_depth_ == other.max_depth_ && options_ == other.options_;
}

void validate(const ArchitectureSpec& arch, const SearchSpace& space,
              bool active_only) {
  const auto bad = [&](const std::string& why) {
    fail(ErrorCode::kInvalidArchitecture,
         "invalid architecture " + to_string(arch) + ": " + why);
  };
  const auto n = static_cast<std::size_t>(space.max_depth());
  if (arch.heads.size() != n || arch.intermediates.size() != n) {
    bad("expected " + std::to_string(n) + " per-layer entries");
  }
  const auto check = [&](Dimension dim, int value, bool matters) {
    const auto idx = space.index_of(dim, value);
    if (!idx) {
      bad(std::string(dimension_name(dim)) + " value " + std::to_string(value) +
          " is not an option");
    }
    if (active_only && matters && !space.is_active(dim, *idx)) {
      bad(std::string(dimension_name(dim)) + " value " + std::to_string(value) +
          " is not active");
    }
  };
  check(Dimension::kDepth, arch.depth, true);
  for (std::size_t l = 0; l < n; ++l) {
    const bool matters = static_cast<int>(l) < arch.depth;
    check(Dimension::kHeads, arch.heads[l], matters);
    check(Dimension::kIntermediate, arch.intermediates[l], matters);
  }
}

ArchitectureSpec canonicalize(const ArchitectureSpec& arch,
                              const SearchSpace& space) {
  ArchitectureSpec out = arch;
  for (std::size_t l = static_cast<std::size_t>(std::max(arch.depth, 0));
       l < out.heads.size(); ++l) {
    out.heads[l] = space.largest(Dimension::kHeads);
  }
  for (std::size_t l = static_cast<std::size_t>(std::max(arch.depth, 0));
       l < out.intermediates.size(); ++l) {
    out.intermediates[l] = space.largest(Dimension::kIntermediate);
  }
  return out;
}

ArchitectureSpec max_architecture(const SearchSpace& space) {
  const auto n = static_cast<std::size_t>(space.max_depth());
  return ArchitectureSpec{space.max_depth(),
                          std::vector<int>(n, space.largest(Dimension::kHeads)),
                          std::vector<int>(
                              n, space.largest(Dimension::kIntermediate))};
}

ArchitectureSpec min_architecture(const SearchSpace& space) {
  ArchitectureSpec arch = max_architecture(space);
  arch.depth = space.smallest_active(Dimension::kDepth);
  for (int l = 0; l < arch.depth; ++l) {
    arch.heads[l] = space.smallest_active(Dimension::kHeads);
    arch.intermediates[l] = space.smallest_active(Dimension::kIntermediate);
  }
  return arch;
}

std::vector<int> choice_indices(const ArchitectureSpec& arch,
                                const SearchSpace& space) {
  validate(arch, space);
  std::vector<int> out(space.num_variables(), -1);
  out[0] = static_cast<int>(*space.index_of(Dimension::kDepth, arch.depth));
  for (int l = 0; l < arch.depth; ++l) {
    out[1 + 2 * l] =
        static_cast<int>(*space.index_of(Dimension::kHeads, arch.heads[l]));
    out[2 + 2 * l] = static_cast<int>(
        *space.index_of(Dimension::kIntermediate, arch.intermediates[l]));
  }
  return out;
}

ArchitectureSpec from_choices(std::span<const int> choices,
                              const SearchSpace& space) {
  if (choices.size() != space.num_variables()) {
    fail(ErrorCode::kInvalidArchitecture, "wrong number of choices");
  }
  const auto pick = [&](std::size_t var) {
    const auto dim = space.variable_dimension(var);
    const int c = choices[var];
    if (c < 0 || static_cast<std::size_t>(c) >= space.options(dim).size()) {
      fail(ErrorCode::kInvalidArchitecture, "choice index out of range");
    }
    return space.options(dim)[static_cast<std::size_t>(c)];
  };
  ArchitectureSpec arch;
  arch.depth = pick(0);
  const auto n = static_cast<std::size_t>(space.max_depth());
  arch.heads.resize(n);
  arch.intermediates.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    arch.heads[l] = pick(1 + 2 * l);
    arch.intermediates[l] = pick(2 + 2 * l);
  }
  return canonicalize(arch, space);
}

OneHotGroups encode(const ArchitectureSpec& arch, const SearchSpace& space) {
  validate(arch, space);
  const ArchitectureSpec canon = canonicalize(arch, space);
  OneHotGroups groups;
  groups.reserve(space.num_variables());
  const auto one_hot = [&](Dimension dim, int value) {
    std::vector<int> g(space.options(dim).size(), 0);
    g[*space.index_of(dim, value)] = 1;
    groups.push_back(std::move(g));
  };
  one_hot(Dimension::kDepth, canon.depth);
  for (std::size_t l = 0; l < canon.heads.size(); ++l) {
    one_hot(Dimension::kHeads, canon.heads[l]);
    one_hot(Dimension::kIntermediate, canon.intermediates[l]);
  }
  return groups;
}

ArchitectureSpec decode(const OneHotGroups& groups, const SearchSpace& space) {
  if (groups.size() != space.num_variables()) {
    fail(ErrorCode::kInvalidArchitecture,
         "expected " + std::to_string(space.num_variables()) +
             " one-hot groups, got " + std::to_string(groups.size()));
  }
  std::vector<int> choices(groups.size());
  for (std::size_t var = 0; var < groups.size(); ++var) {
    const auto dim = space.variable_dimension(var);
    const auto& g = groups[var];
    if (g.size() != space.options(dim).size()) {
      fail(ErrorCode::kInvalidArchitecture,
           "group " + std::to_string(var) + " has the wrong width");
    }
    int hot = -1;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == 1 && hot < 0) {
        hot = static_cast<int>(i);
      } else if (g[i] != 0) {
        fail(ErrorCode::kInvalidArchitecture,
             "group " + std::to_string(var) + " is not one-hot");
      }
    }
    if (hot < 0) {
      fail(ErrorCode::kInvalidArchitecture,
           "group " + std::to_string(var) + " is not one-hot");
    }
    choices[var] = hot;
  }
  const ArchitectureSpec arch = from_choices(choices, space);
  // from_choices canonicalized; a differing raw group was non-canonical.
  for (std::size_t var = 1; var < groups.size(); ++var) {
    if (space.variable_layer(var) < arch.depth) continue;
    const auto dim = space.variable_dimension(var);
    if (static_cast<std::size_t>(choices[var]) != space.largest_index(dim)) {
      fail(ErrorCode::kInvalidArchitecture,
           "inactive layer group " + std::to_string(var) +
               " is not in canonical form");
    }
  }
  validate(arch, space, /*active_only=*/true);
  return arch;
}

std::uint64_t cardinality(const SearchSpace& space, bool active_only) {
  const auto count = [&](Dimension dim) -> std::uint64_t {
    return active_only ? space.active_count(dim) : space.options(dim).size();
  };
  const std::uint64_t per_layer =
      count(Dimension::kHeads) * count(Dimension::kIntermediate);
  std::uint64_t total = 0;
  const auto& depths = space.options(Dimension::kDepth);
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (active_only && !space.is_active(Dimension::kDepth, i)) continue;
    std::uint64_t term = 1;
    for (int l = 0; l < depths[i]; ++l) {
      if (!checked_mul(term, per_layer, term)) {
        fail(ErrorCode::kSpaceTooLarge, "cardinality exceeds 2^64");
      }
    }
    if (__builtin_add_overflow(total, term, &total)) {
      fail(ErrorCode::kSpaceTooLarge, "cardinality exceeds 2^64");
    }
  }
  return total;
}

void for_each_architecture(
    const SearchSpace& space, std::uint64_t limit,
    const std::function<void(const ArchitectureSpec&)>& visit,
    bool active_only) {
  const std::uint64_t total = cardinality(space, active_only);
  if (total > limit) {
    fail(ErrorCode::kSpaceTooLarge,
         "space has " + std::to_string(total) +
             " architectures, above the enumeration limit " +
             std::to_string(limit));
  }
  const auto pool = [&](Dimension dim) {
    std::vector<int> out;
    for (std::size_t i = 0; i < space.options(dim).size(); ++i) {
      if (!active_only || space.is_active(dim, i)) {
        out.push_back(space.options(dim)[i]);
      }
    }
    return out;
  };
  const auto heads = pool(Dimension::kHeads);
  const auto inters = pool(Dimension::kIntermediate);
  const std::size_t radix = heads.size() * inters.size();
  ArchitectureSpec arch = max_architecture(space);
  const auto& depths = space.options(Dimension::kDepth);
  for (std::size_t di = 0; di < depths.size(); ++di) {
    if (active_only && !space.is_active(Dimension::kDepth, di)) continue;
    const int depth = depths[di];
    arch = max_architecture(space);
    arch.depth = depth;
    std::vector<std::size_t> digits(static_cast<std::size_t>(depth), 0);
    while (true) {
      for (int l = 0; l < depth; ++l) {
        arch.heads[l] = heads[digits[l] / inters.size()];
        arch.intermediates[l] = inters[digits[l] % inters.size()];
      }
      visit(arch);
      int pos = depth - 1;
      while (pos >= 0 && ++digits[pos] == radix) {
        digits[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }
}

std::vector<ArchitectureSpec> enumerate(const SearchSpace& space,
                                        std::uint64_t limit, bool active_only) {
  std::vector<ArchitectureSpec> out;
  for_each_architecture(
      space, limit, [&](const ArchitectureSpec& a) { out.push_back(a); },
      active_only);
  return out;
}

ExpansionSchedule default_schedule(const SearchSpace& full_space,
                                   int total_epochs,
                                   std::optional<double> spacing) {
  if (total_epochs < 1) {
    fail(ErrorCode::kInvalidArgument, "total_epochs must be positive");
  }
  // Options by descending value, skipping the largest (always active).
  std::vector<std::pair<Dimension, int>> pending;
  for (Dimension dim :
       {Dimension::kHeads, Dimension::kIntermediate, Dimension::kDepth}) {
    std::vector<int> sorted = full_space.options(dim);
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      pending.emplace_back(dim, sorted[i]);
    }
  }
  const double step =
      spacing.value_or(static_cast<double>(total_epochs) /
                       static_cast<double>(pending.size() + 1));
  ExpansionSchedule schedule;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const int epoch = std::min(
        total_epochs - 1,
        static_cast<int>(std::floor(static_cast<double>(i + 1) * step)));
    schedule.push_back({epoch, pending[i].first, pending[i].second});
  }
  return schedule;
}

SearchSpace expand(const SearchSpace& space, const ExpansionSchedule& schedule,
                   int epoch) {
  auto counts = space.active_counts();
  for (const auto& ev : schedule) {
    if (ev.epoch > epoch) continue;
    const auto idx = space.index_of(ev.dimension, ev.option);
    if (!idx) {
      fail(ErrorCode::kConfig, std::string("expansion event names unknown ") +
                                   dimension_name(ev.dimension) + " option " +
                                   std::to_string(ev.option));
    }
    auto& c = counts[static_cast<int>(ev.dimension)];
    c = std::max(c, space.rank(ev.dimension, *idx) + 1);
  }
  return space.with_active_counts(counts);
}

}  // namespace eesng
