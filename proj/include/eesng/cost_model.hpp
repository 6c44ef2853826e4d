#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "eesng/arch_space.hpp"
#include "eesng/supernet.hpp"

namespace eesng {

enum class CostMetric { kParams, kFlops };

const char* metric_name(CostMetric metric);
CostMetric parse_metric(std::string_view name);

// Parameter counts per component for one architecture, plus FLOPs at the
// requested sequence length. Only layers below the depth appear.
//
// Per layer, with A = heads * head_dim:
//   attention  = 3 * (E*A + A) + (A*E + E)   Q, K, V with biases; output
//   ffn        = E*k + k + k*E + E
//   layer_norm = 2 * 2E
// Whole model: classifier E*C + C, embedding V*E (reported separately).
//
// FLOPs count 2 per multiply-accumulate. Per layer, S = seq_len:
//   2*S*E*3A        Q, K, V projections
//   2*S*S*A*2       scores and the weighted sum of values
//   2*S*A*E         output projection
//   2*S*E*k*2       the two FFN matrices
// The classifier runs once on the pooled vector: 2*E*C. Biases, softmax,
// GELU, layer norms, pooling and the embedding lookup are not counted.
struct CostBreakdown {
  std::int64_t embedding = 0;
  std::vector<std::int64_t> attention;
  std::vector<std::int64_t> ffn;
  std::vector<std::int64_t> layer_norm;
  std::int64_t classifier = 0;
  std::int64_t total_without_embedding = 0;
  std::int64_t total_with_embedding = 0;
  int seq_len = 0;
  std::int64_t flops = 0;
};

// Throws kInvalidArchitecture if arch is not in config.space.
CostBreakdown cost_breakdown(const ArchitectureSpec& arch,
                             const SupernetConfig& config, int seq_len);

std::int64_t param_count(const ArchitectureSpec& arch,
                         const SupernetConfig& config,
                         bool include_embedding = false);
std::int64_t flops(const ArchitectureSpec& arch, const SupernetConfig& config,
                   int seq_len);

// Params exclude the embedding; FLOPs use config.seq_len.
std::int64_t arch_cost(const ArchitectureSpec& arch,
                       const SupernetConfig& config, CostMetric metric);
// T(M): cost of the largest architecture over the full option lists.
std::int64_t supernet_cost(const SupernetConfig& config, CostMetric metric);
// Cost of the smallest architecture over the full option lists. Costs are
// monotone, so nothing in the space is cheaper.
std::int64_t minimum_cost(const SupernetConfig& config, CostMetric metric);

std::string to_json(const CostBreakdown& cost, const ArchitectureSpec& arch);

}  // namespace eesng
