#include "eesng/cost_model.hpp"

#include <json.hpp>
#include <numeric>

#include "eesng/error.hpp"

namespace eesng {

const char* metric_name(CostMetric metric) {
  return metric == CostMetric::kParams ? "params" : "flops";
}

CostMetric parse_metric(std::string_view name) {
  if (name == "params") return CostMetric::kParams;
  if (name == "flops") return CostMetric::kFlops;
  fail(ErrorCode::kConfig,
       "unknown cost metric '" + std::string(name) + "' (expected params|flops)");
}

CostBreakdown cost_breakdown(const ArchitectureSpec& arch,
                             const SupernetConfig& config, int seq_len) {
  validate(arch, config.space);
  if (seq_len < 1) fail(ErrorCode::kInvalidArgument, "seq_len must be positive");
  const std::int64_t E = config.embed_dim;
  const std::int64_t C = config.num_classes;
  const std::int64_t S = seq_len;
  const std::int64_t dh = config.head_dim();
  CostBreakdown out;
  out.seq_len = seq_len;
  out.embedding = static_cast<std::int64_t>(config.vocab_size) * E;
  out.classifier = E * C + C;
  std::int64_t layer_flops = 0;
  for (int l = 0; l < arch.depth; ++l) {
    const std::int64_t A = arch.heads[l] * dh;
    const std::int64_t k = arch.intermediates[l];
    out.attention.push_back(3 * (E * A + A) + (A * E + E));
    out.ffn.push_back(E * k + k + k * E + E);
    out.layer_norm.push_back(2 * 2 * E);
    layer_flops += 2 * S * E * 3 * A + 2 * S * S * A * 2 + 2 * S * A * E +
                   2 * S * E * k * 2;
  }
  const auto sum = [](const std::vector<std::int64_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::int64_t{0});
  };
  out.total_without_embedding =
      sum(out.attention) + sum(out.ffn) + sum(out.layer_norm) + out.classifier;
  out.total_with_embedding = out.total_without_embedding + out.embedding;
  out.flops = layer_flops + 2 * E * C;
  return out;
}

std::int64_t param_count(const ArchitectureSpec& arch,
                         const SupernetConfig& config, bool include_embedding) {
  const auto c = cost_breakdown(arch, config, 1);
  return include_embedding ? c.total_with_embedding : c.total_without_embedding;
}

std::int64_t flops(const ArchitectureSpec& arch, const SupernetConfig& config,
                   int seq_len) {
  return cost_breakdown(arch, config, seq_len).flops;
}

std::int64_t arch_cost(const ArchitectureSpec& arch,
                       const SupernetConfig& config, CostMetric metric) {
  return metric == CostMetric::kParams ? param_count(arch, config)
                                       : flops(arch, config, config.seq_len);
}

std::int64_t supernet_cost(const SupernetConfig& config, CostMetric metric) {
  return arch_cost(max_architecture(config.space), config, metric);
}

std::int64_t minimum_cost(const SupernetConfig& config, CostMetric metric) {
  return arch_cost(min_architecture(config.space.full()), config, metric);
}

std::string to_json(const CostBreakdown& cost, const ArchitectureSpec& arch) {
  nlohmann::ordered_json j;
  j["architecture"] = to_string(arch);
  j["embedding_params"] = cost.embedding;
  j["attention_params"] = cost.attention;
  j["ffn_params"] = cost.ffn;
  j["layer_norm_params"] = cost.layer_norm;
  j["classifier_params"] = cost.classifier;
  j["params_without_embedding"] = cost.total_without_embedding;
  j["params_with_embedding"] = cost.total_with_embedding;
  j["seq_len"] = cost.seq_len;
  j["flops"] = cost.flops;
  return j.dump(2);
}

}  // namespace eesng
