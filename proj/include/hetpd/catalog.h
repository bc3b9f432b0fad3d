/* Copyright 2026 The hetpd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetpd {

// Axes of a KV-cache tensor. Canonical (wire) order is the declaration order.
enum class KvAxis : std::uint8_t { kLayer = 0, kKvHead = 1, kToken = 2, kHeadDim = 3 };

using AxisOrder = std::array<KvAxis, 4>;

inline constexpr AxisOrder kCanonicalAxisOrder = {KvAxis::kLayer, KvAxis::kKvHead,
                                                   KvAxis::kToken, KvAxis::kHeadDim};

std::string_view to_string(KvAxis axis);
std::optional<KvAxis> parse_axis(std::string_view name);
bool is_permutation(const AxisOrder& order);

// Capability envelope of one GPU SKU. Rates are peak values; the three
// discounts scale them to what a serving engine actually sustains.
struct GpuSpec {
  std::string name;
  std::string vendor;
  double compute_rate = 0;            // FLOP/s
  double vram_capacity = 0;           // bytes
  double vram_bandwidth = 0;          // bytes/s
  double interconnect_bandwidth = 0;  // bytes/s, intra-instance collectives
  double compute_discount = 1;        // lambda
  double vram_bw_discount = 1;        // alpha
  double comm_discount = 1;           // beta
  std::int64_t kv_block_size = 1;     // tokens per paged-attention block
  AxisOrder layout_order = kCanonicalAxisOrder;

  bool operator==(const GpuSpec&) const = default;
};

struct ModelSpec {
  std::string name;
  std::int64_t num_layers = 0;
  std::int64_t hidden_dim = 0;
  std::int64_t num_attention_heads = 0;
  std::int64_t num_kv_heads = 0;
  std::int64_t head_dim = 0;
  std::int64_t ffn_dim = 0;
  std::int64_t vocab_size = 0;
  std::int64_t num_experts = 1;  // 1 = dense
  std::int64_t experts_per_token = 1;
  std::int64_t dtype_bytes = 2;

  bool operator==(const ModelSpec&) const = default;
};

enum class ArrivalProcess { kDeterministic, kPoisson };

std::string_view to_string(ArrivalProcess process);

struct WorkloadSpec {
  std::string name;
  std::int64_t input_len = 0;
  std::int64_t output_len = 1;
  double qps = 0;
  double ttft_slo = 0;  // seconds; 0 is accepted and makes every plan infeasible
  double tpot_slo = 0;  // seconds
  ArrivalProcess arrival_process = ArrivalProcess::kDeterministic;

  bool operator==(const WorkloadSpec&) const = default;
};

// Quantities derived from a ModelSpec.
//
// Parameter counting convention (gated FFN, untied output head):
//   embedding        vocab * hidden
//   per layer        q + o projections      2 * hidden * (heads * head_dim)
//                    k + v projections      2 * hidden * (kv_heads * head_dim)
//                    FFN (gate, up, down)   experts * 3 * hidden * ffn
//                    router (MoE only)      hidden * experts
//                    two RMSNorm weights    2 * hidden
//   final norm       hidden
//   output head      vocab * hidden
struct ModelStats {
  std::int64_t param_count = 0;
  std::int64_t active_param_count = 0;  // params touched per token (MoE top-k)
  std::int64_t expert_param_count = 0;  // FFN weights owned by experts (0 when dense)
  std::int64_t weight_bytes_total = 0;
  std::int64_t kv_bytes_per_token = 0;

  bool operator==(const ModelStats&) const = default;
};

struct Catalog {
  std::vector<GpuSpec> gpus;
  std::vector<ModelSpec> models;
  std::vector<WorkloadSpec> workloads;

  const GpuSpec& gpu(std::string_view name) const;
  const ModelSpec& model(std::string_view name) const;
  const WorkloadSpec& workload(std::string_view name) const;

  bool operator==(const Catalog&) const = default;
};

// Each throws Error(kInvariant) naming the spec and the broken invariant.
void validate(const GpuSpec& gpu);
void validate(const ModelSpec& model);
void validate(const WorkloadSpec& workload);

ModelStats derive_stats(const ModelSpec& model);

// Parses a catalog document. Schema problems raise Error(kSchema) with the
// offending field path (e.g. "gpus[1].compute_rate"); invariant problems
// raise Error(kInvariant).
Catalog parse_catalog(std::string_view document);
Catalog load_catalog(const nlohmann::json& document);
Catalog load_catalog_file(const std::filesystem::path& path);

nlohmann::json to_json(const GpuSpec& gpu);
nlohmann::json to_json(const ModelSpec& model);
nlohmann::json to_json(const WorkloadSpec& workload);
nlohmann::json to_json(const Catalog& catalog);

GpuSpec gpu_from_json(const nlohmann::json& node, const std::string& path);
ModelSpec model_from_json(const nlohmann::json& node, const std::string& path);
WorkloadSpec workload_from_json(const nlohmann::json& node, const std::string& path);

namespace json_field {

// Typed accessors used by every document reader in the project; all of them
// report failures as Error(kSchema) carrying "path.key".
const nlohmann::json& require(const nlohmann::json& node, const std::string& path,
                              const char* key);
double number(const nlohmann::json& node, const std::string& path, const char* key);
double number_or(const nlohmann::json& node, const std::string& path, const char* key,
                 double fallback);
std::int64_t integer(const nlohmann::json& node, const std::string& path, const char* key);
std::int64_t integer_or(const nlohmann::json& node, const std::string& path,
                        const char* key, std::int64_t fallback);
std::string string(const nlohmann::json& node, const std::string& path, const char* key);
std::string string_or(const nlohmann::json& node, const std::string& path, const char* key,
                      std::string fallback);
std::vector<std::int64_t> integer_list(const nlohmann::json& node, const std::string& path,
                                       const char* key);

}  // namespace json_field

}  // namespace hetpd
