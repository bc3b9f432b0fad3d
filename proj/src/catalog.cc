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

#include "hetpd/catalog.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hetpd/error.h"

namespace hetpd {

using nlohmann::json;

std::string_view to_string(KvAxis axis) {
  switch (axis) {
    case KvAxis::kLayer: return "layer";
    case KvAxis::kKvHead: return "kv_head";
    case KvAxis::kToken: return "token";
    case KvAxis::kHeadDim: return "head_dim";
  }
  return "?";
}

std::optional<KvAxis> parse_axis(std::string_view name) {
  for (KvAxis axis : kCanonicalAxisOrder) {
    if (to_string(axis) == name) return axis;
  }
  return std::nullopt;
}

bool is_permutation(const AxisOrder& order) {
  std::array<bool, 4> seen{};
  for (KvAxis axis : order) {
    auto index = static_cast<std::size_t>(axis);
    if (index >= seen.size() || seen[index]) return false;
    seen[index] = true;
  }
  return true;
}

std::string_view to_string(ArrivalProcess process) {
  return process == ArrivalProcess::kPoisson ? "poisson" : "deterministic";
}

namespace {

template <typename T>
const T& find_named(const std::vector<T>& items, std::string_view name, const char* kind) {
  auto it = std::find_if(items.begin(), items.end(),
                         [&](const T& item) { return item.name == name; });
  if (it == items.end()) {
    throw Error(ErrorCode::kSchema,
                std::string("unknown ") + kind + " '" + std::string(name) + "'");
  }
  return *it;
}

[[noreturn]] void invariant_failure(const std::string& spec, const std::string& what) {
  throw Error(ErrorCode::kInvariant, spec + ": " + what);
}

bool positive(double value) { return std::isfinite(value) && value > 0; }

bool valid_discount(double value) { return std::isfinite(value) && value > 0 && value <= 1; }

}  // namespace

const GpuSpec& Catalog::gpu(std::string_view name) const {
  return find_named(gpus, name, "gpu");
}
const ModelSpec& Catalog::model(std::string_view name) const {
  return find_named(models, name, "model");
}
const WorkloadSpec& Catalog::workload(std::string_view name) const {
  return find_named(workloads, name, "workload");
}

void validate(const GpuSpec& gpu) {
  const std::string spec = "gpu '" + gpu.name + "'";
  if (gpu.name.empty()) invariant_failure(spec, "name must not be empty");
  if (!positive(gpu.compute_rate)) invariant_failure(spec, "compute_rate must be > 0");
  if (!positive(gpu.vram_capacity)) invariant_failure(spec, "vram_capacity must be > 0");
  if (!positive(gpu.vram_bandwidth)) invariant_failure(spec, "vram_bandwidth must be > 0");
  if (!positive(gpu.interconnect_bandwidth)) {
    invariant_failure(spec, "interconnect_bandwidth must be > 0");
  }
  if (!valid_discount(gpu.compute_discount)) {
    invariant_failure(spec, "compute_discount out of range (0, 1]");
  }
  if (!valid_discount(gpu.vram_bw_discount)) {
    invariant_failure(spec, "vram_bw_discount out of range (0, 1]");
  }
  if (!valid_discount(gpu.comm_discount)) {
    invariant_failure(spec, "comm_discount out of range (0, 1]");
  }
  if (gpu.kv_block_size < 1) invariant_failure(spec, "kv_block_size must be >= 1");
  if (!is_permutation(gpu.layout_order)) {
    invariant_failure(spec, "layout_order must be a permutation of {layer, kv_head, token, head_dim}");
  }
}

void validate(const ModelSpec& model) {
  const std::string spec = "model '" + model.name + "'";
  if (model.name.empty()) invariant_failure(spec, "name must not be empty");
  const std::pair<const char*, std::int64_t> counts[] = {
      {"num_layers", model.num_layers},
      {"hidden_dim", model.hidden_dim},
      {"num_attention_heads", model.num_attention_heads},
      {"num_kv_heads", model.num_kv_heads},
      {"head_dim", model.head_dim},
      {"ffn_dim", model.ffn_dim},
      {"vocab_size", model.vocab_size},
      {"num_experts", model.num_experts},
      {"experts_per_token", model.experts_per_token},
      {"dtype_bytes", model.dtype_bytes},
  };
  for (const auto& [field, value] : counts) {
    if (value < 1) invariant_failure(spec, std::string(field) + " must be >= 1");
  }
  if (model.num_attention_heads % model.num_kv_heads != 0) {
    invariant_failure(spec, "num_attention_heads must be divisible by num_kv_heads");
  }
  if (model.hidden_dim != model.num_attention_heads * model.head_dim) {
    invariant_failure(spec, "hidden_dim must equal num_attention_heads * head_dim");
  }
  if (model.experts_per_token > model.num_experts) {
    invariant_failure(spec, "experts_per_token must not exceed num_experts");
  }
}

void validate(const WorkloadSpec& workload) {
  const std::string spec = "workload '" + workload.name + "'";
  if (workload.name.empty()) invariant_failure(spec, "name must not be empty");
  if (workload.input_len < 1) invariant_failure(spec, "input_len must be >= 1");
  if (workload.output_len < 1) invariant_failure(spec, "output_len must be >= 1");
  if (!positive(workload.qps)) invariant_failure(spec, "qps must be > 0");
  if (!std::isfinite(workload.ttft_slo) || workload.ttft_slo < 0) {
    invariant_failure(spec, "ttft_slo must be >= 0");
  }
  if (!std::isfinite(workload.tpot_slo) || workload.tpot_slo < 0) {
    invariant_failure(spec, "tpot_slo must be >= 0");
  }
}

ModelStats derive_stats(const ModelSpec& model) {
  const std::int64_t h = model.hidden_dim;
  const std::int64_t q_width = model.num_attention_heads * model.head_dim;
  const std::int64_t kv_width = model.num_kv_heads * model.head_dim;

  const std::int64_t attention = 2 * h * q_width + 2 * h * kv_width;
  const std::int64_t one_expert = 3 * h * model.ffn_dim;
  const std::int64_t router = model.num_experts > 1 ? h * model.num_experts : 0;
  const std::int64_t norms = 2 * h;
  const std::int64_t embedding = model.vocab_size * h;
  const std::int64_t head = model.vocab_size * h;

  const std::int64_t per_layer_shared = attention + router + norms;
  const std::int64_t experts = model.num_experts * one_expert;
  const std::int64_t active_experts = model.experts_per_token * one_expert;

  ModelStats stats;
  stats.param_count =
      embedding + model.num_layers * (per_layer_shared + experts) + h + head;
  stats.active_param_count =
      embedding + model.num_layers * (per_layer_shared + active_experts) + h + head;
  stats.expert_param_count = model.num_experts > 1 ? model.num_layers * experts : 0;
  stats.weight_bytes_total = stats.param_count * model.dtype_bytes;
  stats.kv_bytes_per_token =
      2 * model.num_layers * model.num_kv_heads * model.head_dim * model.dtype_bytes;
  return stats;
}

// ---------------------------------------------------------------------------
// JSON reading

namespace json_field {

namespace {

std::string join(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

[[noreturn]] void schema_failure(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kSchema, where + ": " + what);
}

}  // namespace

const json& require(const json& node, const std::string& path, const char* key) {
  if (!node.is_object()) schema_failure(path.empty() ? "<root>" : path, "expected an object");
  auto it = node.find(key);
  if (it == node.end()) schema_failure(join(path, key), "missing required field");
  return *it;
}

double number(const json& node, const std::string& path, const char* key) {
  const json& value = require(node, path, key);
  if (!value.is_number()) schema_failure(join(path, key), "expected a number");
  return value.get<double>();
}

double number_or(const json& node, const std::string& path, const char* key,
                 double fallback) {
  if (!node.is_object() || !node.contains(key)) return fallback;
  return number(node, path, key);
}

std::int64_t integer(const json& node, const std::string& path, const char* key) {
  const json& value = require(node, path, key);
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_number_float()) {
    double d = value.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9.0e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  schema_failure(join(path, key), "expected an integer");
}

std::int64_t integer_or(const json& node, const std::string& path, const char* key,
                        std::int64_t fallback) {
  if (!node.is_object() || !node.contains(key)) return fallback;
  return integer(node, path, key);
}

std::string string(const json& node, const std::string& path, const char* key) {
  const json& value = require(node, path, key);
  if (!value.is_string()) schema_failure(join(path, key), "expected a string");
  return value.get<std::string>();
}

std::string string_or(const json& node, const std::string& path, const char* key,
                      std::string fallback) {
  if (!node.is_object() || !node.contains(key)) return fallback;
  return string(node, path, key);
}

std::vector<std::int64_t> integer_list(const json& node, const std::string& path,
                                       const char* key) {
  const json& value = require(node, path, key);
  const std::string where = join(path, key);
  if (!value.is_array()) schema_failure(where, "expected an array");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number_integer()) {
      schema_failure(where + "[" + std::to_string(i) + "]", "expected an integer");
    }
    out.push_back(value[i].get<std::int64_t>());
  }
  return out;
}

}  // namespace json_field

namespace jf = json_field;

GpuSpec gpu_from_json(const json& node, const std::string& path) {
  GpuSpec gpu;
  gpu.name = jf::string(node, path, "name");
  gpu.vendor = jf::string_or(node, path, "vendor", "");
  gpu.compute_rate = jf::number(node, path, "compute_rate");
  gpu.vram_capacity = jf::number(node, path, "vram_capacity");
  gpu.vram_bandwidth = jf::number(node, path, "vram_bandwidth");
  gpu.interconnect_bandwidth = jf::number(node, path, "interconnect_bandwidth");
  gpu.compute_discount = jf::number(node, path, "compute_discount");
  gpu.vram_bw_discount = jf::number(node, path, "vram_bw_discount");
  gpu.comm_discount = jf::number(node, path, "comm_discount");
  gpu.kv_block_size = jf::integer_or(node, path, "kv_block_size", 1);
  if (node.contains("layout_order")) {
    const json& order = node.at("layout_order");
    const std::string where = path + ".layout_order";
    if (!order.is_array() || order.size() != 4) {
      throw Error(ErrorCode::kSchema, where + ": expected an array of 4 axis names");
    }
    for (std::size_t i = 0; i < 4; ++i) {
      auto axis = order[i].is_string() ? parse_axis(order[i].get<std::string>())
                                       : std::nullopt;
      if (!axis) {
        throw Error(ErrorCode::kSchema, where + "[" + std::to_string(i) +
                                            "]: expected one of layer, kv_head, token, head_dim");
      }
      gpu.layout_order[i] = *axis;
    }
  }
  return gpu;
}

ModelSpec model_from_json(const json& node, const std::string& path) {
  ModelSpec model;
  model.name = jf::string(node, path, "name");
  model.num_layers = jf::integer(node, path, "num_layers");
  model.hidden_dim = jf::integer(node, path, "hidden_dim");
  model.num_attention_heads = jf::integer(node, path, "num_attention_heads");
  model.num_kv_heads = jf::integer(node, path, "num_kv_heads");
  model.head_dim = jf::integer(node, path, "head_dim");
  model.ffn_dim = jf::integer(node, path, "ffn_dim");
  model.vocab_size = jf::integer(node, path, "vocab_size");
  model.num_experts = jf::integer_or(node, path, "num_experts", 1);
  model.experts_per_token = jf::integer_or(node, path, "experts_per_token", 1);
  model.dtype_bytes = jf::integer_or(node, path, "dtype_bytes", 2);
  return model;
}

WorkloadSpec workload_from_json(const json& node, const std::string& path) {
  WorkloadSpec workload;
  workload.name = jf::string(node, path, "name");
  workload.input_len = jf::integer(node, path, "input_len");
  workload.output_len = jf::integer(node, path, "output_len");
  workload.qps = jf::number(node, path, "qps");
  workload.ttft_slo = jf::number(node, path, "ttft_slo");
  workload.tpot_slo = jf::number(node, path, "tpot_slo");
  const std::string arrival = jf::string_or(node, path, "arrival_process", "deterministic");
  if (arrival == "deterministic") {
    workload.arrival_process = ArrivalProcess::kDeterministic;
  } else if (arrival == "poisson") {
    workload.arrival_process = ArrivalProcess::kPoisson;
  } else {
    throw Error(ErrorCode::kSchema,
                path + ".arrival_process: expected \"deterministic\" or \"poisson\"");
  }
  return workload;
}

namespace {

template <typename T, typename Parse>
std::vector<T> read_array(const json& document, const char* key, Parse parse) {
  std::vector<T> out;
  if (!document.contains(key)) return out;
  const json& items = document.at(key);
  if (!items.is_array()) throw Error(ErrorCode::kSchema, std::string(key) + ": expected an array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    T item = parse(items[i], std::string(key) + "[" + std::to_string(i) + "]");
    validate(item);
    out.push_back(std::move(item));
  }
  return out;
}

template <typename T>
void reject_duplicates(const std::vector<T>& items, const char* kind) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (items[i].name == items[j].name) {
        throw Error(ErrorCode::kInvariant,
                    std::string(kind) + " '" + items[i].name + "': duplicate name");
      }
    }
  }
}

}  // namespace

Catalog load_catalog(const json& document) {
  if (!document.is_object()) throw Error(ErrorCode::kSchema, "<root>: expected an object");
  Catalog catalog;
  catalog.gpus = read_array<GpuSpec>(document, "gpus", gpu_from_json);
  catalog.models = read_array<ModelSpec>(document, "models", model_from_json);
  catalog.workloads = read_array<WorkloadSpec>(document, "workloads", workload_from_json);
  reject_duplicates(catalog.gpus, "gpu");
  reject_duplicates(catalog.models, "model");
  reject_duplicates(catalog.workloads, "workload");
  return catalog;
}

Catalog parse_catalog(std::string_view document) {
  json parsed;
  try {
    parsed = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, std::string("<root>: ") + e.what());
  }
  return load_catalog(parsed);
}

Catalog load_catalog_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_catalog(buffer.str());
}

json to_json(const GpuSpec& gpu) {
  json order = json::array();
  for (KvAxis axis : gpu.layout_order) order.push_back(std::string(to_string(axis)));
  return json{{"name", gpu.name},
              {"vendor", gpu.vendor},
              {"compute_rate", gpu.compute_rate},
              {"vram_capacity", gpu.vram_capacity},
              {"vram_bandwidth", gpu.vram_bandwidth},
              {"interconnect_bandwidth", gpu.interconnect_bandwidth},
              {"compute_discount", gpu.compute_discount},
              {"vram_bw_discount", gpu.vram_bw_discount},
              {"comm_discount", gpu.comm_discount},
              {"kv_block_size", gpu.kv_block_size},
              {"layout_order", order}};
}

json to_json(const ModelSpec& model) {
  return json{{"name", model.name},
              {"num_layers", model.num_layers},
              {"hidden_dim", model.hidden_dim},
              {"num_attention_heads", model.num_attention_heads},
              {"num_kv_heads", model.num_kv_heads},
              {"head_dim", model.head_dim},
              {"ffn_dim", model.ffn_dim},
              {"vocab_size", model.vocab_size},
              {"num_experts", model.num_experts},
              {"experts_per_token", model.experts_per_token},
              {"dtype_bytes", model.dtype_bytes}};
}

json to_json(const WorkloadSpec& workload) {
  return json{{"name", workload.name},
              {"input_len", workload.input_len},
              {"output_len", workload.output_len},
              {"qps", workload.qps},
              {"ttft_slo", workload.ttft_slo},
              {"tpot_slo", workload.tpot_slo},
              {"arrival_process", std::string(to_string(workload.arrival_process))}};
}

json to_json(const Catalog& catalog) {
  json out = {{"gpus", json::array()}, {"models", json::array()}, {"workloads", json::array()}};
  for (const auto& gpu : catalog.gpus) out["gpus"].push_back(to_json(gpu));
  for (const auto& model : catalog.models) out["models"].push_back(to_json(model));
  for (const auto& workload : catalog.workloads) out["workloads"].push_back(to_json(workload));
  return out;
}

}  // namespace hetpd
