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

#include "hetpd/cost_model.h"

#include <fmt/format.h>

#include <cmath>

#include "hetpd/error.h"

namespace hetpd {

namespace {

double align_up(double bytes, std::int64_t alignment) {
  if (alignment <= 1) return bytes;
  const double a = static_cast<double>(alignment);
  return std::ceil(bytes / a) * a;
}

std::int64_t round_up_tokens(std::int64_t tokens, std::int64_t block) {
  if (block <= 1) return tokens;
  return (tokens + block - 1) / block * block;
}

void require_batch(std::int64_t batch, const char* op) {
  if (batch < 1) {
    throw Error(ErrorCode::kInvariant, std::string(op) + ": batch must be >= 1");
  }
}

// Instance-wide FLOPs of one step. The linear part follows the 2 * N * T
// convention over the active parameters (embedding included); attention adds
// QK^T and AV, each 2 * heads * head_dim per (query, key) pair.
double total_flops(const ModelSpec& model, const ModelStats& stats, double new_tokens,
                   double attended_pairs) {
  const double linear = 2.0 * static_cast<double>(stats.active_param_count) * new_tokens;
  const double attention = 4.0 * static_cast<double>(model.num_attention_heads) *
                           static_cast<double>(model.head_dim) *
                           static_cast<double>(model.num_layers) * attended_pairs;
  return linear + attention;
}

// Per-GPU communication: two all-reduces per layer over the tp group (ring
// volume 2 (tp - 1) / tp of the message each), for the layers this GPU owns,
// plus pipeline boundary activations averaged over the stages.
double comm_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy,
                          double new_tokens) {
  const double message = new_tokens * static_cast<double>(model.hidden_dim) *
                         static_cast<double>(model.dtype_bytes);
  const double tp = static_cast<double>(strategy.tp);
  const double pp = static_cast<double>(strategy.pp);
  const double layers_per_gpu = static_cast<double>(model.num_layers) / pp;
  const double collectives = layers_per_gpu * 2.0 * (2.0 * (tp - 1.0) / tp) * message;
  const double boundary = (pp - 1.0) / pp * message;
  return collectives + boundary;
}

double raw_weight_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy) {
  const ModelStats stats = derive_stats(model);
  const double dtype = static_cast<double>(model.dtype_bytes);
  const double shards = static_cast<double>(strategy.tp * strategy.pp);
  const double experts = static_cast<double>(stats.expert_param_count) * dtype;
  const double dense = static_cast<double>(stats.param_count) * dtype - experts;
  return dense / shards + experts / (shards * static_cast<double>(strategy.ep));
}

}  // namespace

std::string to_string(const ParallelStrategy& s) {
  return fmt::format("dp{}-tp{}-pp{}-ep{}", s.dp, s.tp, s.pp, s.ep);
}

void check_compatible(const ModelSpec& model, const ParallelStrategy& s) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kIncompatibleStrategy,
                fmt::format("{} with model '{}': {}", to_string(s), model.name, what));
  };
  if (s.dp < 1 || s.tp < 1 || s.pp < 1 || s.ep < 1) fail("all degrees must be >= 1");
  if (model.num_attention_heads % s.tp != 0) {
    fail(fmt::format("tp={} does not divide num_attention_heads={}", s.tp,
                     model.num_attention_heads));
  }
  if (model.num_kv_heads % s.tp != 0) {
    fail(fmt::format("tp={} does not divide num_kv_heads={}", s.tp, model.num_kv_heads));
  }
  if (model.num_experts % s.ep != 0) {
    fail(fmt::format("ep={} does not divide num_experts={}", s.ep, model.num_experts));
  }
  if ((s.tp * s.pp) % s.ep != 0) {
    fail(fmt::format("ep={} does not divide tp*pp={}", s.ep, s.tp * s.pp));
  }
  if (s.pp > model.num_layers) {
    fail(fmt::format("pp={} exceeds num_layers={}", s.pp, model.num_layers));
  }
}

bool is_compatible(const ModelSpec& model, const ParallelStrategy& strategy) {
  try {
    check_compatible(model, strategy);
    return true;
  } catch (const Error&) {
    return false;
  }
}

VramBudget VramBudget::make(double weight, double activation, double kv) {
  VramBudget budget{weight, activation, kv, weight + activation + kv};
  if (budget.total_bytes != budget.weight_bytes + budget.activation_bytes + budget.kv_bytes ||
      weight < 0 || activation < 0 || kv < 0) {
    throw Error(ErrorCode::kInvariantBreach, "VramBudget parts do not sum to total");
  }
  return budget;
}

std::vector<OperatorRow> operator_table(const ModelSpec& model, const ParallelStrategy& s,
                                        Stage stage, std::int64_t batch,
                                        std::int64_t tokens_per_seq,
                                        std::int64_t context_tokens_total) {
  check_compatible(model, s);
  const ModelStats stats = derive_stats(model);
  const double dt = static_cast<double>(model.dtype_bytes);
  const double h = static_cast<double>(model.hidden_dim);
  const double L = static_cast<double>(model.num_layers);
  const double q_width = static_cast<double>(model.num_attention_heads * model.head_dim);
  const double kv_width = static_cast<double>(model.num_kv_heads * model.head_dim);
  const double vocab = static_cast<double>(model.vocab_size);
  const double ffn = static_cast<double>(model.ffn_dim);
  const double experts = static_cast<double>(model.num_experts);
  const double active_experts = static_cast<double>(model.experts_per_token);
  const double shards = static_cast<double>(s.tp * s.pp);
  const double expert_shards = model.num_experts > 1 ? shards * static_cast<double>(s.ep) : shards;

  const double b = static_cast<double>(batch);
  double new_tokens = 0;
  double pairs = 0;
  double kv_traffic = 0;
  if (stage == Stage::kPrefill) {
    const double seq = static_cast<double>(tokens_per_seq);
    new_tokens = b * seq;
    pairs = b * seq * seq;
    kv_traffic = new_tokens * static_cast<double>(stats.kv_bytes_per_token);  // written
  } else {
    new_tokens = b;
    pairs = static_cast<double>(context_tokens_total);
    kv_traffic = pairs * static_cast<double>(stats.kv_bytes_per_token);  // read
  }
  const double attn_unit = 2.0 * static_cast<double>(model.num_attention_heads) *
                           static_cast<double>(model.head_dim) * L * pairs;
  const double router = model.num_experts > 1 ? h * experts : 0.0;

  std::vector<OperatorRow> rows = {
      {"embedding", 2.0 * new_tokens * vocab * h, vocab * h * dt, 0},
      {"qkv_proj", 2.0 * new_tokens * h * (q_width + 2.0 * kv_width) * L,
       h * (q_width + 2.0 * kv_width) * L * dt, 0},
      {"attention_score", attn_unit, kv_traffic / 2.0, 0},
      {"attention_value", attn_unit, kv_traffic / 2.0, 0},
      {"out_proj", 2.0 * new_tokens * q_width * h * L, q_width * h * L * dt, 0},
      {"ffn", 2.0 * new_tokens * (3.0 * h * ffn * active_experts + router) * L, 0, 0},
      {"norm", 2.0 * new_tokens * (2.0 * h * L + h), (2.0 * h * L + h) * dt, 0},
      {"lm_head", 2.0 * new_tokens * vocab * h, vocab * h * dt, 0},
  };
  for (auto& row : rows) {
    row.flops /= shards;
    row.bytes_moved /= shards;
  }
  // FFN weights are split differently when experts are sharded by ep.
  rows[5].bytes_moved = (3.0 * h * ffn * experts * L * dt) / expert_shards + router * L * dt / shards;

  const double message = new_tokens * h * dt;
  const double tp = static_cast<double>(s.tp);
  const double pp = static_cast<double>(s.pp);
  rows.push_back({"tp_allreduce", 0, 0, L / pp * 2.0 * (2.0 * (tp - 1.0) / tp) * message});
  rows.push_back({"pp_send", 0, 0, (pp - 1.0) / pp * message});
  return rows;
}

std::string format_operator_table(const std::vector<OperatorRow>& rows) {
  std::string out = fmt::format("{:<16} {:>16} {:>16} {:>16}\n", "operator", "flops",
                                "bytes_moved", "comm_bytes");
  OperatorRow total{"total", 0, 0, 0};
  for (const auto& row : rows) {
    out += fmt::format("{:<16} {:>16.6e} {:>16.6e} {:>16.6e}\n", row.name, row.flops,
                       row.bytes_moved, row.comm_bytes);
    total.flops += row.flops;
    total.bytes_moved += row.bytes_moved;
    total.comm_bytes += row.comm_bytes;
  }
  out += fmt::format("{:<16} {:>16.6e} {:>16.6e} {:>16.6e}\n", total.name, total.flops,
                     total.bytes_moved, total.comm_bytes);
  return out;
}

StageCost prefill_cost(const GpuSpec& gpu, const ModelSpec& model,
                       const ParallelStrategy& strategy, std::int64_t batch,
                       std::int64_t seq_len) {
  check_compatible(model, strategy);
  require_batch(batch, "prefill_cost");
  if (seq_len < 1) throw Error(ErrorCode::kInvariant, "prefill_cost: seq_len must be >= 1");

  const ModelStats stats = derive_stats(model);
  const double b = static_cast<double>(batch);
  const double seq = static_cast<double>(seq_len);
  const double instance_flops = total_flops(model, stats, b * seq, b * seq * seq);

  StageCost cost;
  cost.compute_flops = instance_flops / static_cast<double>(strategy.tp * strategy.pp);
  cost.comm_bytes = comm_bytes_per_gpu(model, strategy, b * seq);
  cost.latency = cost.compute_flops / (gpu.compute_discount * gpu.compute_rate) +
                 cost.comm_bytes / (gpu.comm_discount * gpu.interconnect_bandwidth);
  return cost;
}

StageCost decode_step_cost(const GpuSpec& gpu, const ModelSpec& model,
                           const ParallelStrategy& strategy, std::int64_t batch,
                           std::int64_t context_tokens_total) {
  check_compatible(model, strategy);
  require_batch(batch, "decode_cost");

  const ModelStats stats = derive_stats(model);
  const double b = static_cast<double>(batch);
  const double context = static_cast<double>(context_tokens_total);
  const double shards = static_cast<double>(strategy.tp * strategy.pp);

  StageCost cost;
  // Reported for the operator library only; not part of the latency.
  cost.compute_flops = total_flops(model, stats, b, context) / shards;
  cost.comm_bytes = comm_bytes_per_gpu(model, strategy, b);
  cost.vram_access_bytes =
      raw_weight_bytes_per_gpu(model, strategy) +
      context * static_cast<double>(stats.kv_bytes_per_token) / shards;
  cost.latency = cost.vram_access_bytes / (gpu.vram_bw_discount * gpu.vram_bandwidth) +
                 cost.comm_bytes / (gpu.comm_discount * gpu.interconnect_bandwidth);
  return cost;
}

StageCost decode_cost(const GpuSpec& gpu, const ModelSpec& model,
                      const ParallelStrategy& strategy, std::int64_t batch,
                      std::int64_t context_len) {
  if (context_len < 1) throw Error(ErrorCode::kInvariant, "decode_cost: context_len must be >= 1");
  return decode_step_cost(gpu, model, strategy, batch, batch * context_len);
}

double weight_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy,
                            const CostOptions& options) {
  return align_up(raw_weight_bytes_per_gpu(model, strategy), options.alignment_bytes);
}

double activation_bytes_per_gpu(const ModelSpec& model, std::int64_t tokens,
                                const CostOptions& options) {
  const double bytes = options.activation_live_tensors * static_cast<double>(tokens) *
                       static_cast<double>(model.hidden_dim) *
                       static_cast<double>(model.dtype_bytes);
  return align_up(bytes, options.alignment_bytes);
}

double kv_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy,
                        std::int64_t tokens, std::int64_t kv_block_size) {
  const double padded = static_cast<double>(round_up_tokens(tokens, kv_block_size));
  return padded * static_cast<double>(derive_stats(model).kv_bytes_per_token) /
         static_cast<double>(strategy.tp * strategy.pp);
}

VramBudget prefill_vram(const ModelSpec& model, const ParallelStrategy& strategy,
                        std::int64_t batch, std::int64_t seq_len,
                        const CostOptions& options) {
  check_compatible(model, strategy);
  const double weight = weight_bytes_per_gpu(model, strategy, options);
  double activation = 0;
  if (batch > 0 && seq_len > 0) {
    const std::int64_t tokens = batch * seq_len;
    const double prefill_kv = static_cast<double>(tokens) *
                              static_cast<double>(derive_stats(model).kv_bytes_per_token) /
                              static_cast<double>(strategy.tp * strategy.pp);
    activation = activation_bytes_per_gpu(model, tokens, options) +
                 align_up(prefill_kv, options.alignment_bytes);
  }
  return VramBudget::make(weight, activation, 0.0);
}

VramBudget decode_vram(const ModelSpec& model, const ParallelStrategy& strategy,
                       std::int64_t batch, std::int64_t max_context,
                       std::int64_t kv_block_size, const CostOptions& options) {
  check_compatible(model, strategy);
  const double weight = weight_bytes_per_gpu(model, strategy, options);
  if (batch <= 0) return VramBudget::make(weight, 0.0, 0.0);
  const double activation = activation_bytes_per_gpu(model, batch, options);
  const double kv =
      static_cast<double>(batch) * kv_bytes_per_gpu(model, strategy, max_context, kv_block_size);
  return VramBudget::make(weight, activation, kv);
}

std::int64_t max_decode_batch(const GpuSpec& gpu, const ModelSpec& model,
                              const ParallelStrategy& strategy, std::int64_t max_context,
                              const CostOptions& options) {
  check_compatible(model, strategy);
  const double capacity = gpu.vram_capacity;
  const double weight = weight_bytes_per_gpu(model, strategy, options);
  if (weight + activation_bytes_per_gpu(model, 1, options) > capacity) {
    throw Error(ErrorCode::kWeightsDoNotFit,
                fmt::format("model '{}' with {} needs {:.4e} B of weights per GPU; gpu '{}' has "
                            "{:.4e} B",
                            model.name, to_string(strategy), weight, gpu.name, capacity));
  }
  auto fits = [&](std::int64_t b) {
    return decode_vram(model, strategy, b, max_context, gpu.kv_block_size, options).total_bytes <=
           capacity;
  };
  // Rounding only adds bytes, so the unrounded linear inversion bounds the answer.
  const double per_seq =
      options.activation_live_tensors * static_cast<double>(model.hidden_dim * model.dtype_bytes) +
      kv_bytes_per_gpu(model, strategy, max_context, gpu.kv_block_size);
  const double raw_weight = raw_weight_bytes_per_gpu(model, strategy);
  std::int64_t hi = static_cast<std::int64_t>(std::floor((capacity - raw_weight) / per_seq)) + 1;
  std::int64_t lo = 0;  // fits(0) holds
  while (fits(hi)) hi *= 2;  // guards against the bound being off by rounding
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

PrefillThroughput instance_throughput_p(const GpuSpec& gpu, const ModelSpec& model,
                                        const ParallelStrategy& strategy,
                                        const WorkloadSpec& workload,
                                        const CostOptions& options) {
  PrefillThroughput out;
  out.batch = options.prefill_batch;
  out.latency = prefill_cost(gpu, model, strategy, out.batch, workload.input_len).latency;
  out.requests_per_s = static_cast<double>(out.batch) / out.latency;
  out.tokens_per_s = out.requests_per_s * static_cast<double>(workload.input_len);
  out.requests_per_s_per_gpu =
      out.requests_per_s / static_cast<double>(strategy.gpus_per_instance());
  return out;
}

std::int64_t planning_decode_context(const WorkloadSpec& workload) {
  return workload.input_len + workload.output_len / 2;
}

DecodeThroughput instance_throughput_d(const GpuSpec& gpu, const ModelSpec& model,
                                       const ParallelStrategy& strategy,
                                       const WorkloadSpec& workload,
                                       const CostOptions& options) {
  DecodeThroughput out;
  out.context_len = planning_decode_context(workload);
  out.max_batch = max_decode_batch(gpu, model, strategy,
                                   workload.input_len + workload.output_len, options);
  auto latency = [&](std::int64_t b) {
    return decode_cost(gpu, model, strategy, b, out.context_len).latency;
  };
  if (out.max_batch < 1 || latency(1) > workload.tpot_slo) {
    throw Error(ErrorCode::kNoFeasibleBatch,
                fmt::format("no decode batch of model '{}' with {} on gpu '{}' meets TPOT {} s "
                            "within VRAM (max batch by VRAM = {})",
                            model.name, to_string(strategy), gpu.name, workload.tpot_slo,
                            out.max_batch));
  }
  // l_d is non-decreasing in the batch and b / l_d(b) is increasing, so the
  // best batch is the largest one meeting the SLO.
  std::int64_t lo = 1;
  std::int64_t hi = out.max_batch + 1;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (latency(mid) <= workload.tpot_slo) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.batch = lo;
  out.latency = latency(lo);
  out.tokens_per_s = static_cast<double>(lo) / out.latency;
  return out;
}

}  // namespace hetpd
