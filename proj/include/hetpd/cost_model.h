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

// Layered analytical cost model for one serving instance.
//
//   theoretical layer   per-operator FLOPs / bytes of a decoder-only
//                       transformer (operator_table)
//   hardware layer      weights and activations rounded up to
//                       CostOptions::alignment_bytes, KV rounded up to whole
//                       paged-attention blocks
//   framework layer     prefix caching and quantization are identity
//   operator libraries  compute rows + communication rows of the table
//
// Prefill latency  = compute_flops / (lambda * R) + comm_bytes / (beta * B)
// Decode latency   = vram_access_bytes / (alpha * B_vram) + comm_bytes / (beta * B)
//
// Decode compute time is treated as fully hidden behind memory traffic. This
// stops being true once a decode batch is large enough to turn compute-bound;
// the model does not switch regimes.
//
// All volumes are per GPU. An instance of tp * pp GPUs splits FLOPs, weights
// and KV evenly across its GPUs (pp is an even split of the layers).

#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "hetpd/catalog.h"

namespace hetpd {

struct ParallelStrategy {
  std::int64_t dp = 1;
  std::int64_t tp = 1;
  std::int64_t pp = 1;
  std::int64_t ep = 1;

  // dp replicates whole instances, so it does not count here.
  std::int64_t gpus_per_instance() const { return tp * pp; }

  auto operator<=>(const ParallelStrategy&) const = default;
};

std::string to_string(const ParallelStrategy& strategy);

// Throws Error(kIncompatibleStrategy) naming the first divisibility failure:
// tp | num_attention_heads, tp | num_kv_heads, ep | num_experts,
// ep | tp * pp, pp <= num_layers, all degrees >= 1.
void check_compatible(const ModelSpec& model, const ParallelStrategy& strategy);
bool is_compatible(const ModelSpec& model, const ParallelStrategy& strategy);

struct CostOptions {
  std::int64_t alignment_bytes = 1;     // hardware-feature rounding granularity
  double activation_live_tensors = 4.0;  // live hidden-sized tensors per token
  std::int64_t prefill_batch = 1;        // requests per prefill step
};

struct StageCost {
  double compute_flops = 0;      // per GPU
  double comm_bytes = 0;         // per GPU
  double vram_access_bytes = 0;  // per GPU; decode only
  double latency = 0;            // seconds
};

struct VramBudget {
  double weight_bytes = 0;
  double activation_bytes = 0;
  double kv_bytes = 0;
  double total_bytes = 0;

  // Checks total == weight + activation + kv.
  static VramBudget make(double weight, double activation, double kv);
};

enum class Stage { kPrefill, kDecode };

struct OperatorRow {
  std::string name;
  double flops = 0;       // per GPU
  double bytes_moved = 0; // per GPU, VRAM traffic
  double comm_bytes = 0;  // per GPU, collective / p2p traffic
};

// Per-GPU operator library for one step. For prefill every sequence has
// `tokens_per_seq` new tokens attending over themselves; for decode each
// sequence adds one token and attends over `context_tokens_total / batch`
// tokens on average.
std::vector<OperatorRow> operator_table(const ModelSpec& model, const ParallelStrategy& strategy,
                                        Stage stage, std::int64_t batch,
                                        std::int64_t tokens_per_seq,
                                        std::int64_t context_tokens_total);
std::string format_operator_table(const std::vector<OperatorRow>& rows);

StageCost prefill_cost(const GpuSpec& gpu, const ModelSpec& model,
                       const ParallelStrategy& strategy, std::int64_t batch,
                       std::int64_t seq_len);

StageCost decode_cost(const GpuSpec& gpu, const ModelSpec& model,
                      const ParallelStrategy& strategy, std::int64_t batch,
                      std::int64_t context_len);

// Decode step where the batch's contexts sum to `context_tokens_total`.
// decode_cost(b, c) == decode_step_cost(b, b * c).
StageCost decode_step_cost(const GpuSpec& gpu, const ModelSpec& model,
                           const ParallelStrategy& strategy, std::int64_t batch,
                           std::int64_t context_tokens_total);

// Weight bytes resident on each GPU: dense weights split tp * pp ways,
// expert weights additionally split ep ways.
double weight_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy,
                            const CostOptions& options = {});
// Live activations for `tokens` in-flight tokens (not sharded).
double activation_bytes_per_gpu(const ModelSpec& model, std::int64_t tokens,
                                const CostOptions& options = {});
// KV bytes per GPU for `tokens` cached tokens of one sequence, padded to
// whole blocks.
double kv_bytes_per_gpu(const ModelSpec& model, const ParallelStrategy& strategy,
                        std::int64_t tokens, std::int64_t kv_block_size = 1);

// Prefill KV lives inside activation_bytes; kv_bytes is always 0.
VramBudget prefill_vram(const ModelSpec& model, const ParallelStrategy& strategy,
                        std::int64_t batch, std::int64_t seq_len,
                        const CostOptions& options = {});

VramBudget decode_vram(const ModelSpec& model, const ParallelStrategy& strategy,
                       std::int64_t batch, std::int64_t max_context,
                       std::int64_t kv_block_size = 1, const CostOptions& options = {});

// Largest batch whose decode_vram fits the GPU; 0 if not even one sequence
// fits. Throws Error(kWeightsDoNotFit) when weights plus one token of
// activation already exceed capacity.
std::int64_t max_decode_batch(const GpuSpec& gpu, const ModelSpec& model,
                              const ParallelStrategy& strategy, std::int64_t max_context,
                              const CostOptions& options = {});

struct PrefillThroughput {
  std::int64_t batch = 1;
  double latency = 0;           // l_p of one batch
  double requests_per_s = 0;    // per instance
  double tokens_per_s = 0;      // requests_per_s * input_len
  double requests_per_s_per_gpu = 0;
};

PrefillThroughput instance_throughput_p(const GpuSpec& gpu, const ModelSpec& model,
                                        const ParallelStrategy& strategy,
                                        const WorkloadSpec& workload,
                                        const CostOptions& options = {});

struct DecodeThroughput {
  std::int64_t batch = 0;      // largest SLO- and VRAM-feasible batch
  std::int64_t max_batch = 0;  // VRAM-only bound
  std::int64_t context_len = 0;
  double latency = 0;          // l_d at `batch`
  double tokens_per_s = 0;     // batch / latency
};

// Representative decode context: input_len + output_len / 2 (floor).
std::int64_t planning_decode_context(const WorkloadSpec& workload);

// Throws Error(kNoFeasibleBatch) when no batch >= 1 meets both the TPOT SLO
// and VRAM capacity.
DecodeThroughput instance_throughput_d(const GpuSpec& gpu, const ModelSpec& model,
                                       const ParallelStrategy& strategy,
                                       const WorkloadSpec& workload,
                                       const CostOptions& options = {});

}  // namespace hetpd
