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

// Discrete-event simulation of a prefill/decode serving cluster.
//
// Disaggregated request lifecycle:
//
//   arrival --dispatch_overhead--> P queue --prefill--> first token
//     --hop1 (P GPU -> host buffer)--> --hop2 (link)--> D host buffer
//     --[reserve full KV on D]--> hop3 (host -> D GPU) --> joins the D batch
//     at the next step boundary --> one token per decode step --> done
//
// P and D instances are chosen by least outstanding tokens, ties to the lowest
// index; P at arrival, D when prefill completes. Each hop is a FIFO resource
// taking bytes / (beta * bandwidth) + overhead; hop1 belongs to the P
// instance, hop2 and hop3 to the D instance.
//
// Colocated mode runs both stages on one engine with prefill priority at step
// granularity: when an engine frees up it prefills whatever is queued before
// stepping its decode batch again. KV is reserved in full at prefill
// admission and never moves.
//
// Events at equal times are ordered by kind, then id, then insertion order.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetpd/catalog.h"
#include "hetpd/cost_model.h"
#include "hetpd/planner.h"

namespace hetpd {

struct TransferLink {
  double bandwidth = 25e9;            // bytes/s between hosts
  double discount = 1.0;              // beta
  double per_hop_overhead = 0.0;      // seconds per hop per request
  double host_copy_bandwidth = 25e9;  // bytes/s, GPU <-> pinned host buffer
};

void validate(const TransferLink& link);

// Seconds for hop 1, 2 or 3 to move `bytes`.
double hop_time(const TransferLink& link, int hop, double bytes);

enum class InstanceRole { kPrefill, kDecode, kColocated };
std::string_view to_string(InstanceRole role);

struct InstanceSpec {
  InstanceRole role = InstanceRole::kPrefill;
  GpuSpec gpu;
  ParallelStrategy strategy;
};

struct Cluster {
  ModelSpec model;
  TransferLink link;
  std::vector<InstanceSpec> instances;

  bool colocated() const;
  std::int64_t count(InstanceRole role) const;
  std::int64_t total_gpus() const;
};

// p_count prefill instances followed by d_count decode instances.
Cluster build_cluster(const DeploymentPlan& plan, const GpuSpec& p_gpu, const GpuSpec& d_gpu,
                      const ModelSpec& model, const TransferLink& link);
Cluster build_colocated(const GpuSpec& gpu, const ModelSpec& model,
                        const ParallelStrategy& strategy, std::int64_t count);
// One engine per entry; the pool may mix GPU types.
Cluster build_colocated(const std::vector<GpuSpec>& gpus, const ModelSpec& model,
                        const ParallelStrategy& strategy);

struct Request {
  std::int64_t id = 0;
  double arrival_time = 0;
  std::int64_t input_len = 0;
  std::int64_t output_len = 1;

  std::int64_t p_instance = -1;
  std::int64_t d_instance = -1;  // the colocated engine in colocated mode
  double prefill_start = -1;
  double prefill_end = -1;
  double first_token_time = -1;
  double kv_transfer_start = -1;
  double kv_transfer_end = -1;
  double decode_start = -1;  // start of the first decode step it joined
  double finish_time = -1;
  std::int64_t tokens_emitted = 0;
  std::vector<double> token_times;  // completion time of every token, first included

  double ttft() const { return first_token_time - arrival_time; }
  // Mean gap between tokens after the first; 0 for single-token requests.
  double tpot() const;
};

// Deterministic mode places arrivals at i / qps for every i with i / qps <
// duration. Poisson mode draws gaps -ln(1 - u) / qps from a mt19937_64 seeded
// with `seed`, u = (x >> 11) * 2^-53.
std::vector<Request> generate_arrivals(const WorkloadSpec& workload, double duration,
                                       std::uint64_t seed);

struct SimOptions {
  double dispatch_overhead = 0.0;  // scheduler -> P queue, seconds
  double max_sim_time = 1e7;       // seconds; exceeded => Error(kSimTimeOverflow)
  CostOptions cost;
  bool record_trace = false;
};

struct SimMetrics {
  std::int64_t arrived = 0;
  std::int64_t completed = 0;
  std::int64_t completed_tokens = 0;
  std::int64_t slo_met = 0;
  double makespan = 0;  // time of the last completion
  double ttft_mean = 0;
  double ttft_p50 = 0;
  double ttft_p99 = 0;
  double tpot_mean = 0;
  double tpot_p99 = 0;
  double throughput = 0;      // completed tokens / makespan
  double goodput = 0;         // SLO-meeting requests / makespan
  double completed_rate = 0;  // completed requests / makespan
  double kv_transfer_time_mean = 0;
  std::vector<double> busy_fraction;  // per instance, compute time / makespan

  bool operator==(const SimMetrics&) const = default;
};

struct TraceRecord {
  double time = 0;
  std::string event;
  std::int64_t request = 0;
  std::int64_t instance = -1;

  bool operator==(const TraceRecord&) const = default;
};

struct SimResult {
  SimMetrics metrics;
  std::vector<Request> requests;
  std::vector<TraceRecord> trace;
};

// Linear interpolation between closest ranks; p in [0, 1].
double percentile(std::vector<double> values, double p);

// Runs until every request completes. Invariant failures (VRAM over capacity,
// causality, an idle instance with admissible work, token conservation) throw
// Error(kInvariantBreach); a request that can never fit throws
// Error(kInvariant).
SimResult run(const Cluster& cluster, std::vector<Request> arrivals,
              const WorkloadSpec& slo, const SimOptions& options = {});
SimResult run_colocated(const Cluster& cluster, std::vector<Request> arrivals,
                        const WorkloadSpec& slo, const SimOptions& options = {});

// Metrics recomputed from finished requests.
SimMetrics summarize(const std::vector<Request>& requests, const WorkloadSpec& slo,
                     std::vector<double> busy_time);

struct ComparisonRow {
  std::string label;
  SimMetrics metrics;
  // Relative to the first row: (x - base) / base; 0 when both are 0.
  double throughput_delta = 0;
  double goodput_delta = 0;
  double ttft_mean_delta = 0;
  double tpot_mean_delta = 0;
};

double relative_delta(double value, double base);
std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, SimMetrics>>& runs);

nlohmann::json to_json(const TransferLink& link);
TransferLink link_from_json(const nlohmann::json& node, const std::string& path);
nlohmann::json to_json(const SimMetrics& metrics);
SimMetrics metrics_from_json(const nlohmann::json& node, const std::string& path);
nlohmann::json to_json(const TraceRecord& record);

}  // namespace hetpd
