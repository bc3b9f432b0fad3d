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

// Two-stage deployment planner.
//
// Stage 1 (prefill): over every compatible strategy, maximise requests/s per
// GPU subject to
//   c1: l_p <= ttft_slo
//   c2: prefill VRAM <= capacity
// Stage 2 (decode): maximise tokens/s per instance subject to
//   c1: l_d <= tpot_slo (at batch 1; the batch then grows while it holds)
//   c2: decode VRAM of at least one sequence <= capacity
//
// Sizing:
//   X = ceil(qps / rps_p)
//   p_demand = X * rps_p * output_len            tokens/s
//   Y = ceil(p_demand / T^d)
// Both counts are rounded up to a multiple of the chosen strategy's dp, since
// dp means "replicate the instance dp times". Per-instance quantities always
// describe one replica of tp * pp GPUs, so dp never changes an objective and
// only loses tie-breaks.
//
// Ties: fewer GPUs (dp * tp * pp), then lexicographic (dp, tp, pp, ep).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetpd/catalog.h"
#include "hetpd/cost_model.h"
#include "hetpd/error.h"

namespace hetpd {

struct SearchSpace {
  std::vector<std::int64_t> tp_choices = {1, 2, 4, 8};
  std::vector<std::int64_t> pp_choices = {1, 2};
  std::vector<std::int64_t> dp_choices = {1};
  std::vector<std::int64_t> ep_choices = {1};
  std::int64_t max_gpus_per_instance = 8;  // bounds tp * pp
};

void validate(const SearchSpace& space);

// Cartesian product filtered by model compatibility and the GPU budget, in
// lexicographic (dp, tp, pp, ep) order. Throws Error(kNoCompatibleStrategy)
// when nothing survives.
std::vector<ParallelStrategy> enumerate_strategies(const SearchSpace& space,
                                                   const ModelSpec& model);

struct StrategyEvaluation {
  ParallelStrategy strategy;
  Stage stage = Stage::kPrefill;
  bool c1_violated = false;  // latency SLO
  bool c2_violated = false;  // VRAM
  std::int64_t batch = 0;    // prefill batch, or chosen decode batch
  double latency = 0;        // l_p, or l_d at `batch` (batch 1 when infeasible)
  double vram_bytes = 0;     // m_p, or m_d at `batch`
  double vram_capacity = 0;
  double throughput = 0;     // requests/s (prefill) or tokens/s (decode) per replica
  double objective = 0;      // 0 when infeasible

  bool feasible() const { return !c1_violated && !c2_violated; }
  // "ok", "c1", "c2" or "c1+c2".
  std::string tag() const;
  bool operator==(const StrategyEvaluation&) const = default;
};

StrategyEvaluation evaluate_p(const GpuSpec& gpu, const ModelSpec& model,
                              const WorkloadSpec& workload, const ParallelStrategy& strategy,
                              const CostOptions& options = {});
StrategyEvaluation evaluate_d(const GpuSpec& gpu, const ModelSpec& model,
                              const WorkloadSpec& workload, const ParallelStrategy& strategy,
                              const CostOptions& options = {});

// True when `a` beats `b` under the objective and tie-break.
bool better(const StrategyEvaluation& a, const StrategyEvaluation& b);

// Carries every evaluation of the failing stage.
class InfeasibleError : public Error {
 public:
  InfeasibleError(Stage stage, std::vector<StrategyEvaluation> report, const std::string& what);
  Stage stage() const { return stage_; }
  const std::vector<StrategyEvaluation>& report() const { return report_; }

 private:
  Stage stage_;
  std::vector<StrategyEvaluation> report_;
};

struct PStageResult {
  StrategyEvaluation best;
  std::vector<StrategyEvaluation> evaluations;  // enumeration order
};

struct DStageResult {
  StrategyEvaluation best;
  std::int64_t count = 0;  // Y
  std::vector<StrategyEvaluation> evaluations;
};

PStageResult solve_p_stage(const GpuSpec& gpu, const ModelSpec& model,
                           const WorkloadSpec& workload, const SearchSpace& space,
                           const CostOptions& options = {});

// p_demand in tokens/s; must be > 0.
DStageResult solve_d_stage(const GpuSpec& gpu, const ModelSpec& model,
                           const WorkloadSpec& workload, const SearchSpace& space,
                           double p_demand, const CostOptions& options = {});

// Smallest multiple of `granularity` that is >= demand / rate, checked so that
// count * rate >= demand holds in floating point too.
std::int64_t instances_needed(double demand, double rate, std::int64_t granularity = 1);

struct PlanOptions {
  CostOptions cost;
  std::int64_t max_total_gpus = 0;  // 0 = unlimited
};

struct DeploymentPlan {
  std::string model;
  std::string workload;
  std::string p_gpu;
  std::string d_gpu;
  ParallelStrategy p_strategy;
  ParallelStrategy d_strategy;
  std::int64_t p_count = 0;  // X
  std::int64_t d_count = 0;  // Y
  std::int64_t prefill_batch = 1;
  std::int64_t decode_batch = 0;
  double predicted_ttft = 0;
  double predicted_tpot = 0;
  double predicted_p_throughput = 0;  // requests/s per instance
  double predicted_d_throughput = 0;  // tokens/s per instance
  double objective_p = 0;             // requests/s per GPU
  double objective_d = 0;             // tokens/s per instance
  double p_demand = 0;                // tokens/s
  std::vector<StrategyEvaluation> p_evaluations;
  std::vector<StrategyEvaluation> d_evaluations;

  std::int64_t total_gpus() const;
  bool operator==(const DeploymentPlan&) const = default;
};

DeploymentPlan plan(const GpuSpec& p_gpu, const GpuSpec& d_gpu, const ModelSpec& model,
                    const WorkloadSpec& workload, const SearchSpace& space,
                    const PlanOptions& options = {});

// Re-checks every plan invariant against a fresh cost-model evaluation.
// Throws Error(kInvariantBreach) naming the first violation.
void verify_plan(const DeploymentPlan& plan, const GpuSpec& p_gpu, const GpuSpec& d_gpu,
                 const ModelSpec& model, const WorkloadSpec& workload,
                 const CostOptions& options = {});

struct RoleAssignment {
  std::string p_gpu;
  std::string d_gpu;
};

// P role: best stage-1 objective. D role: best stage-2 throughput per GPU.
// GPUs where a stage is infeasible are skipped for that role; throws
// InfeasibleError if a role has no candidate.
RoleAssignment assign_roles(const std::vector<GpuSpec>& gpus, const ModelSpec& model,
                            const WorkloadSpec& workload, const SearchSpace& space,
                            const CostOptions& options = {});

// Aligned table of every evaluated strategy.
std::string explain(const DeploymentPlan& plan);
std::string explain(const InfeasibleError& error);
std::string format_evaluations(const std::vector<StrategyEvaluation>& rows);

nlohmann::json to_json(const ParallelStrategy& strategy);
ParallelStrategy strategy_from_json(const nlohmann::json& node, const std::string& path);
nlohmann::json to_json(const StrategyEvaluation& evaluation);
StrategyEvaluation evaluation_from_json(const nlohmann::json& node, const std::string& path);
nlohmann::json to_json(const DeploymentPlan& plan);
DeploymentPlan plan_from_json(const nlohmann::json& node, const std::string& path = "plan");
nlohmann::json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& node, const std::string& path);

std::string_view to_string(Stage stage);

}  // namespace hetpd
