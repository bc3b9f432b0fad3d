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

#include "hetpd/planner.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>

namespace hetpd {

using nlohmann::json;
namespace jf = json_field;

namespace {

std::int64_t total_gpus(const ParallelStrategy& s) { return s.dp * s.tp * s.pp; }

std::optional<std::size_t> argmax(const std::vector<StrategyEvaluation>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].feasible()) continue;
    if (!best || better(rows[i], rows[*best])) best = i;
  }
  return best;
}

}  // namespace

std::string_view to_string(Stage stage) {
  return stage == Stage::kPrefill ? "prefill" : "decode";
}

void validate(const SearchSpace& space) {
  const std::pair<const char*, const std::vector<std::int64_t>*> lists[] = {
      {"tp_choices", &space.tp_choices},
      {"pp_choices", &space.pp_choices},
      {"dp_choices", &space.dp_choices},
      {"ep_choices", &space.ep_choices},
  };
  for (const auto& [name, list] : lists) {
    if (list->empty()) {
      throw Error(ErrorCode::kInvariant, fmt::format("search space: {} is empty", name));
    }
    for (std::int64_t v : *list) {
      if (v < 1) {
        throw Error(ErrorCode::kInvariant, fmt::format("search space: {} has degree {}", name, v));
      }
    }
  }
  if (space.max_gpus_per_instance < 1) {
    throw Error(ErrorCode::kInvariant, "search space: max_gpus_per_instance must be >= 1");
  }
}

std::vector<ParallelStrategy> enumerate_strategies(const SearchSpace& space,
                                                   const ModelSpec& model) {
  validate(space);
  std::vector<ParallelStrategy> out;
  for (std::int64_t dp : space.dp_choices) {
    for (std::int64_t tp : space.tp_choices) {
      for (std::int64_t pp : space.pp_choices) {
        for (std::int64_t ep : space.ep_choices) {
          const ParallelStrategy s{dp, tp, pp, ep};
          if (s.gpus_per_instance() > space.max_gpus_per_instance) continue;
          if (!is_compatible(model, s)) continue;
          out.push_back(s);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) {
    throw Error(ErrorCode::kNoCompatibleStrategy,
                fmt::format("no compatible strategy for model '{}' in the search space",
                            model.name));
  }
  return out;
}

std::string StrategyEvaluation::tag() const {
  if (c1_violated && c2_violated) return "c1+c2";
  if (c1_violated) return "c1";
  if (c2_violated) return "c2";
  return "ok";
}

StrategyEvaluation evaluate_p(const GpuSpec& gpu, const ModelSpec& model,
                              const WorkloadSpec& workload, const ParallelStrategy& strategy,
                              const CostOptions& options) {
  StrategyEvaluation e;
  e.strategy = strategy;
  e.stage = Stage::kPrefill;
  e.batch = options.prefill_batch;
  e.latency = prefill_cost(gpu, model, strategy, e.batch, workload.input_len).latency;
  e.vram_bytes = prefill_vram(model, strategy, e.batch, workload.input_len, options).total_bytes;
  e.vram_capacity = gpu.vram_capacity;
  e.c1_violated = !(e.latency <= workload.ttft_slo);
  e.c2_violated = !(e.vram_bytes <= e.vram_capacity);
  e.throughput = static_cast<double>(e.batch) / e.latency;
  e.objective =
      e.feasible() ? e.throughput / static_cast<double>(strategy.gpus_per_instance()) : 0.0;
  return e;
}

StrategyEvaluation evaluate_d(const GpuSpec& gpu, const ModelSpec& model,
                              const WorkloadSpec& workload, const ParallelStrategy& strategy,
                              const CostOptions& options) {
  StrategyEvaluation e;
  e.strategy = strategy;
  e.stage = Stage::kDecode;
  e.vram_capacity = gpu.vram_capacity;
  const std::int64_t max_context = workload.input_len + workload.output_len;
  std::int64_t max_batch = 0;
  try {
    max_batch = max_decode_batch(gpu, model, strategy, max_context, options);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kWeightsDoNotFit) throw;
  }
  const double first =
      decode_cost(gpu, model, strategy, 1, planning_decode_context(workload)).latency;
  e.c1_violated = !(first <= workload.tpot_slo);
  e.c2_violated = max_batch < 1;
  if (e.feasible()) {
    const DecodeThroughput t = instance_throughput_d(gpu, model, strategy, workload, options);
    e.batch = t.batch;
    e.latency = t.latency;
    e.throughput = t.tokens_per_s;
    e.objective = t.tokens_per_s;
  } else {
    e.batch = 1;
    e.latency = first;
  }
  e.vram_bytes =
      decode_vram(model, strategy, e.batch, max_context, gpu.kv_block_size, options).total_bytes;
  return e;
}

bool better(const StrategyEvaluation& a, const StrategyEvaluation& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (total_gpus(a.strategy) != total_gpus(b.strategy)) {
    return total_gpus(a.strategy) < total_gpus(b.strategy);
  }
  return a.strategy < b.strategy;
}

InfeasibleError::InfeasibleError(Stage stage, std::vector<StrategyEvaluation> report,
                                 const std::string& what)
    : Error(ErrorCode::kInfeasible, what), stage_(stage), report_(std::move(report)) {}

PStageResult solve_p_stage(const GpuSpec& gpu, const ModelSpec& model,
                           const WorkloadSpec& workload, const SearchSpace& space,
                           const CostOptions& options) {
  PStageResult result;
  for (const auto& s : enumerate_strategies(space, model)) {
    result.evaluations.push_back(evaluate_p(gpu, model, workload, s, options));
  }
  const auto best = argmax(result.evaluations);
  if (!best) {
    throw InfeasibleError(
        Stage::kPrefill, result.evaluations,
        fmt::format("no prefill strategy on gpu '{}' meets TTFT {} s within VRAM", gpu.name,
                    workload.ttft_slo));
  }
  result.best = result.evaluations[*best];
  return result;
}

DStageResult solve_d_stage(const GpuSpec& gpu, const ModelSpec& model,
                           const WorkloadSpec& workload, const SearchSpace& space,
                           double p_demand, const CostOptions& options) {
  if (!(p_demand > 0) || !std::isfinite(p_demand)) {
    throw Error(ErrorCode::kInvariant, "solve_d_stage: p_demand must be > 0");
  }
  DStageResult result;
  for (const auto& s : enumerate_strategies(space, model)) {
    result.evaluations.push_back(evaluate_d(gpu, model, workload, s, options));
  }
  const auto best = argmax(result.evaluations);
  if (!best) {
    throw InfeasibleError(
        Stage::kDecode, result.evaluations,
        fmt::format("no decode strategy on gpu '{}' meets TPOT {} s within VRAM", gpu.name,
                    workload.tpot_slo));
  }
  result.best = result.evaluations[*best];
  result.count = instances_needed(p_demand, result.best.throughput, result.best.strategy.dp);
  return result;
}

std::int64_t instances_needed(double demand, double rate, std::int64_t granularity) {
  if (!(rate > 0) || granularity < 1) {
    throw Error(ErrorCode::kInvariant, "instances_needed: rate and granularity must be positive");
  }
  auto n = static_cast<std::int64_t>(std::ceil(demand / rate));
  if (n < 1) n = 1;
  while (static_cast<double>(n) * rate < demand) ++n;
  return (n + granularity - 1) / granularity * granularity;
}

std::int64_t DeploymentPlan::total_gpus() const {
  return p_count * p_strategy.gpus_per_instance() + d_count * d_strategy.gpus_per_instance();
}

DeploymentPlan plan(const GpuSpec& p_gpu, const GpuSpec& d_gpu, const ModelSpec& model,
                    const WorkloadSpec& workload, const SearchSpace& space,
                    const PlanOptions& options) {
  const PStageResult p = solve_p_stage(p_gpu, model, workload, space, options.cost);

  DeploymentPlan out;
  out.model = model.name;
  out.workload = workload.name;
  out.p_gpu = p_gpu.name;
  out.d_gpu = d_gpu.name;
  out.p_strategy = p.best.strategy;
  out.p_count = instances_needed(workload.qps, p.best.throughput, p.best.strategy.dp);
  out.prefill_batch = p.best.batch;
  out.predicted_ttft = p.best.latency;
  out.predicted_p_throughput = p.best.throughput;
  out.objective_p = p.best.objective;
  out.p_demand = static_cast<double>(out.p_count) * p.best.throughput *
                 static_cast<double>(workload.output_len);
  out.p_evaluations = p.evaluations;

  const DStageResult d =
      solve_d_stage(d_gpu, model, workload, space, out.p_demand, options.cost);
  out.d_strategy = d.best.strategy;
  out.d_count = d.count;
  out.decode_batch = d.best.batch;
  out.predicted_tpot = d.best.latency;
  out.predicted_d_throughput = d.best.throughput;
  out.objective_d = d.best.objective;
  out.d_evaluations = d.evaluations;

  if (options.max_total_gpus > 0 && out.total_gpus() > options.max_total_gpus) {
    throw Error(ErrorCode::kQpsUnreachable,
                fmt::format("qps {} needs {} P + {} D instances ({} GPUs), budget is {}",
                            workload.qps, out.p_count, out.d_count, out.total_gpus(),
                            options.max_total_gpus));
  }
  return out;
}

void verify_plan(const DeploymentPlan& plan, const GpuSpec& p_gpu, const GpuSpec& d_gpu,
                 const ModelSpec& model, const WorkloadSpec& workload,
                 const CostOptions& options) {
  auto breach = [](const std::string& what) {
    throw Error(ErrorCode::kInvariantBreach, "plan check: " + what);
  };
  check_compatible(model, plan.p_strategy);
  check_compatible(model, plan.d_strategy);
  const StrategyEvaluation p = evaluate_p(p_gpu, model, workload, plan.p_strategy, options);
  const StrategyEvaluation d = evaluate_d(d_gpu, model, workload, plan.d_strategy, options);
  if (!p.feasible()) breach("prefill strategy violates " + p.tag());
  if (!d.feasible()) breach("decode strategy violates " + d.tag());
  if (p.latency != plan.predicted_ttft) breach("predicted_ttft differs from the cost model");
  if (d.latency != plan.predicted_tpot) breach("predicted_tpot differs from the cost model");
  if (!(plan.predicted_ttft <= workload.ttft_slo)) breach("predicted_ttft exceeds the TTFT SLO");
  if (!(plan.predicted_tpot <= workload.tpot_slo)) breach("predicted_tpot exceeds the TPOT SLO");
  if (!(static_cast<double>(plan.p_count) * p.throughput >= workload.qps)) {
    breach("P instances cannot absorb the offered qps");
  }
  const double demand =
      static_cast<double>(plan.p_count) * p.throughput * static_cast<double>(workload.output_len);
  if (!(static_cast<double>(plan.d_count) * d.throughput >= demand)) {
    breach("D instances cannot absorb the P-side token demand");
  }
  if (plan.p_count % plan.p_strategy.dp != 0 || plan.d_count % plan.d_strategy.dp != 0) {
    breach("instance counts are not multiples of dp");
  }
}

RoleAssignment assign_roles(const std::vector<GpuSpec>& gpus, const ModelSpec& model,
                            const WorkloadSpec& workload, const SearchSpace& space,
                            const CostOptions& options) {
  double best_p = -1;
  double best_d = -1;
  std::string p_name;
  std::string d_name;
  std::vector<StrategyEvaluation> p_report;
  std::vector<StrategyEvaluation> d_report;
  for (const auto& gpu : gpus) {
    for (const auto& s : enumerate_strategies(space, model)) {
      const StrategyEvaluation p = evaluate_p(gpu, model, workload, s, options);
      const StrategyEvaluation d = evaluate_d(gpu, model, workload, s, options);
      p_report.push_back(p);
      d_report.push_back(d);
      if (p.feasible() && p.objective > best_p) {
        best_p = p.objective;
        p_name = gpu.name;
      }
      const double d_per_gpu =
          d.throughput / static_cast<double>(s.gpus_per_instance());
      if (d.feasible() && d_per_gpu > best_d) {
        best_d = d_per_gpu;
        d_name = gpu.name;
      }
    }
  }
  if (p_name.empty()) {
    throw InfeasibleError(Stage::kPrefill, p_report, "no GPU can serve the prefill role");
  }
  if (d_name.empty()) {
    throw InfeasibleError(Stage::kDecode, d_report, "no GPU can serve the decode role");
  }
  return {p_name, d_name};
}

std::string format_evaluations(const std::vector<StrategyEvaluation>& rows) {
  std::string out = fmt::format("{:<8} {:<20} {:>4} {:>6} {:>12} {:>14} {:>14} {:>14} {:>14} {:<6}\n",
                                "stage", "strategy", "gpus", "batch", "latency_s", "vram_bytes",
                                "capacity", "throughput", "objective", "status");
  for (const auto& r : rows) {
    out += fmt::format("{:<8} {:<20} {:>4} {:>6} {:>12.6g} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g} {:<6}\n",
                       to_string(r.stage), to_string(r.strategy), total_gpus(r.strategy),
                       r.batch, r.latency, r.vram_bytes, r.vram_capacity, r.throughput,
                       r.objective, r.tag());
  }
  return out;
}

std::string explain(const DeploymentPlan& plan) {
  std::string out;
  out += fmt::format("model {}  workload {}\n", plan.model, plan.workload);
  out += fmt::format("P: {} x {} on {}  ttft {:.6g} s  {:.6g} req/s per instance\n",
                     plan.p_count, to_string(plan.p_strategy), plan.p_gpu, plan.predicted_ttft,
                     plan.predicted_p_throughput);
  out += fmt::format("D: {} x {} on {}  tpot {:.6g} s  {:.6g} tok/s per instance (batch {})\n",
                     plan.d_count, to_string(plan.d_strategy), plan.d_gpu, plan.predicted_tpot,
                     plan.predicted_d_throughput, plan.decode_batch);
  out += fmt::format("P-side demand {:.6g} tok/s, {} GPUs total\n\n", plan.p_demand,
                     plan.total_gpus());
  std::vector<StrategyEvaluation> rows = plan.p_evaluations;
  rows.insert(rows.end(), plan.d_evaluations.begin(), plan.d_evaluations.end());
  out += format_evaluations(rows);
  return out;
}

std::string explain(const InfeasibleError& error) {
  return fmt::format("infeasible: {}\n\n{}", error.what(), format_evaluations(error.report()));
}

json to_json(const ParallelStrategy& s) {
  return json{{"dp", s.dp}, {"tp", s.tp}, {"pp", s.pp}, {"ep", s.ep}};
}

ParallelStrategy strategy_from_json(const json& node, const std::string& path) {
  return {jf::integer_or(node, path, "dp", 1), jf::integer_or(node, path, "tp", 1),
          jf::integer_or(node, path, "pp", 1), jf::integer_or(node, path, "ep", 1)};
}

json to_json(const StrategyEvaluation& e) {
  return json{{"strategy", to_json(e.strategy)},
              {"stage", std::string(to_string(e.stage))},
              {"c1_violated", e.c1_violated},
              {"c2_violated", e.c2_violated},
              {"batch", e.batch},
              {"latency", e.latency},
              {"vram_bytes", e.vram_bytes},
              {"vram_capacity", e.vram_capacity},
              {"throughput", e.throughput},
              {"objective", e.objective},
              {"status", e.tag()}};
}

StrategyEvaluation evaluation_from_json(const json& node, const std::string& path) {
  StrategyEvaluation e;
  e.strategy = strategy_from_json(jf::require(node, path, "strategy"), path + ".strategy");
  const std::string stage = jf::string(node, path, "stage");
  if (stage != "prefill" && stage != "decode") {
    throw Error(ErrorCode::kSchema, path + ".stage: expected \"prefill\" or \"decode\"");
  }
  e.stage = stage == "prefill" ? Stage::kPrefill : Stage::kDecode;
  const json& c1 = jf::require(node, path, "c1_violated");
  const json& c2 = jf::require(node, path, "c2_violated");
  if (!c1.is_boolean() || !c2.is_boolean()) {
    throw Error(ErrorCode::kSchema, path + ": c1_violated / c2_violated must be booleans");
  }
  e.c1_violated = c1.get<bool>();
  e.c2_violated = c2.get<bool>();
  e.batch = jf::integer(node, path, "batch");
  e.latency = jf::number(node, path, "latency");
  e.vram_bytes = jf::number(node, path, "vram_bytes");
  e.vram_capacity = jf::number(node, path, "vram_capacity");
  e.throughput = jf::number(node, path, "throughput");
  e.objective = jf::number(node, path, "objective");
  return e;
}

json to_json(const DeploymentPlan& plan) {
  json p_rows = json::array();
  json d_rows = json::array();
  for (const auto& e : plan.p_evaluations) p_rows.push_back(to_json(e));
  for (const auto& e : plan.d_evaluations) d_rows.push_back(to_json(e));
  return json{{"model", plan.model},
              {"workload", plan.workload},
              {"p_gpu", plan.p_gpu},
              {"d_gpu", plan.d_gpu},
              {"p_strategy", to_json(plan.p_strategy)},
              {"d_strategy", to_json(plan.d_strategy)},
              {"p_count", plan.p_count},
              {"d_count", plan.d_count},
              {"prefill_batch", plan.prefill_batch},
              {"decode_batch", plan.decode_batch},
              {"predicted_ttft", plan.predicted_ttft},
              {"predicted_tpot", plan.predicted_tpot},
              {"predicted_p_throughput", plan.predicted_p_throughput},
              {"predicted_d_throughput", plan.predicted_d_throughput},
              {"objective_p", plan.objective_p},
              {"objective_d", plan.objective_d},
              {"p_demand", plan.p_demand},
              {"p_evaluations", p_rows},
              {"d_evaluations", d_rows}};
}

DeploymentPlan plan_from_json(const json& node, const std::string& path) {
  DeploymentPlan plan;
  plan.model = jf::string_or(node, path, "model", "");
  plan.workload = jf::string_or(node, path, "workload", "");
  plan.p_gpu = jf::string(node, path, "p_gpu");
  plan.d_gpu = jf::string(node, path, "d_gpu");
  plan.p_strategy = strategy_from_json(jf::require(node, path, "p_strategy"), path + ".p_strategy");
  plan.d_strategy = strategy_from_json(jf::require(node, path, "d_strategy"), path + ".d_strategy");
  plan.p_count = jf::integer(node, path, "p_count");
  plan.d_count = jf::integer(node, path, "d_count");
  plan.prefill_batch = jf::integer_or(node, path, "prefill_batch", 1);
  plan.decode_batch = jf::integer_or(node, path, "decode_batch", 0);
  plan.predicted_ttft = jf::number_or(node, path, "predicted_ttft", 0);
  plan.predicted_tpot = jf::number_or(node, path, "predicted_tpot", 0);
  plan.predicted_p_throughput = jf::number_or(node, path, "predicted_p_throughput", 0);
  plan.predicted_d_throughput = jf::number_or(node, path, "predicted_d_throughput", 0);
  plan.objective_p = jf::number_or(node, path, "objective_p", 0);
  plan.objective_d = jf::number_or(node, path, "objective_d", 0);
  plan.p_demand = jf::number_or(node, path, "p_demand", 0);
  for (const char* key : {"p_evaluations", "d_evaluations"}) {
    if (!node.contains(key)) continue;
    const json& rows = node.at(key);
    const std::string where = path + "." + key;
    if (!rows.is_array()) throw Error(ErrorCode::kSchema, where + ": expected an array");
    auto& target = std::string_view(key) == "p_evaluations" ? plan.p_evaluations
                                                            : plan.d_evaluations;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      target.push_back(evaluation_from_json(rows[i], where + "[" + std::to_string(i) + "]"));
    }
  }
  if (plan.p_count < 1 || plan.d_count < 1) {
    throw Error(ErrorCode::kInvariant, path + ": p_count and d_count must be >= 1");
  }
  return plan;
}

json to_json(const SearchSpace& space) {
  return json{{"tp", space.tp_choices},
              {"pp", space.pp_choices},
              {"dp", space.dp_choices},
              {"ep", space.ep_choices},
              {"max_gpus_per_instance", space.max_gpus_per_instance}};
}

SearchSpace search_space_from_json(const json& node, const std::string& path) {
  SearchSpace space;
  if (node.contains("tp")) space.tp_choices = jf::integer_list(node, path, "tp");
  if (node.contains("pp")) space.pp_choices = jf::integer_list(node, path, "pp");
  if (node.contains("dp")) space.dp_choices = jf::integer_list(node, path, "dp");
  if (node.contains("ep")) space.ep_choices = jf::integer_list(node, path, "ep");
  space.max_gpus_per_instance =
      jf::integer_or(node, path, "max_gpus_per_instance", space.max_gpus_per_instance);
  validate(space);
  return space;
}

}  // namespace hetpd
