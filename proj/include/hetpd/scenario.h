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

// Scenario files: one JSON document describing a reproducible experiment.
//
//   {
//     "catalog": "catalog.json" | { inline catalog },
//     "model": "llama2-7b",
//     "workload": "chat" | { inline workload },
//     "seed": 1, "duration": 60,
//     "link": { "bandwidth": 25e9, "discount": 0.8, ... },
//     "sim": { "dispatch_overhead": 0, "max_sim_time": 1e7 },
//     "cost_model": { "alignment_bytes": 256, ... },
//     "search_space": { "tp": [1, 2], "pp": [1], ... },
//     "max_total_gpus": 0,
//     "deployments": [
//       { "label": "1P1D", "p_gpu": "gpu-b", "d_gpu": "gpu-a",
//         "p_strategy": {"tp": 1}, "d_strategy": {"tp": 1},
//         "p_count": 1, "d_count": 1 },
//       { "label": "planned", "plan": "auto" },
//       { "label": "coloc", "mode": "colocated", "gpu": "gpu-b",
//         "strategy": {"tp": 1}, "count": 2 },
//       { "label": "coloc-mixed", "mode": "colocated", "gpus": ["gpu-b", "gpu-a"] }
//     ],
//     "cases": [ { "label": "long", "workload": {...} } ],
//     "sweep": [ { "axis": "input_len", "values": [128, 256] } ]
//   }
//
// A relative catalog path resolves against the scenario file's directory.
// "cost_model" and "search_space" may also sit in the catalog document; the
// scenario's copies win. A "plan": "auto" deployment runs the planner on the
// workload in force; when it names no GPUs, roles are assigned from the whole
// catalog.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetpd/catalog.h"
#include "hetpd/cluster_sim.h"
#include "hetpd/cost_model.h"
#include "hetpd/planner.h"

namespace hetpd {

struct Deployment {
  std::string label;
  bool colocated = false;
  bool use_planner = false;
  std::string p_gpu;  // colocated: the engine GPU
  std::string d_gpu;
  ParallelStrategy p_strategy;  // colocated: the engine strategy
  ParallelStrategy d_strategy;
  std::int64_t p_count = 1;  // colocated: number of engines
  std::int64_t d_count = 1;
  std::vector<std::string> colocated_gpus;  // colocated pool listed per engine
};

// Axes: input_len, output_len, qps, ttft_slo, tpot_slo (workload) and
// p_count, d_count (deployment; for colocated deployments p_count is the
// engine count and does not apply to a "gpus" list).
struct SweepAxis {
  std::string axis;
  std::vector<double> values;
};

struct Scenario {
  Catalog catalog;
  ModelSpec model;
  WorkloadSpec workload;
  std::uint64_t seed = 1;
  double duration = 60;
  TransferLink link;
  SimOptions sim;
  SearchSpace space;
  PlanOptions plan_options;
  std::vector<Deployment> deployments;
  std::vector<std::pair<std::string, WorkloadSpec>> cases;
  std::vector<SweepAxis> sweep;
};

CostOptions cost_options_from_json(const nlohmann::json& node, const std::string& path,
                                   CostOptions base = {});
nlohmann::json to_json(const CostOptions& options);

Scenario load_scenario(const nlohmann::json& document, const std::filesystem::path& base_dir);
Scenario load_scenario_file(const std::filesystem::path& path);

// Every problem found, one message each; empty when the scenario is sound.
std::vector<std::string> check_scenario(const Scenario& scenario);

// A deployment resolved to concrete instances for one workload.
struct ResolvedDeployment {
  Cluster cluster;
  std::optional<DeploymentPlan> plan;  // set when the planner chose it
};

ResolvedDeployment resolve(const Scenario& scenario, const Deployment& deployment,
                           const WorkloadSpec& workload);

SimResult simulate(const Scenario& scenario, const Deployment& deployment,
                   const WorkloadSpec& workload, bool record_trace = false);

struct SweepPoint {
  std::vector<std::pair<std::string, double>> values;  // declared axis order
};

// Cartesian product, first axis outermost.
std::vector<SweepPoint> sweep_points(const std::vector<SweepAxis>& axes);
void apply_point(const SweepPoint& point, WorkloadSpec& workload, Deployment& deployment);

struct SweepRow {
  SweepPoint point;
  std::string label;
  SimMetrics metrics;
};

// One row per (point, deployment); points may run concurrently, rows come
// back in declared order.
std::vector<SweepRow> run_sweep(const Scenario& scenario, unsigned max_threads = 0);

struct CompareCase {
  std::string label;
  std::vector<ComparisonRow> rows;  // deltas against the first deployment
};

// One case per scenario "cases" entry, or the scenario workload alone.
std::vector<CompareCase> run_compare(const Scenario& scenario);

}  // namespace hetpd
