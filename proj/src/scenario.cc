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

#include "hetpd/scenario.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "hetpd/error.h"

namespace hetpd {

using nlohmann::json;
namespace jf = json_field;

namespace {

const char* const kAxes[] = {"input_len", "output_len", "qps", "ttft_slo",
                             "tpot_slo",  "p_count",    "d_count"};

bool known_axis(const std::string& axis) {
  return std::find(std::begin(kAxes), std::end(kAxes), axis) != std::end(kAxes);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
}

std::int64_t as_count(double v, const std::string& axis) {
  if (!(v >= 1) || std::floor(v) != v) {
    throw Error(ErrorCode::kSchema, fmt::format("sweep axis {}: {} is not a positive integer",
                                                axis, v));
  }
  return static_cast<std::int64_t>(v);
}

Deployment deployment_from_json(const json& node, const std::string& path) {
  Deployment d;
  d.label = jf::string(node, path, "label");
  const std::string mode = jf::string_or(node, path, "mode", "disaggregated");
  if (mode == "colocated") {
    d.colocated = true;
    if (node.contains("gpus")) {
      const nlohmann::json& list = node.at("gpus");
      if (!list.is_array() || list.empty()) {
        throw Error(ErrorCode::kSchema, path + ".gpus: expected a non-empty array of names");
      }
      for (const auto& g : list) {
        if (!g.is_string()) throw Error(ErrorCode::kSchema, path + ".gpus: expected names");
        d.colocated_gpus.push_back(g.get<std::string>());
      }
      d.p_gpu = d.colocated_gpus.front();
      d.p_count = static_cast<std::int64_t>(d.colocated_gpus.size());
    } else {
      d.p_gpu = jf::string(node, path, "gpu");
    }
    if (node.contains("strategy")) {
      d.p_strategy = strategy_from_json(node.at("strategy"), path + ".strategy");
    }
    if (d.colocated_gpus.empty()) d.p_count = jf::integer_or(node, path, "count", 1);
    return d;
  }
  if (mode != "disaggregated") {
    throw Error(ErrorCode::kSchema,
                path + ".mode: expected \"disaggregated\" or \"colocated\"");
  }
  if (node.contains("plan")) {
    if (jf::string(node, path, "plan") != "auto") {
      throw Error(ErrorCode::kSchema, path + ".plan: only \"auto\" is supported");
    }
    d.use_planner = true;
    d.p_gpu = jf::string_or(node, path, "p_gpu", "");
    d.d_gpu = jf::string_or(node, path, "d_gpu", "");
    if (d.p_gpu.empty() != d.d_gpu.empty()) {
      throw Error(ErrorCode::kSchema, path + ": give both p_gpu and d_gpu, or neither");
    }
    return d;
  }
  d.p_gpu = jf::string(node, path, "p_gpu");
  d.d_gpu = jf::string(node, path, "d_gpu");
  if (node.contains("p_strategy")) {
    d.p_strategy = strategy_from_json(node.at("p_strategy"), path + ".p_strategy");
  }
  if (node.contains("d_strategy")) {
    d.d_strategy = strategy_from_json(node.at("d_strategy"), path + ".d_strategy");
  }
  d.p_count = jf::integer_or(node, path, "p_count", 1);
  d.d_count = jf::integer_or(node, path, "d_count", 1);
  return d;
}

WorkloadSpec workload_ref(const json& node, const std::string& path, const Catalog& catalog) {
  if (node.is_string()) return catalog.workload(node.get<std::string>());
  WorkloadSpec w = workload_from_json(node, path);
  validate(w);
  return w;
}

}  // namespace

CostOptions cost_options_from_json(const json& node, const std::string& path, CostOptions base) {
  base.alignment_bytes = jf::integer_or(node, path, "alignment_bytes", base.alignment_bytes);
  base.activation_live_tensors =
      jf::number_or(node, path, "activation_live_tensors", base.activation_live_tensors);
  base.prefill_batch = jf::integer_or(node, path, "prefill_batch", base.prefill_batch);
  if (base.alignment_bytes < 1 || !(base.activation_live_tensors >= 0) ||
      base.prefill_batch < 1) {
    throw Error(ErrorCode::kInvariant,
                path + ": alignment_bytes and prefill_batch must be >= 1, "
                       "activation_live_tensors >= 0");
  }
  return base;
}

json to_json(const CostOptions& options) {
  return json{{"alignment_bytes", options.alignment_bytes},
              {"activation_live_tensors", options.activation_live_tensors},
              {"prefill_batch", options.prefill_batch}};
}

Scenario load_scenario(const json& document, const std::filesystem::path& base_dir) {
  if (!document.is_object()) throw Error(ErrorCode::kSchema, "<root>: expected an object");
  Scenario s;

  const json& catalog_node = jf::require(document, "", "catalog");
  json catalog_doc;
  if (catalog_node.is_string()) {
    std::filesystem::path p = catalog_node.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    catalog_doc = read_json_file(p);
  } else {
    catalog_doc = catalog_node;
  }
  s.catalog = load_catalog(catalog_doc);

  CostOptions cost;
  if (catalog_doc.contains("cost_model")) {
    cost = cost_options_from_json(catalog_doc.at("cost_model"), "catalog.cost_model", cost);
  }
  if (document.contains("cost_model")) {
    cost = cost_options_from_json(document.at("cost_model"), "cost_model", cost);
  }
  if (catalog_doc.contains("search_space")) {
    s.space = search_space_from_json(catalog_doc.at("search_space"), "catalog.search_space");
  }
  if (document.contains("search_space")) {
    s.space = search_space_from_json(document.at("search_space"), "search_space");
  }

  s.model = s.catalog.model(jf::string(document, "", "model"));
  s.workload = workload_ref(jf::require(document, "", "workload"), "workload", s.catalog);
  const std::int64_t seed = jf::integer_or(document, "", "seed", 1);
  if (seed < 0) throw Error(ErrorCode::kInvariant, "seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  s.duration = jf::number_or(document, "", "duration", s.duration);
  if (!(s.duration > 0)) throw Error(ErrorCode::kInvariant, "duration must be > 0");
  if (document.contains("link")) s.link = link_from_json(document.at("link"), "link");

  s.sim.cost = cost;
  if (document.contains("sim")) {
    const json& sim = document.at("sim");
    s.sim.dispatch_overhead = jf::number_or(sim, "sim", "dispatch_overhead", 0.0);
    s.sim.max_sim_time = jf::number_or(sim, "sim", "max_sim_time", s.sim.max_sim_time);
    if (!(s.sim.dispatch_overhead >= 0) || !(s.sim.max_sim_time > 0)) {
      throw Error(ErrorCode::kInvariant,
                  "sim: dispatch_overhead must be >= 0 and max_sim_time > 0");
    }
  }
  s.plan_options.cost = cost;
  s.plan_options.max_total_gpus = jf::integer_or(document, "", "max_total_gpus", 0);

  if (document.contains("deployments")) {
    const json& list = document.at("deployments");
    if (!list.is_array()) throw Error(ErrorCode::kSchema, "deployments: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      s.deployments.push_back(
          deployment_from_json(list[i], "deployments[" + std::to_string(i) + "]"));
    }
  }
  if (document.contains("cases")) {
    const json& list = document.at("cases");
    if (!list.is_array()) throw Error(ErrorCode::kSchema, "cases: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "cases[" + std::to_string(i) + "]";
      s.cases.emplace_back(
          jf::string(list[i], path, "label"),
          workload_ref(jf::require(list[i], path, "workload"), path + ".workload", s.catalog));
    }
  }
  if (document.contains("sweep")) {
    const json& list = document.at("sweep");
    if (!list.is_array()) throw Error(ErrorCode::kSchema, "sweep: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "sweep[" + std::to_string(i) + "]";
      SweepAxis axis;
      axis.axis = jf::string(list[i], path, "axis");
      if (!known_axis(axis.axis)) {
        throw Error(ErrorCode::kSchema, path + ".axis: unknown axis '" + axis.axis + "'");
      }
      const json& values = jf::require(list[i], path, "values");
      if (!values.is_array() || values.empty()) {
        throw Error(ErrorCode::kSchema, path + ".values: expected a non-empty array");
      }
      for (const auto& v : values) {
        if (!v.is_number()) throw Error(ErrorCode::kSchema, path + ".values: expected numbers");
        axis.values.push_back(v.get<double>());
      }
      s.sweep.push_back(std::move(axis));
    }
  }
  return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  return load_scenario(read_json_file(path), path.parent_path());
}

std::vector<std::string> check_scenario(const Scenario& s) {
  std::vector<std::string> problems;
  auto guard = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.push_back(where + ": " + e.what());
    }
  };
  for (const auto& g : s.catalog.gpus) guard("gpu " + g.name, [&] { validate(g); });
  for (const auto& m : s.catalog.models) guard("model " + m.name, [&] { validate(m); });
  for (const auto& w : s.catalog.workloads) guard("workload " + w.name, [&] { validate(w); });
  guard("workload", [&] { validate(s.workload); });
  guard("link", [&] { validate(s.link); });
  guard("search_space", [&] { enumerate_strategies(s.space, s.model); });
  std::vector<std::string> labels;
  for (const auto& d : s.deployments) {
    const std::string where = "deployment " + d.label;
    if (std::find(labels.begin(), labels.end(), d.label) != labels.end()) {
      problems.push_back(where + ": duplicate label");
    }
    labels.push_back(d.label);
    if (d.use_planner) {
      if (!d.p_gpu.empty()) {
        guard(where, [&] { s.catalog.gpu(d.p_gpu); });
        guard(where, [&] { s.catalog.gpu(d.d_gpu); });
      }
      continue;
    }
    guard(where, [&] { s.catalog.gpu(d.p_gpu); });
    for (const auto& name : d.colocated_gpus) guard(where, [&] { s.catalog.gpu(name); });
    guard(where, [&] { check_compatible(s.model, d.p_strategy); });
    if (d.p_count < 1) problems.push_back(where + ": instance count must be >= 1");
    if (!d.colocated) {
      guard(where, [&] { s.catalog.gpu(d.d_gpu); });
      guard(where, [&] { check_compatible(s.model, d.d_strategy); });
      if (d.d_count < 1) problems.push_back(where + ": d_count must be >= 1");
    }
  }
  for (const auto& [label, w] : s.cases) guard("case " + label, [&] { validate(w); });
  for (const auto& axis : s.sweep) {
    if (!known_axis(axis.axis)) problems.push_back("sweep: unknown axis " + axis.axis);
  }
  return problems;
}

ResolvedDeployment resolve(const Scenario& s, const Deployment& d, const WorkloadSpec& workload) {
  ResolvedDeployment out;
  if (d.colocated) {
    if (!d.colocated_gpus.empty()) {
      std::vector<GpuSpec> pool;
      for (const auto& name : d.colocated_gpus) pool.push_back(s.catalog.gpu(name));
      out.cluster = build_colocated(pool, s.model, d.p_strategy);
    } else {
      out.cluster = build_colocated(s.catalog.gpu(d.p_gpu), s.model, d.p_strategy, d.p_count);
    }
    return out;
  }
  if (d.use_planner) {
    std::string p_name = d.p_gpu;
    std::string d_name = d.d_gpu;
    if (p_name.empty()) {
      const RoleAssignment roles =
          assign_roles(s.catalog.gpus, s.model, workload, s.space, s.plan_options.cost);
      p_name = roles.p_gpu;
      d_name = roles.d_gpu;
    }
    const GpuSpec& p_gpu = s.catalog.gpu(p_name);
    const GpuSpec& d_gpu = s.catalog.gpu(d_name);
    out.plan = plan(p_gpu, d_gpu, s.model, workload, s.space, s.plan_options);
    out.cluster = build_cluster(*out.plan, p_gpu, d_gpu, s.model, s.link);
    return out;
  }
  DeploymentPlan fixed;
  fixed.p_gpu = d.p_gpu;
  fixed.d_gpu = d.d_gpu;
  fixed.p_strategy = d.p_strategy;
  fixed.d_strategy = d.d_strategy;
  fixed.p_count = d.p_count;
  fixed.d_count = d.d_count;
  out.cluster =
      build_cluster(fixed, s.catalog.gpu(d.p_gpu), s.catalog.gpu(d.d_gpu), s.model, s.link);
  return out;
}

SimResult simulate(const Scenario& s, const Deployment& d, const WorkloadSpec& workload,
                   bool record_trace) {
  const ResolvedDeployment resolved = resolve(s, d, workload);
  SimOptions options = s.sim;
  options.record_trace = record_trace;
  auto arrivals = generate_arrivals(workload, s.duration, s.seed);
  if (resolved.cluster.colocated()) {
    return run_colocated(resolved.cluster, std::move(arrivals), workload, options);
  }
  return run(resolved.cluster, std::move(arrivals), workload, options);
}

std::vector<SweepPoint> sweep_points(const std::vector<SweepAxis>& axes) {
  std::vector<SweepPoint> points(1);
  for (const auto& axis : axes) {
    std::vector<SweepPoint> next;
    for (const auto& p : points) {
      for (double v : axis.values) {
        SweepPoint q = p;
        q.values.emplace_back(axis.axis, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

void apply_point(const SweepPoint& point, WorkloadSpec& workload, Deployment& deployment) {
  for (const auto& [axis, v] : point.values) {
    if (axis == "input_len") {
      workload.input_len = as_count(v, axis);
    } else if (axis == "output_len") {
      workload.output_len = as_count(v, axis);
    } else if (axis == "qps") {
      workload.qps = v;
    } else if (axis == "ttft_slo") {
      workload.ttft_slo = v;
    } else if (axis == "tpot_slo") {
      workload.tpot_slo = v;
    } else if (axis == "p_count") {
      deployment.p_count = as_count(v, axis);
    } else if (axis == "d_count") {
      deployment.d_count = as_count(v, axis);
    } else {
      throw Error(ErrorCode::kSchema, "unknown sweep axis '" + axis + "'");
    }
  }
  validate(workload);
}

std::vector<SweepRow> run_sweep(const Scenario& s, unsigned max_threads) {
  if (s.deployments.empty()) throw Error(ErrorCode::kSchema, "sweep needs at least one deployment");
  const std::vector<SweepPoint> points = sweep_points(s.sweep);
  std::vector<SweepRow> rows;
  for (const auto& p : points) {
    for (const auto& d : s.deployments) rows.push_back({p, d.label, {}});
  }
  auto evaluate = [&](std::size_t k) {
    SweepRow& row = rows[k];
    const Deployment& base = s.deployments[k % s.deployments.size()];
    WorkloadSpec w = s.workload;
    Deployment d = base;
    apply_point(row.point, w, d);
    row.metrics = simulate(s, d, w).metrics;
  };
  if (max_threads == 0) max_threads = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < rows.size(); begin += max_threads) {
    const std::size_t end = std::min(rows.size(), begin + max_threads);
    std::vector<std::future<void>> jobs;
    for (std::size_t k = begin; k < end; ++k) {
      jobs.push_back(std::async(std::launch::async, evaluate, k));
    }
    for (auto& job : jobs) job.get();
  }
  return rows;
}

std::vector<CompareCase> run_compare(const Scenario& s) {
  if (s.deployments.empty()) {
    throw Error(ErrorCode::kSchema, "compare needs at least one deployment");
  }
  std::vector<std::pair<std::string, WorkloadSpec>> cases = s.cases;
  if (cases.empty()) cases.emplace_back(s.workload.name, s.workload);
  std::vector<CompareCase> out;
  for (const auto& [label, workload] : cases) {
    std::vector<std::pair<std::string, SimMetrics>> runs;
    for (const auto& d : s.deployments) {
      runs.emplace_back(d.label, simulate(s, d, workload).metrics);
    }
    out.push_back({label, compare(runs)});
  }
  return out;
}

}  // namespace hetpd
