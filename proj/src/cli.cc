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

#include "hetpd/cli.h"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "hetpd/catalog.h"
#include "hetpd/cluster_sim.h"
#include "hetpd/cost_model.h"
#include "hetpd/planner.h"
#include "hetpd/report.h"
#include "hetpd/scenario.h"

namespace hetpd {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInfeasible:
    case ErrorCode::kQpsUnreachable:
    case ErrorCode::kNoFeasibleBatch:
    case ErrorCode::kWeightsDoNotFit:
    case ErrorCode::kNoCompatibleStrategy:
      return kExitInfeasible;
    case ErrorCode::kInvariantBreach:
      return kExitInvariantBreach;
    default:
      return kExitInputError;
  }
}

namespace {

struct Common {
  std::string output_dir;
  std::string format = "table";
  std::optional<std::int64_t> seed;
};

struct PlanArgs {
  std::string scenario;
  std::string catalog;
  std::string model;
  std::string workload;
  std::string p_gpu;
  std::string d_gpu;
  std::int64_t max_total_gpus = -1;
  bool operators = false;
  std::string stage = "prefill";
  std::string gpu;
  std::int64_t tp = 1, pp = 1, ep = 1, batch = 1, tokens = 0;
};

fs::path output_dir(const Common& common) {
  if (!common.output_dir.empty()) return common.output_dir;
  if (const char* env = std::getenv("HETPD_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "hetpd-out";
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

Format format_of(const Common& common) {
  auto f = parse_format(common.format);
  if (!f) throw Error(ErrorCode::kSchema, "--format: expected table, csv or jsonl");
  return *f;
}

Scenario load(const std::string& path, const Common& common) {
  Scenario s = load_scenario_file(path);
  if (common.seed) s.seed = static_cast<std::uint64_t>(*common.seed);
  return s;
}

// Everything plan/explain needs, from a scenario or from catalog flags.
struct PlanInputs {
  Catalog catalog;
  ModelSpec model;
  WorkloadSpec workload;
  SearchSpace space;
  PlanOptions options;
  std::string p_gpu;
  std::string d_gpu;
};

PlanInputs plan_inputs(const PlanArgs& a, const Common& common) {
  PlanInputs in;
  if (!a.scenario.empty()) {
    const Scenario s = load(a.scenario, common);
    in.catalog = s.catalog;
    in.model = s.model;
    in.workload = s.workload;
    in.space = s.space;
    in.options = s.plan_options;
    for (const auto& d : s.deployments) {
      if (!d.colocated && !d.p_gpu.empty()) {
        in.p_gpu = d.p_gpu;
        in.d_gpu = d.d_gpu;
        break;
      }
    }
  } else {
    if (a.catalog.empty() || a.model.empty() || a.workload.empty()) {
      throw Error(ErrorCode::kSchema, "give --scenario, or --catalog with --model and --workload");
    }
    std::ifstream file(a.catalog);
    if (!file) throw Error(ErrorCode::kIo, "cannot open " + a.catalog);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(file);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kSchema, a.catalog + ": " + e.what());
    }
    in.catalog = load_catalog(doc);
    if (doc.contains("cost_model")) {
      in.options.cost = cost_options_from_json(doc.at("cost_model"), "cost_model");
    }
    if (doc.contains("search_space")) {
      in.space = search_space_from_json(doc.at("search_space"), "search_space");
    }
    in.model = in.catalog.model(a.model);
    in.workload = in.catalog.workload(a.workload);
  }
  if (!a.p_gpu.empty()) in.p_gpu = a.p_gpu;
  if (!a.d_gpu.empty()) in.d_gpu = a.d_gpu;
  if (in.p_gpu.empty() != in.d_gpu.empty()) {
    throw Error(ErrorCode::kSchema, "give both --p-gpu and --d-gpu, or neither");
  }
  if (a.max_total_gpus >= 0) in.options.max_total_gpus = a.max_total_gpus;
  return in;
}

// Returns the exit code; `files` controls whether artifacts are written.
int do_plan(const PlanArgs& a, const Common& common, bool files, std::ostream& out,
            std::ostream& err) {
  PlanInputs in = plan_inputs(a, common);
  const fs::path dir = output_dir(common);
  try {
    if (in.p_gpu.empty()) {
      const RoleAssignment roles =
          assign_roles(in.catalog.gpus, in.model, in.workload, in.space, in.options.cost);
      in.p_gpu = roles.p_gpu;
      in.d_gpu = roles.d_gpu;
    }
    const GpuSpec& p_gpu = in.catalog.gpu(in.p_gpu);
    const GpuSpec& d_gpu = in.catalog.gpu(in.d_gpu);
    const DeploymentPlan p = plan(p_gpu, d_gpu, in.model, in.workload, in.space, in.options);
    verify_plan(p, p_gpu, d_gpu, in.model, in.workload, in.options.cost);
    const std::string report = explain(p);
    out << report;
    if (files) {
      write_file(dir / "plan.json", to_json(p).dump(2) + "\n");
      write_file(dir / "explain.txt", report);
    }
    return kExitOk;
  } catch (const InfeasibleError& e) {
    const std::string report = explain(e);
    out << report;
    if (files) write_file(dir / "explain.txt", report);
    err << "error: " << e.what() << "\n";
    return kExitInfeasible;
  }
}

int do_operators(const PlanArgs& a, const Common& common, std::ostream& out) {
  PlanInputs in = plan_inputs(a, common);
  const ParallelStrategy s{1, a.tp, a.pp, a.ep};
  check_compatible(in.model, s);
  const std::string gpu_name = !a.gpu.empty() ? a.gpu : (!in.p_gpu.empty() ? in.p_gpu : "");
  if (gpu_name.empty()) throw Error(ErrorCode::kSchema, "--operators needs --gpu");
  const GpuSpec& gpu = in.catalog.gpu(gpu_name);
  if (a.batch < 1) throw Error(ErrorCode::kInvariant, "--batch must be >= 1");
  if (a.stage == "prefill") {
    const std::int64_t seq = a.tokens > 0 ? a.tokens : in.workload.input_len;
    out << format_operator_table(operator_table(in.model, s, Stage::kPrefill, a.batch, seq, 0));
    const StageCost c = prefill_cost(gpu, in.model, s, a.batch, seq);
    out << fmt::format("\nprefill on {}: {:.6g} FLOP, {:.6g} B comm per GPU, latency {:.6g} s\n",
                       gpu.name, c.compute_flops, c.comm_bytes, c.latency);
  } else if (a.stage == "decode") {
    const std::int64_t ctx = a.tokens > 0 ? a.tokens : planning_decode_context(in.workload);
    out << format_operator_table(
        operator_table(in.model, s, Stage::kDecode, a.batch, 1, a.batch * ctx));
    const StageCost c = decode_cost(gpu, in.model, s, a.batch, ctx);
    out << fmt::format("\ndecode on {}: {:.6g} B VRAM, {:.6g} B comm per GPU, latency {:.6g} s\n",
                       gpu.name, c.vram_access_bytes, c.comm_bytes, c.latency);
  } else {
    throw Error(ErrorCode::kSchema, "--stage: expected prefill or decode");
  }
  return kExitOk;
}

std::string label_file(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

int do_simulate(const std::string& scenario, const std::string& only, bool trace,
                const Common& common, std::ostream& out) {
  const Scenario s = load(scenario, common);
  const Format format = format_of(common);
  const fs::path dir = output_dir(common);
  std::vector<Row> rows;
  bool found = false;
  for (const auto& d : s.deployments) {
    if (!only.empty() && d.label != only) continue;
    found = true;
    const SimResult r = simulate(s, d, s.workload, trace);
    rows.push_back(metrics_row(d.label, r.metrics));
    if (trace) {
      std::string lines;
      for (const auto& rec : r.trace) lines += to_json(rec).dump() + "\n";
      write_file(dir / ("trace_" + label_file(d.label) + ".jsonl"), lines);
    }
  }
  if (!found) {
    throw Error(ErrorCode::kSchema,
                only.empty() ? "scenario has no deployments" : "no deployment labelled " + only);
  }
  const std::string text = render(rows, format);
  write_file(dir / (std::string("metrics") + std::string(file_extension(format))), text);
  out << text;
  return kExitOk;
}

int do_sweep(const std::string& scenario, unsigned threads, const Common& common,
             std::ostream& out) {
  const Scenario s = load(scenario, common);
  const Format format = format_of(common);
  std::vector<Row> rows;
  for (const auto& row : run_sweep(s, threads)) {
    rows.push_back(metrics_row(row.label, row.metrics, row.point));
  }
  const std::string text = render(rows, format);
  write_file(output_dir(common) / (std::string("sweep") + std::string(file_extension(format))),
             text);
  out << text;
  return kExitOk;
}

int do_compare(const std::string& scenario, const Common& common, std::ostream& out) {
  const Scenario s = load(scenario, common);
  const Format format = format_of(common);
  std::vector<Row> rows;
  for (const auto& c : run_compare(s)) {
    for (const auto& r : c.rows) rows.push_back(comparison_row(c.label, r));
  }
  const std::string text = render(rows, format);
  write_file(output_dir(common) / (std::string("compare") + std::string(file_extension(format))),
             text);
  out << text;
  return kExitOk;
}

int do_validate(const std::string& catalog, const std::string& scenario, const Common& common,
                std::ostream& out, std::ostream& err) {
  if (catalog.empty() && scenario.empty()) {
    throw Error(ErrorCode::kSchema, "give --catalog and/or --scenario");
  }
  std::vector<std::string> problems;
  auto attempt = [&](const std::string& what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(what + ": " + e.what());
    }
  };
  if (!catalog.empty()) attempt(catalog, [&] { load_catalog_file(catalog); });
  if (!scenario.empty()) {
    attempt(scenario, [&] {
      const Scenario s = load(scenario, common);
      for (const auto& p : check_scenario(s)) problems.push_back(scenario + ": " + p);
    });
  }
  if (problems.empty()) {
    out << "ok\n";
    return kExitOk;
  }
  for (const auto& p : problems) err << p << "\n";
  return kExitInputError;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capacity planner and simulator for disaggregated LLM serving", "hetpd"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--output-dir", common.output_dir,
                 "Directory for artifacts (default: $HETPD_OUTPUT_DIR, else ./hetpd-out)");
  app.add_option("--format", common.format, "table, csv or jsonl")
      ->check(CLI::IsMember({"table", "csv", "jsonl", "json-lines"}));
  app.add_option("--seed", common.seed, "Override the scenario seed");

  PlanArgs plan_args;
  auto add_plan_inputs = [&](CLI::App* sub) {
    sub->add_option("--scenario", plan_args.scenario, "Scenario file")->check(CLI::ExistingFile);
    sub->add_option("--catalog", plan_args.catalog, "Catalog file")->check(CLI::ExistingFile);
    sub->add_option("--model", plan_args.model, "Model name in the catalog");
    sub->add_option("--workload", plan_args.workload, "Workload name in the catalog");
    sub->add_option("--p-gpu", plan_args.p_gpu, "GPU for prefill (default: chosen by the planner)");
    sub->add_option("--d-gpu", plan_args.d_gpu, "GPU for decode");
    sub->add_option("--max-total-gpus", plan_args.max_total_gpus, "GPU budget, 0 = unlimited");
  };

  auto* plan_cmd = app.add_subcommand("plan", "Solve the two-stage deployment plan");
  add_plan_inputs(plan_cmd);

  auto* explain_cmd = app.add_subcommand("explain", "Print the per-strategy evaluation table");
  add_plan_inputs(explain_cmd);
  explain_cmd->add_flag("--operators", plan_args.operators, "Print the operator table instead");
  explain_cmd->add_option("--stage", plan_args.stage, "prefill or decode (with --operators)");
  explain_cmd->add_option("--gpu", plan_args.gpu, "GPU (with --operators)");
  explain_cmd->add_option("--tp", plan_args.tp, "Tensor-parallel degree (with --operators)");
  explain_cmd->add_option("--pp", plan_args.pp, "Pipeline degree (with --operators)");
  explain_cmd->add_option("--ep", plan_args.ep, "Expert-parallel degree (with --operators)");
  explain_cmd->add_option("--batch", plan_args.batch, "Batch size (with --operators)");
  explain_cmd->add_option("--tokens", plan_args.tokens,
                          "Prompt length (prefill) or context length (decode)");

  std::string scenario;
  std::string deployment;
  bool no_trace = false;
  unsigned threads = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate every deployment of a scenario");
  sim_cmd->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--deployment", deployment, "Only this deployment label");
  sim_cmd->add_flag("--no-trace", no_trace, "Skip the per-request trace");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the scenario's sweep axes");
  sweep_cmd->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--threads", threads, "Concurrent points (default: hardware threads)");

  auto* compare_cmd = app.add_subcommand("compare", "Compare deployments with relative deltas");
  compare_cmd->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);

  std::string catalog;
  auto* validate_cmd = app.add_subcommand("validate", "Check a catalog and/or scenario");
  validate_cmd->add_option("--catalog", catalog, "Catalog file");
  validate_cmd->add_option("--scenario", scenario, "Scenario file");

  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  std::string program = "hetpd";
  argv.push_back(program.data());
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (plan_cmd->parsed()) return do_plan(plan_args, common, true, out, err);
    if (explain_cmd->parsed()) {
      if (plan_args.operators) return do_operators(plan_args, common, out);
      return do_plan(plan_args, common, false, out, err);
    }
    if (sim_cmd->parsed()) return do_simulate(scenario, deployment, !no_trace, common, out);
    if (sweep_cmd->parsed()) return do_sweep(scenario, threads, common, out);
    if (compare_cmd->parsed()) return do_compare(scenario, common, out);
    if (validate_cmd->parsed()) return do_validate(catalog, scenario, common, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariantBreach;
  }
  return kExitInputError;
}

}  // namespace hetpd
