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

// Acceptance suite. Prints one "AC<n> PASS|FAIL <detail>" line per criterion
// and exits nonzero when any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.h"
#include "hetpd/catalog.h"
#include "hetpd/cluster_sim.h"
#include "hetpd/cost_model.h"
#include "hetpd/kv_align.h"
#include "hetpd/planner.h"
#include "hetpd/report.h"
#include "hetpd/scenario.h"
#include "oracles.h"

namespace hetpd {
namespace {

using testing::error_code;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> notes;  // printed under the verdict line

  // Records a failure message; keeps the first few only.
  void fail(const std::string& what) {
    if (pass) detail = what;
    pass = false;
    if (notes.size() < 8) notes.push_back(what);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

// ---------------------------------------------------------------------------

Outcome ac1_optimizer_matches_brute_force() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20261016);
  int catalogs = 0;
  int feasible_p = 0;
  int feasible_d = 0;
  std::size_t largest_space = 0;
  for (int i = 0; i < 64; ++i) {
    const testing::RandomCase c = testing::random_case(rng);
    const auto all = oracle::strategies(c.space, c.model);
    largest_space = std::max(largest_space, all.size());
    if (all.size() > 1024) o.fail("case " + std::to_string(i) + " has more than 1024 strategies");
    ++catalogs;
    if (all.empty()) {
      if (error_code([&] { solve_p_stage(c.p_gpu, c.model, c.workload, c.space, c.cost); }) !=
          ErrorCode::kNoCompatibleStrategy)
        o.fail("case " + std::to_string(i) + ": empty space not reported");
      continue;
    }

    const auto want_p = oracle::best_prefill(c.p_gpu, c.model, c.workload, c.space, c.cost);
    if (want_p) {
      ++feasible_p;
      const PStageResult p = solve_p_stage(c.p_gpu, c.model, c.workload, c.space, c.cost);
      if (!(p.best.strategy == want_p->strategy) || p.best.objective != want_p->objective)
        o.fail("case " + std::to_string(i) + ": P stage chose " + to_string(p.best.strategy) +
               ", oracle " + to_string(want_p->strategy));
    } else if (error_code([&] { solve_p_stage(c.p_gpu, c.model, c.workload, c.space, c.cost); }) !=
               ErrorCode::kInfeasible) {
      o.fail("case " + std::to_string(i) + ": P stage should be infeasible");
    }

    const auto want_d = oracle::best_decode(c.d_gpu, c.model, c.workload, c.space, c.cost);
    const double demand = 100.0;
    if (want_d) {
      ++feasible_d;
      const DStageResult d = solve_d_stage(c.d_gpu, c.model, c.workload, c.space, demand, c.cost);
      if (!(d.best.strategy == want_d->strategy) || d.best.objective != want_d->objective ||
          d.best.batch != want_d->batch)
        o.fail("case " + std::to_string(i) + ": D stage chose " + to_string(d.best.strategy) +
               " b=" + std::to_string(d.best.batch) + ", oracle " +
               to_string(want_d->strategy) + " b=" + std::to_string(want_d->batch));
    } else if (error_code([&] {
                 solve_d_stage(c.d_gpu, c.model, c.workload, c.space, demand, c.cost);
               }) != ErrorCode::kInfeasible) {
      o.fail("case " + std::to_string(i) + ": D stage should be infeasible");
    }
  }
  const double elapsed = seconds_since(t0);
  if (catalogs < 50) o.fail("only " + std::to_string(catalogs) + " catalogs");
  // A suite where nothing is feasible would prove little.
  if (feasible_p < 25 || feasible_d < 25) o.fail("too few feasible cases");
  if (elapsed >= 10.0) o.fail("took " + num(elapsed) + " s");
  if (o.pass)
    o.detail = std::to_string(catalogs) + " catalogs, " + std::to_string(feasible_p) +
               " feasible P, " + std::to_string(feasible_d) + " feasible D, max space " +
               std::to_string(largest_space) + ", exact match, " + num(elapsed) + " s";
  return o;
}

// ---------------------------------------------------------------------------

constexpr std::int64_t kToyLayers = 2;
constexpr std::int64_t kToyHeads = 8;
constexpr std::int64_t kToyTokens = 16;
constexpr std::int64_t kToyHeadDim = 4;

std::vector<AxisOrder> all_layouts() {
  AxisOrder a = kCanonicalAxisOrder;
  std::sort(a.begin(), a.end());
  std::vector<AxisOrder> out;
  do {
    out.push_back(a);
  } while (std::next_permutation(a.begin(), a.end()));
  return out;
}

std::uint16_t toy_value(std::int64_t layer, std::int64_t head, std::int64_t token,
                        std::int64_t dim) {
  return static_cast<std::uint16_t>(
      1 + ((layer * kToyHeads + head) * kToyTokens + token) * kToyHeadDim + dim);
}

// Full-head canonical tensor, every element distinct and nonzero.
std::vector<std::byte> toy_tensor(std::int64_t block) {
  const std::int64_t tokens = padded_tokens(kToyTokens, block);
  std::vector<std::byte> out(
      static_cast<std::size_t>(kToyLayers * kToyHeads * tokens * kToyHeadDim * 2));
  for (std::int64_t l = 0; l < kToyLayers; ++l)
    for (std::int64_t h = 0; h < kToyHeads; ++h)
      for (std::int64_t t = 0; t < kToyTokens; ++t)
        for (std::int64_t d = 0; d < kToyHeadDim; ++d) {
          const std::uint16_t v = toy_value(l, h, t, d);
          const std::size_t at =
              static_cast<std::size_t>((((l * kToyHeads + h) * tokens + t) * kToyHeadDim + d) * 2);
          out[at] = static_cast<std::byte>(v & 0xff);
          out[at + 1] = static_cast<std::byte>(v >> 8);
        }
  return out;
}

// Every element of a destination shard equals the source element at the same
// global (layer, head, token, dim); padding stays zero.
bool shard_holds_source(const KvShard& s) {
  const FlatKv flat = flatten(s);
  const KvShape shape = flat.shape;
  for (std::int64_t l = 0; l < shape.layers; ++l)
    for (std::int64_t h = 0; h < shape.heads; ++h)
      for (std::int64_t t = 0; t < shape.tokens; ++t)
        for (std::int64_t d = 0; d < shape.head_dim; ++d) {
          const std::size_t at = static_cast<std::size_t>(
              (((l * shape.heads + h) * shape.tokens + t) * shape.head_dim + d) * 2);
          const auto got = static_cast<std::uint16_t>(
              std::to_integer<unsigned>(flat.data[at]) |
              (std::to_integer<unsigned>(flat.data[at + 1]) << 8));
          const std::uint16_t want = t < kToyTokens ? toy_value(l, s.heads.begin + h, t, d) : 0;
          if (got != want) return false;
        }
  return true;
}

Outcome ac2_kv_realignment_conserves() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<AxisOrder> layouts = all_layouts();
  const std::vector<std::int64_t> degrees = {1, 2, 4, 8};
  const std::vector<std::int64_t> blocks = {2, 4, 8, 16};
  int cases = 0;
  for (std::int64_t tp_p : degrees) {
    for (std::int64_t tp_d : degrees) {
      const RepartitionPlan forward = plan_repartition(tp_p, tp_d, kToyHeads);
      const RepartitionPlan back = plan_repartition(tp_d, tp_p, kToyHeads);
      for (std::size_t li = 0; li < layouts.size(); ++li) {
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
          const KvLayout src{layouts[li], blocks[bi], 2};
          // Destination differs in both axis order and block size.
          const KvLayout dst{layouts[layouts.size() - 1 - li], blocks[(bi + 1) % blocks.size()], 2};
          const std::vector<KvShard> shards = make_shards(
              toy_tensor(src.block_size), kToyLayers, kToyHeads, kToyHeadDim, kToyTokens, tp_p, src);
          const std::vector<KvShard> moved = apply_repartition(shards, forward, dst);
          const std::string where = std::to_string(tp_p) + "->" + std::to_string(tp_d) +
                                    " layout " + std::to_string(li) + " block " +
                                    std::to_string(src.block_size);
          if (static_cast<std::int64_t>(moved.size()) != tp_d) {
            o.fail(where + ": wrong shard count");
          } else {
            for (const KvShard& s : moved) {
              if (!(s.layout == dst) || !shard_holds_source(s)) {
                o.fail(where + ": element mismatch on rank " + std::to_string(s.tp_rank));
                break;
              }
            }
          }
          if (apply_repartition(moved, back, src) != shards) o.fail(where + ": round trip differs");
          ++cases;
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 30.0) o.fail("took " + num(elapsed) + " s");
  if (o.pass)
    o.detail = std::to_string(cases) + " cases byte-exact, round trip identity, " + num(elapsed) +
               " s";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac3_latency_structure() {
  Outcome o;
  const ModelSpec m = oracle::llama2_7b();
  double worst = 0;
  int checks = 0;
  auto check = [&](double got, double want, const std::string& what) {
    const double e = rel(got, want);
    worst = std::max(worst, e);
    ++checks;
    if (!(e <= 1e-12)) o.fail(what + ": relative error " + num(e));
  };
  for (const GpuSpec& base : {testing::gpu_a(), testing::gpu_b()}) {
    GpuSpec free_link = base;
    free_link.interconnect_bandwidth = std::numeric_limits<double>::infinity();
    const double lr = base.compute_discount * base.compute_rate;
    const double ab = base.vram_bw_discount * base.vram_bandwidth;
    for (std::int64_t seq : {1, 128, 512, 2048, 8192}) {
      check(prefill_cost(base, m, {}, 1, seq).latency, oracle::prefill_flops(m, seq) / lr,
            base.name + " prefill tp1 seq " + std::to_string(seq));
    }
    for (std::int64_t tp : {1, 2, 4, 8}) {
      for (std::int64_t pp : {1, 2, 4}) {
        const double tpp = static_cast<double>(tp * pp);
        check(prefill_cost(free_link, m, {1, tp, pp, 1}, 1, 1024).latency,
              oracle::prefill_flops(m, 1024) / tpp / lr,
              base.name + " prefill tp" + std::to_string(tp) + " pp" + std::to_string(pp));
        for (std::int64_t b : {1, 16}) {
          check(decode_cost(free_link, m, {1, tp, pp, 1}, b, 1500).latency,
                oracle::decode_bytes(m, tp, pp, b, 1500) / ab,
                base.name + " decode tp" + std::to_string(tp) + " pp" + std::to_string(pp));
        }
      }
    }
    for (std::int64_t b : {1, 8, 64})
      for (std::int64_t ctx : {1, 256, 4096})
        check(decode_cost(base, m, {}, b, ctx).latency, oracle::decode_bytes(m, 1, 1, b, ctx) / ab,
              base.name + " decode tp1");
  }
  if (o.pass) o.detail = std::to_string(checks) + " checks, worst relative error " + num(worst);
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac4_context_trend() {
  Outcome o;
  const Scenario s = load_scenario_file(testing::data_dir() / "scenarios" / "context_sweep.json");
  const std::vector<SweepRow> rows = run_sweep(s);
  std::map<std::pair<std::int64_t, std::int64_t>, SimMetrics> at;
  for (const SweepRow& r : rows) {
    std::int64_t in = 0;
    std::int64_t out = 0;
    for (const auto& [axis, v] : r.point.values) {
      if (axis == "input_len") in = static_cast<std::int64_t>(v);
      if (axis == "output_len") out = static_cast<std::int64_t>(v);
    }
    at[{in, out}] = r.metrics;
  }
  const std::vector<std::int64_t> lens = {128, 256, 512, 1024};
  if (at.size() != lens.size() * lens.size()) {
    o.fail("sweep produced " + std::to_string(at.size()) + " points");
    return o;
  }
  for (std::size_t i = 0; i < lens.size(); ++i) {
    for (std::size_t j = 0; j < lens.size(); ++j) {
      const SimMetrics& here = at[{lens[i], lens[j]}];
      const std::string where = "in " + std::to_string(lens[i]) + " out " + std::to_string(lens[j]);
      if (i + 1 < lens.size()) {
        const SimMetrics& longer_in = at[{lens[i + 1], lens[j]}];
        if (!(longer_in.ttft_mean > here.ttft_mean)) o.fail(where + ": TTFT not rising with input");
        if (longer_in.tpot_mean < here.tpot_mean) o.fail(where + ": TPOT falls with input");
      }
      if (j + 1 < lens.size()) {
        const SimMetrics& longer_out = at[{lens[i], lens[j + 1]}];
        if (longer_out.ttft_mean < here.ttft_mean) o.fail(where + ": TTFT falls with output");
        if (longer_out.tpot_mean < here.tpot_mean) o.fail(where + ": TPOT falls with output");
      }
    }
  }
  const SimMetrics& lo = at[{128, 128}];
  const SimMetrics& hi = at[{1024, 1024}];
  if (o.pass)
    o.detail = "16 points monotone; TTFT " + num(lo.ttft_mean) + " -> " + num(hi.ttft_mean) +
               " s, TPOT " + num(lo.tpot_mean) + " -> " + num(hi.tpot_mean) + " s";
  return o;
}

// ---------------------------------------------------------------------------

double second_row_ttft_delta(const char* file) {
  const Scenario s = load_scenario_file(testing::data_dir() / "scenarios" / file);
  const std::vector<CompareCase> cases = run_compare(s);
  if (cases.size() != 1 || cases[0].rows.size() != 2)
    throw Error(ErrorCode::kInvariant, std::string(file) + " must hold one case of two rows");
  return cases[0].rows[1].ttft_mean_delta;
}

Outcome ac5_pd_ratio() {
  Outcome o;
  const double unsaturated = second_row_ttft_delta("pd_ratio_unsaturated.json");
  const double saturated = second_row_ttft_delta("pd_ratio_saturated.json");
  if (!(std::fabs(unsaturated) < 0.10))
    o.fail("unsaturated 1P1D->2P1D changes TTFT by " + num(100 * unsaturated) + "%");
  if (!(-saturated > 0.30))
    o.fail("saturated 1P->2P changes TTFT by only " + num(100 * saturated) + "%");
  if (o.pass)
    o.detail = "unsaturated dTTFT " + num(100 * unsaturated) + "% (<10%), saturated dTTFT " +
               num(100 * saturated) + "% (< -30%)";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac6_disaggregation_gain() {
  Outcome o;
  const Scenario s =
      load_scenario_file(testing::data_dir() / "scenarios" / "disagg_vs_colocated.json");
  if (s.deployments.size() != 2) {
    o.fail("expected a disaggregated and a colocated deployment");
    return o;
  }
  const std::int64_t gpus_disagg = resolve(s, s.deployments[0], s.workload).cluster.total_gpus();
  const std::int64_t gpus_coloc = resolve(s, s.deployments[1], s.workload).cluster.total_gpus();
  if (gpus_disagg != gpus_coloc)
    o.fail("GPU counts differ: " + std::to_string(gpus_disagg) + " vs " +
           std::to_string(gpus_coloc));

  const std::vector<CompareCase> cases = run_compare(s);
  std::map<std::string, std::pair<double, double>> gain;  // label -> (throughput, goodput)
  std::vector<Row> report;
  for (const CompareCase& c : cases) {
    if (c.rows.size() != 2) continue;
    const SimMetrics& d = c.rows[0].metrics;
    const SimMetrics& k = c.rows[1].metrics;
    gain[c.label] = {relative_delta(d.throughput, k.throughput),
                     relative_delta(d.goodput, k.goodput)};
    for (const ComparisonRow& r : c.rows) report.push_back(comparison_row(c.label, r));
  }
  if (!gain.count("long-high") || !gain.count("short-low")) {
    o.fail("scenario lacks the long-high and short-low cases");
    return o;
  }
  const auto [long_tput, long_good] = gain["long-high"];
  const auto [short_tput, short_good] = gain["short-low"];
  if (!(long_tput > 0)) o.fail("long-high throughput gain " + num(100 * long_tput) + "%");
  if (!(long_good > 0)) o.fail("long-high goodput gain " + num(100 * long_good) + "%");
  if (!(short_tput < long_tput))
    o.fail("no crossover: short-low gain " + num(100 * short_tput) + "% >= long-high " +
           num(100 * long_tput) + "%");
  const std::string table = render(report, Format::kTable);
  if (table.find("long-high") == std::string::npos || table.find("short-low") == std::string::npos)
    o.fail("comparison report misses a case");
  o.notes.push_back("disaggregated gain over colocated on " + std::to_string(gpus_disagg) +
                    " GPUs: long-high throughput " + num(100 * long_tput) + "%, goodput " +
                    num(100 * long_good) + "%; short-low throughput " + num(100 * short_tput) +
                    "%, goodput " + num(100 * short_good) + "%");
  std::istringstream lines(table);
  for (std::string line; std::getline(lines, line);) o.notes.push_back(line);
  if (o.pass)
    o.detail = "long-high +" + num(100 * long_tput) + "% throughput, +" + num(100 * long_good) +
               "% goodput; short-low " + num(100 * short_tput) + "%";
  return o;
}

// ---------------------------------------------------------------------------

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool identical(const Request& a, const Request& b) {
  if (a.id != b.id || a.input_len != b.input_len || a.output_len != b.output_len ||
      a.p_instance != b.p_instance || a.d_instance != b.d_instance ||
      a.tokens_emitted != b.tokens_emitted || a.token_times.size() != b.token_times.size())
    return false;
  for (auto field : {&Request::arrival_time, &Request::prefill_start, &Request::prefill_end,
                     &Request::first_token_time, &Request::kv_transfer_start,
                     &Request::kv_transfer_end, &Request::decode_start, &Request::finish_time})
    if (!same_bits(a.*field, b.*field)) return false;
  for (std::size_t i = 0; i < a.token_times.size(); ++i)
    if (!same_bits(a.token_times[i], b.token_times[i])) return false;
  return true;
}

struct Residency {
  std::int64_t instance;
  double begin;
  double end;
  double bytes;
};

// Peak of weights plus KV that is certainly resident, per instance. The
// intervals are subsets of what the simulator holds, so a breach here is a
// breach there too.
int check_vram(const Cluster& c, const std::vector<Request>& reqs, Outcome& o,
               const std::string& where) {
  int breaches = 0;
  std::vector<Residency> spans;
  auto kv = [&](std::int64_t i, std::int64_t tokens) {
    return kv_bytes_per_gpu(c.model, c.instances[static_cast<std::size_t>(i)].strategy, tokens,
                            c.instances[static_cast<std::size_t>(i)].gpu.kv_block_size);
  };
  for (const Request& r : reqs) {
    const std::int64_t held = r.input_len + r.output_len - 1;
    if (c.colocated()) {
      spans.push_back({r.d_instance, r.prefill_end, r.finish_time, kv(r.d_instance, r.input_len)});
      continue;
    }
    if (r.d_instance >= 0) {
      spans.push_back({r.p_instance, r.prefill_end, r.kv_transfer_start,
                       kv(r.p_instance, r.input_len)});
      spans.push_back({r.d_instance, r.kv_transfer_end, r.finish_time, kv(r.d_instance, held)});
    }
  }
  for (std::size_t i = 0; i < c.instances.size(); ++i) {
    const InstanceSpec& inst = c.instances[i];
    std::vector<std::pair<double, double>> edges;  // (time, +/- bytes)
    for (const Residency& s : spans) {
      if (s.instance != static_cast<std::int64_t>(i) || !(s.end > s.begin)) continue;
      edges.emplace_back(s.begin, s.bytes);
      edges.emplace_back(s.end, -s.bytes);
    }
    std::sort(edges.begin(), edges.end());  // releases sort before claims at equal times
    double use = weight_bytes_per_gpu(c.model, inst.strategy);
    double peak = use;
    for (const auto& [t, delta] : edges) {
      use += delta;
      peak = std::max(peak, use);
    }
    if (peak > inst.gpu.vram_capacity * (1 + 1e-9)) {
      ++breaches;
      o.fail(where + ": instance " + std::to_string(i) + " peaks at " + num(peak) + " B");
    }
  }
  return breaches;
}

void check_run(const Cluster& c, const std::vector<Request>& arrivals, const WorkloadSpec& slo,
               bool colocated, Outcome& o, const std::string& where, int& violations) {
  SimOptions opt;
  opt.record_trace = true;
  opt.cost.alignment_bytes = 256;
  const auto go = [&] {
    return colocated ? run_colocated(c, arrivals, slo, opt) : run(c, arrivals, slo, opt);
  };
  SimResult a;
  SimResult b;
  try {
    a = go();
    b = go();
  } catch (const Error& e) {
    ++violations;
    o.fail(where + ": " + e.what());
    return;
  }
  auto bad = [&](const std::string& what) {
    ++violations;
    o.fail(where + ": " + what);
  };

  // Token conservation.
  std::int64_t tokens = 0;
  if (a.requests.size() != arrivals.size()) bad("lost requests");
  for (const Request& r : a.requests) {
    tokens += r.output_len;
    if (r.tokens_emitted != r.output_len ||
        static_cast<std::int64_t>(r.token_times.size()) != r.output_len) {
      bad("request " + std::to_string(r.id) + " emitted " + std::to_string(r.tokens_emitted) +
          " of " + std::to_string(r.output_len));
      break;
    }
  }
  if (a.metrics.completed != static_cast<std::int64_t>(arrivals.size()) ||
      a.metrics.completed_tokens != tokens)
    bad("completed counts disagree with requests");

  // Causality.
  for (const Request& r : a.requests) {
    bool ok = r.arrival_time <= r.prefill_start && r.prefill_start <= r.prefill_end &&
              r.prefill_end <= r.first_token_time && r.first_token_time == r.token_times.front() &&
              r.finish_time == r.token_times.back();
    ok = ok && std::is_sorted(r.token_times.begin(), r.token_times.end());
    for (std::size_t k = 1; ok && k < r.token_times.size(); ++k)
      ok = r.token_times[k] > r.token_times[k - 1];
    if (!colocated && r.output_len > 1)
      ok = ok && r.prefill_end <= r.kv_transfer_start && r.kv_transfer_start <= r.kv_transfer_end &&
           r.kv_transfer_end <= r.decode_start && r.decode_start < r.token_times[1];
    if (!ok) {
      bad("request " + std::to_string(r.id) + " out of order");
      break;
    }
  }
  for (std::size_t k = 1; k < a.trace.size(); ++k)
    if (a.trace[k].time < a.trace[k - 1].time) {
      bad("trace goes back in time");
      break;
    }

  // VRAM safety beyond the simulator's own per-event check (which throws).
  violations += check_vram(c, a.requests, o, where);

  // Bitwise determinism.
  if (!(a.metrics == b.metrics) || a.trace != b.trace) bad("rerun metrics or trace differ");
  for (std::size_t k = 0; k < a.requests.size() && k < b.requests.size(); ++k)
    if (!identical(a.requests[k], b.requests[k])) {
      bad("rerun differs on request " + std::to_string(k));
      break;
    }
}

Outcome ac7_simulator_conservation() {
  Outcome o;
  const ModelSpec m = oracle::llama2_7b();
  TransferLink link;
  link.bandwidth = 25e9;
  link.discount = 0.8;
  link.per_hop_overhead = 1e-4;
  const GpuSpec a = testing::gpu_a();
  const GpuSpec b = testing::gpu_b();

  struct Setup {
    std::string name;
    Cluster cluster;
    bool colocated;
  };
  std::vector<Setup> setups;
  {
    DeploymentPlan p;
    p.p_count = 2;
    p.d_count = 3;
    setups.push_back({"2P3D", build_cluster(p, b, a, m, link), false});
    // Mismatched tp and block sizes between the two sides.
    p.p_strategy = {1, 2, 1, 1};
    p.d_strategy = {1, 1, 1, 1};
    p.p_count = 1;
    p.d_count = 2;
    setups.push_back({"1P2D-tp2to1", build_cluster(p, b, a, m, link), false});
  }
  setups.push_back({"coloc-2xA", build_colocated(a, m, {}, 2), true});
  setups.push_back({"coloc-mixed", build_colocated(std::vector<GpuSpec>{a, b}, m, {}), true});

  int runs = 0;
  int violations = 0;
  std::int64_t total_requests = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    for (const Setup& s : setups) {
      // 1000 requests, poisson arrivals, mixed prompt and output lengths.
      std::vector<Request> reqs;
      double t = 0;
      for (int i = 0; i < 1000; ++i) {
        t += std::exponential_distribution<>(6.0)(rng);
        Request r;
        r.id = i;
        r.arrival_time = t;
        r.input_len = 16 + static_cast<std::int64_t>(rng() % 3000);
        r.output_len = 1 + static_cast<std::int64_t>(rng() % 400);
        reqs.push_back(r);
      }
      check_run(s.cluster, reqs, testing::chat(), s.colocated, o,
                s.name + " seed " + std::to_string(seed), violations);
      ++runs;
      total_requests += static_cast<std::int64_t>(reqs.size());
    }
    // Generated arrivals as well, cut to 1000.
    WorkloadSpec w = testing::chat(512, 128, 8);
    w.arrival_process = ArrivalProcess::kPoisson;
    std::vector<Request> gen = generate_arrivals(w, 400, seed);
    if (gen.size() < 1000) {
      o.fail("generator produced only " + std::to_string(gen.size()) + " requests");
      continue;
    }
    gen.resize(1000);
    check_run(setups[0].cluster, gen, w, false, o, "generated seed " + std::to_string(seed),
              violations);
    ++runs;
    total_requests += 1000;
  }
  if (o.pass)
    o.detail = std::to_string(runs) + " runs, " + std::to_string(total_requests) +
               " requests, " + std::to_string(violations) + " violations";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac8_llama_constants() {
  Outcome o;
  const Catalog cat = load_catalog(nlohmann::json::parse(
      [] {
        std::ifstream in(testing::data_dir() / "catalog.json");
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
      }()));
  const ModelSpec& shipped = cat.model("llama2-7b");
  if (!(shipped == oracle::llama2_7b())) o.fail("shipped llama2-7b differs from the hand spec");
  const ModelStats st = derive_stats(shipped);
  if (st.kv_bytes_per_token != 524288 || st.kv_bytes_per_token != oracle::kLlama2KvBytesPerToken)
    o.fail("kv bytes per token " + std::to_string(st.kv_bytes_per_token));
  if (st.weight_bytes_total != oracle::kLlama2WeightBytes)
    o.fail("weight bytes " + std::to_string(st.weight_bytes_total) + " vs oracle " +
           std::to_string(oracle::kLlama2WeightBytes));
  const double off = rel(static_cast<double>(st.weight_bytes_total), 13.48e9);
  if (!(off < 0.02)) o.fail("weight bytes " + num(100 * off) + "% from 13.48e9");
  if (o.pass)
    o.detail = "kv " + std::to_string(st.kv_bytes_per_token) + " B/token, weights " +
               std::to_string(st.weight_bytes_total) + " B (" + num(100 * off) + "% from 13.48e9)";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac9_half_round_trip() {
  Outcome o;
  std::vector<std::byte> halves;
  int finite = 0;
  for (std::uint32_t bits = 0; bits <= 0xffff; ++bits) {
    if ((bits & 0x7c00u) == 0x7c00u) continue;  // inf and nan
    halves.push_back(static_cast<std::byte>(bits & 0xff));
    halves.push_back(static_cast<std::byte>(bits >> 8));
    ++finite;
  }
  const std::vector<std::byte> wide = cast_dtype(halves, 2, 4);
  const std::vector<std::byte> back = cast_dtype(wide, 4, 2);
  if (back != halves) {
    std::size_t k = 0;
    while (k < back.size() && k < halves.size() && back[k] == halves[k]) ++k;
    o.fail("first mismatch at pattern " + std::to_string(k / 2));
  }
  // The widened values themselves must be exact.
  int wrong = 0;
  for (int i = 0; i < finite; ++i) {
    float f;
    std::memcpy(&f, wide.data() + 4 * i, 4);
    const auto bits = static_cast<std::uint16_t>(std::to_integer<unsigned>(halves[2 * i]) |
                                                 (std::to_integer<unsigned>(halves[2 * i + 1]) << 8));
    if (static_cast<double>(f) != oracle::half_value(bits) ||
        std::signbit(f) != ((bits & 0x8000u) != 0))
      ++wrong;
  }
  if (wrong) o.fail(std::to_string(wrong) + " widened values differ from the oracle");
  if (o.pass) o.detail = std::to_string(finite) + " finite patterns round-trip bit-exact";
  return o;
}

}  // namespace
}  // namespace hetpd

int main() {
  using hetpd::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1", hetpd::ac1_optimizer_matches_brute_force},
      {"AC2", hetpd::ac2_kv_realignment_conserves},
      {"AC3", hetpd::ac3_latency_structure},
      {"AC4", hetpd::ac4_context_trend},
      {"AC5", hetpd::ac5_pd_ratio},
      {"AC6", hetpd::ac6_disaggregation_gain},
      {"AC7", hetpd::ac7_simulator_conservation},
      {"AC8", hetpd::ac8_llama_constants},
      {"AC9", hetpd::ac9_half_round_trip},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::cout << name << (o.pass ? " PASS " : " FAIL ") << o.detail << "\n";
    for (const std::string& n : o.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
    if (!o.pass) ++failed;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed")
            << "\n";
  return failed ? 1 : 0;
}
