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

#include "hetpd/cluster_sim.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <random>
#include <tuple>

#include "hetpd/error.h"

namespace hetpd {

using nlohmann::json;
namespace jf = json_field;

void validate(const TransferLink& link) {
  auto positive = [](double v) { return v > 0 && !std::isnan(v); };
  if (!positive(link.bandwidth) || !positive(link.host_copy_bandwidth)) {
    throw Error(ErrorCode::kInvariant, "link: bandwidths must be > 0");
  }
  if (!(link.discount > 0 && link.discount <= 1)) {
    throw Error(ErrorCode::kInvariant, "link: discount out of range (0, 1]");
  }
  if (!(link.per_hop_overhead >= 0) || !std::isfinite(link.per_hop_overhead)) {
    throw Error(ErrorCode::kInvariant, "link: per_hop_overhead must be >= 0");
  }
}

double hop_time(const TransferLink& link, int hop, double bytes) {
  const double bandwidth = hop == 2 ? link.bandwidth : link.host_copy_bandwidth;
  return bytes / (link.discount * bandwidth) + link.per_hop_overhead;
}

std::string_view to_string(InstanceRole role) {
  switch (role) {
    case InstanceRole::kPrefill: return "prefill";
    case InstanceRole::kDecode: return "decode";
    case InstanceRole::kColocated: return "colocated";
  }
  return "?";
}

bool Cluster::colocated() const {
  return !instances.empty() && instances.front().role == InstanceRole::kColocated;
}

std::int64_t Cluster::count(InstanceRole role) const {
  return std::count_if(instances.begin(), instances.end(),
                       [&](const InstanceSpec& i) { return i.role == role; });
}

std::int64_t Cluster::total_gpus() const {
  std::int64_t n = 0;
  for (const auto& i : instances) n += i.strategy.gpus_per_instance();
  return n;
}

Cluster build_cluster(const DeploymentPlan& plan, const GpuSpec& p_gpu, const GpuSpec& d_gpu,
                      const ModelSpec& model, const TransferLink& link) {
  validate(link);
  check_compatible(model, plan.p_strategy);
  check_compatible(model, plan.d_strategy);
  Cluster cluster{model, link, {}};
  for (std::int64_t i = 0; i < plan.p_count; ++i) {
    cluster.instances.push_back({InstanceRole::kPrefill, p_gpu, plan.p_strategy});
  }
  for (std::int64_t i = 0; i < plan.d_count; ++i) {
    cluster.instances.push_back({InstanceRole::kDecode, d_gpu, plan.d_strategy});
  }
  return cluster;
}

Cluster build_colocated(const GpuSpec& gpu, const ModelSpec& model,
                        const ParallelStrategy& strategy, std::int64_t count) {
  if (count < 1) throw Error(ErrorCode::kInvariant, "colocated cluster needs >= 1 instance");
  return build_colocated(std::vector<GpuSpec>(static_cast<std::size_t>(count), gpu), model,
                         strategy);
}

Cluster build_colocated(const std::vector<GpuSpec>& gpus, const ModelSpec& model,
                        const ParallelStrategy& strategy) {
  check_compatible(model, strategy);
  if (gpus.empty()) throw Error(ErrorCode::kInvariant, "colocated cluster needs >= 1 instance");
  Cluster cluster{model, {}, {}};
  for (const auto& gpu : gpus) {
    cluster.instances.push_back({InstanceRole::kColocated, gpu, strategy});
  }
  return cluster;
}

double Request::tpot() const {
  if (output_len <= 1) return 0.0;
  return (finish_time - first_token_time) / static_cast<double>(output_len - 1);
}

std::vector<Request> generate_arrivals(const WorkloadSpec& workload, double duration,
                                       std::uint64_t seed) {
  if (!(duration > 0)) throw Error(ErrorCode::kInvariant, "arrivals: duration must be > 0");
  validate(workload);
  std::vector<Request> out;
  auto add = [&](double t) {
    Request r;
    r.id = static_cast<std::int64_t>(out.size());
    r.arrival_time = t;
    r.input_len = workload.input_len;
    r.output_len = workload.output_len;
    out.push_back(std::move(r));
  };
  if (workload.arrival_process == ArrivalProcess::kDeterministic) {
    for (std::int64_t i = 0;; ++i) {
      const double t = static_cast<double>(i) / workload.qps;
      if (!(t < duration)) break;
      add(t);
    }
  } else {
    std::mt19937_64 gen(seed);
    double t = 0;
    while (true) {
      const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
      t += -std::log1p(-u) / workload.qps;
      if (!(t < duration)) break;
      add(t);
    }
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

enum EventKind : int {
  kHop1Done = 0,
  kHop2Done = 1,
  kHop3Done = 2,
  kPrefillDone = 3,
  kDecodeStepDone = 4,
  kArrival = 5,
  kPrefillEnqueue = 6,
};

struct Event {
  double time;
  int kind;
  std::int64_t id;  // request id, or instance index for step completions
  std::uint64_t seq;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.kind, a.id, a.seq) > std::tie(b.time, b.kind, b.id, b.seq);
  }
};

enum class Op { kIdle, kPrefill, kDecode };

// Slack for bookkeeping drift when KV reservations are added and removed in
// floating point; admission itself compares exactly.
constexpr double kVramSlack = 1e-9;

struct Engine {
  const InstanceSpec* spec = nullptr;
  double capacity = 0;
  double weights = 0;
  std::deque<std::int64_t> queue;       // waiting for prefill
  std::vector<std::int64_t> batch;      // members of the op in flight
  Op op = Op::kIdle;
  double op_start = 0;
  double op_activation = 0;
  double kv_held = 0;                   // P: awaiting hop1; D / colocated: reservations
  std::int64_t reserved = 0;            // requests contributing to kv_held
  std::vector<std::int64_t> running;    // decode set
  std::vector<std::int64_t> ready;      // D: transferred, joins at next boundary
  std::deque<std::int64_t> admit_wait;  // D: waiting for a KV reservation
  double hop_free[3] = {0, 0, 0};
  double load = 0;                      // outstanding tokens
  double busy_time = 0;

  double in_use() const { return weights + kv_held + op_activation; }
};

class Simulator {
 public:
  Simulator(const Cluster& cluster, std::vector<Request> requests, const WorkloadSpec& slo,
            const SimOptions& options, bool colocated)
      : cluster_(cluster),
        model_(cluster.model),
        slo_(slo),
        options_(options),
        colocated_(colocated),
        requests_(std::move(requests)) {
    if (cluster.instances.empty()) throw Error(ErrorCode::kInvariant, "cluster has no instances");
    if (colocated != cluster.colocated()) {
      throw Error(ErrorCode::kInvariant,
                  colocated ? "run_colocated needs a colocated cluster"
                            : "run needs a disaggregated cluster");
    }
    if (!colocated) {
      validate(cluster.link);
      if (cluster.count(InstanceRole::kPrefill) < 1 || cluster.count(InstanceRole::kDecode) < 1) {
        throw Error(ErrorCode::kInvariant, "disaggregated cluster needs P and D instances");
      }
    }
    if (options.cost.prefill_batch < 1) {
      throw Error(ErrorCode::kInvariant, "prefill_batch must be >= 1");
    }
    const ModelStats stats = derive_stats(model_);
    transfer_bytes_per_token_ = static_cast<double>(stats.kv_bytes_per_token);
    for (const auto& spec : cluster.instances) {
      Engine e;
      e.spec = &spec;
      e.capacity = spec.gpu.vram_capacity;
      e.weights = weight_bytes_per_gpu(model_, spec.strategy, options.cost);
      engines_.push_back(std::move(e));
    }
    reservation_.assign(requests_.size(), 0.0);
    for (std::size_t i = 0; i < requests_.size(); ++i) {
      Request& r = requests_[i];
      if (r.id != static_cast<std::int64_t>(i)) {
        throw Error(ErrorCode::kInvariant, "request ids must be 0..n-1 in order");
      }
      if (r.input_len < 1 || r.output_len < 1 || !(r.arrival_time >= 0)) {
        throw Error(ErrorCode::kInvariant, fmt::format("request {}: bad lengths or time", r.id));
      }
      push(r.arrival_time, kArrival, r.id);
    }
  }

  SimResult run() {
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      dispatch(ev);
      check_instances();
    }
    SimResult result;
    std::vector<double> busy;
    for (const auto& e : engines_) busy.push_back(e.busy_time);
    for (const auto& r : requests_) {
      if (r.finish_time < 0 || r.tokens_emitted != r.output_len) {
        throw Error(ErrorCode::kInvariantBreach,
                    fmt::format("request {} never completed ({} of {} tokens)", r.id,
                                r.tokens_emitted, r.output_len));
      }
    }
    result.metrics = summarize(requests_, slo_, std::move(busy));
    result.requests = std::move(requests_);
    std::stable_sort(trace_.begin(), trace_.end(),
                     [](const TraceRecord& a, const TraceRecord& b) { return a.time < b.time; });
    result.trace = std::move(trace_);
    return result;
  }

 private:
  void push(double time, int kind, std::int64_t id) {
    if (!(time <= options_.max_sim_time)) {
      throw Error(ErrorCode::kSimTimeOverflow,
                  fmt::format("simulation time {} exceeds max_sim_time {}", time,
                              options_.max_sim_time));
    }
    events_.push({time, kind, id, seq_++});
  }

  void trace(double time, const char* event, std::int64_t request, std::int64_t instance) {
    if (options_.record_trace) trace_.push_back({time, event, request, instance});
  }

  [[noreturn]] void breach(const std::string& what) const {
    throw Error(ErrorCode::kInvariantBreach, fmt::format("t={}: {}", now_, what));
  }

  const GpuSpec& gpu(std::size_t i) const { return engines_[i].spec->gpu; }
  const ParallelStrategy& strategy(std::size_t i) const { return engines_[i].spec->strategy; }

  std::size_t pick(InstanceRole role) const {
    std::size_t best = engines_.size();
    for (std::size_t i = 0; i < engines_.size(); ++i) {
      if (engines_[i].spec->role != role) continue;
      if (best == engines_.size() || engines_[i].load < engines_[best].load) best = i;
    }
    return best;
  }

  double transfer_bytes(const Request& r) const {
    return static_cast<double>(r.input_len) * transfer_bytes_per_token_ +
           static_cast<double>(model_.hidden_dim * model_.dtype_bytes);
  }

  double prompt_kv(std::size_t i, const Request& r) const {
    return kv_bytes_per_gpu(model_, strategy(i), r.input_len, gpu(i).kv_block_size);
  }

  double full_kv(std::size_t i, const Request& r) const {
    return kv_bytes_per_gpu(model_, strategy(i), r.input_len + r.output_len,
                            gpu(i).kv_block_size);
  }

  double prefill_activation(std::size_t i, std::int64_t batch, std::int64_t seq) const {
    return prefill_vram(model_, strategy(i), batch, seq, options_.cost).activation_bytes;
  }

  double decode_activation(std::int64_t batch) const {
    return batch > 0 ? activation_bytes_per_gpu(model_, batch, options_.cost) : 0.0;
  }

  // Longest FIFO prefix of the queue (up to prefill_batch) that fits now.
  std::vector<std::int64_t> admissible_prefill(std::size_t i) const {
    const Engine& e = engines_[i];
    std::vector<std::int64_t> chosen;
    std::int64_t seq = 0;
    double new_kv = 0;
    for (std::int64_t id : e.queue) {
      if (static_cast<std::int64_t>(chosen.size()) >= options_.cost.prefill_batch) break;
      const Request& r = requests_[static_cast<std::size_t>(id)];
      const std::int64_t next_seq = std::max(seq, r.input_len);
      const auto n = static_cast<std::int64_t>(chosen.size()) + 1;
      const double act = prefill_activation(i, n, next_seq);
      bool fits;
      if (colocated_) {
        const double kv = new_kv + full_kv(i, r);
        const double peak = std::max(act, decode_activation(e.reserved + n));
        fits = e.weights + e.kv_held + kv + peak <= e.capacity;
        if (fits) new_kv = kv;
      } else {
        const double kv = new_kv + prompt_kv(i, r);
        fits = e.weights + e.kv_held + act <= e.capacity &&
               e.weights + e.kv_held + kv <= e.capacity;
        if (fits) new_kv = kv;
      }
      if (!fits) break;
      chosen.push_back(id);
      seq = next_seq;
    }
    return chosen;
  }

  bool reservation_fits(std::size_t d, const Request& r) const {
    const Engine& e = engines_[d];
    return e.weights + e.kv_held + full_kv(d, r) + decode_activation(e.reserved + 1) <=
           e.capacity;
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case kArrival: on_arrival(ev.id); break;
      case kPrefillEnqueue: on_enqueue(ev.id); break;
      case kPrefillDone: on_prefill_done(static_cast<std::size_t>(ev.id)); break;
      case kHop1Done: on_hop1_done(ev.id); break;
      case kHop2Done: on_hop2_done(ev.id); break;
      case kHop3Done: on_hop3_done(ev.id); break;
      case kDecodeStepDone: on_decode_done(static_cast<std::size_t>(ev.id)); break;
      default: breach("unknown event kind");
    }
  }

  Request& req(std::int64_t id) { return requests_[static_cast<std::size_t>(id)]; }

  void on_arrival(std::int64_t id) {
    Request& r = req(id);
    const std::size_t i = pick(colocated_ ? InstanceRole::kColocated : InstanceRole::kPrefill);
    r.p_instance = static_cast<std::int64_t>(i);
    engines_[i].load += static_cast<double>(r.input_len);
    if (colocated_) {
      r.d_instance = r.p_instance;
      engines_[i].load += static_cast<double>(r.output_len - 1);
    }
    trace(now_, "arrival", id, r.p_instance);
    push(now_ + options_.dispatch_overhead, kPrefillEnqueue, id);
  }

  void on_enqueue(std::int64_t id) {
    const auto i = static_cast<std::size_t>(req(id).p_instance);
    engines_[i].queue.push_back(id);
    if (colocated_) {
      next_colocated(i);
    } else {
      try_prefill(i);
    }
  }

  // Starts a prefill batch if one fits; returns false when nothing started.
  bool try_prefill(std::size_t i) {
    Engine& e = engines_[i];
    if (e.op != Op::kIdle || e.queue.empty()) return false;
    const std::vector<std::int64_t> chosen = admissible_prefill(i);
    if (chosen.empty()) {
      if (e.kv_held == 0 && e.reserved == 0) {
        throw Error(ErrorCode::kInvariant,
                    fmt::format("request {} can never be admitted for prefill on instance {} "
                                "(gpu '{}')",
                                e.queue.front(), i, gpu(i).name));
      }
      return false;
    }
    std::int64_t seq = 0;
    for (std::int64_t id : chosen) {
      e.queue.pop_front();
      Request& r = req(id);
      seq = std::max(seq, r.input_len);
      r.prefill_start = now_;
      trace(now_, "prefill_start", id, static_cast<std::int64_t>(i));
      if (colocated_) {
        reservation_[static_cast<std::size_t>(id)] = full_kv(i, r);
        e.kv_held += reservation_[static_cast<std::size_t>(id)];
        ++e.reserved;
      }
    }
    const auto n = static_cast<std::int64_t>(chosen.size());
    e.batch = chosen;
    e.op = Op::kPrefill;
    e.op_start = now_;
    e.op_activation = prefill_activation(i, n, seq);
    const double latency = prefill_cost(gpu(i), model_, strategy(i), n, seq).latency;
    push(now_ + latency, kPrefillDone, static_cast<std::int64_t>(i));
    return true;
  }

  void on_prefill_done(std::size_t i) {
    Engine& e = engines_[i];
    e.busy_time += now_ - e.op_start;
    e.op = Op::kIdle;
    e.op_activation = 0;
    const std::vector<std::int64_t> batch = std::move(e.batch);
    e.batch.clear();
    for (std::int64_t id : batch) {
      Request& r = req(id);
      r.prefill_end = now_;
      r.first_token_time = now_;
      r.tokens_emitted = 1;
      r.token_times.push_back(now_);
      e.load -= static_cast<double>(r.input_len);
      trace(now_, "first_token", id, static_cast<std::int64_t>(i));
      if (colocated_) {
        r.kv_transfer_start = now_;
        r.kv_transfer_end = now_;
        if (r.output_len == 1) {
          release(i, id);
          finish(id);
        } else {
          e.running.push_back(id);
        }
        continue;
      }
      if (r.output_len == 1) {
        finish(id);
        continue;
      }
      reservation_[static_cast<std::size_t>(id)] = prompt_kv(i, r);
      e.kv_held += reservation_[static_cast<std::size_t>(id)];
      ++e.reserved;
      const std::size_t d = pick(InstanceRole::kDecode);
      r.d_instance = static_cast<std::int64_t>(d);
      engines_[d].load += static_cast<double>(r.output_len - 1);
      const double start = std::max(now_, e.hop_free[0]);
      const double done = start + hop_time(cluster_.link, 1, transfer_bytes(r));
      e.hop_free[0] = done;
      r.kv_transfer_start = start;
      trace(start, "kv_transfer_start", id, static_cast<std::int64_t>(i));
      push(done, kHop1Done, id);
    }
    if (colocated_) {
      next_colocated(i);
    } else {
      try_prefill(i);
    }
  }

  void on_hop1_done(std::int64_t id) {
    Request& r = req(id);
    const auto p = static_cast<std::size_t>(r.p_instance);
    release(p, id);
    try_prefill(p);
    Engine& d = engines_[static_cast<std::size_t>(r.d_instance)];
    const double start = std::max(now_, d.hop_free[1]);
    const double done = start + hop_time(cluster_.link, 2, transfer_bytes(r));
    d.hop_free[1] = done;
    push(done, kHop2Done, id);
  }

  void on_hop2_done(std::int64_t id) {
    const auto d = static_cast<std::size_t>(req(id).d_instance);
    engines_[d].admit_wait.push_back(id);
    try_admit(d);
  }

  void try_admit(std::size_t d) {
    Engine& e = engines_[d];
    while (!e.admit_wait.empty()) {
      const std::int64_t id = e.admit_wait.front();
      Request& r = req(id);
      if (!reservation_fits(d, r)) {
        if (e.reserved == 0) {
          throw Error(ErrorCode::kInvariant,
                      fmt::format("request {} can never be admitted for decode on instance {} "
                                  "(gpu '{}')",
                                  id, d, gpu(d).name));
        }
        return;
      }
      e.admit_wait.pop_front();
      reservation_[static_cast<std::size_t>(id)] = full_kv(d, r);
      e.kv_held += reservation_[static_cast<std::size_t>(id)];
      ++e.reserved;
      const double start = std::max(now_, e.hop_free[2]);
      const double done = start + hop_time(cluster_.link, 3, transfer_bytes(r));
      e.hop_free[2] = done;
      push(done, kHop3Done, id);
    }
  }

  void on_hop3_done(std::int64_t id) {
    Request& r = req(id);
    r.kv_transfer_end = now_;
    const auto d = static_cast<std::size_t>(r.d_instance);
    trace(now_, "kv_transfer_end", id, r.d_instance);
    engines_[d].ready.push_back(id);
    if (engines_[d].op == Op::kIdle) start_decode_step(d);
  }

  bool start_decode_step(std::size_t i) {
    Engine& e = engines_[i];
    if (e.op != Op::kIdle) return false;
    for (std::int64_t id : e.ready) e.running.push_back(id);
    e.ready.clear();
    if (e.running.empty()) return false;
    std::int64_t context = 0;
    for (std::int64_t id : e.running) {
      Request& r = req(id);
      context += r.input_len + r.tokens_emitted;
      if (r.decode_start < 0) {
        r.decode_start = now_;
        trace(now_, "decode_start", id, static_cast<std::int64_t>(i));
      }
    }
    const auto n = static_cast<std::int64_t>(e.running.size());
    e.batch = e.running;
    e.op = Op::kDecode;
    e.op_start = now_;
    e.op_activation = decode_activation(n);
    const double latency = decode_step_cost(gpu(i), model_, strategy(i), n, context).latency;
    push(now_ + latency, kDecodeStepDone, static_cast<std::int64_t>(i));
    return true;
  }

  void on_decode_done(std::size_t i) {
    Engine& e = engines_[i];
    e.busy_time += now_ - e.op_start;
    e.op = Op::kIdle;
    e.op_activation = 0;
    const std::vector<std::int64_t> batch = std::move(e.batch);
    e.batch.clear();
    std::vector<std::int64_t> still_running;
    for (std::int64_t id : batch) {
      Request& r = req(id);
      ++r.tokens_emitted;
      r.token_times.push_back(now_);
      e.load -= 1.0;
      if (r.tokens_emitted == r.output_len) {
        release(i, id);
        finish(id);
      } else {
        still_running.push_back(id);
      }
    }
    e.running = std::move(still_running);
    if (colocated_) {
      next_colocated(i);
    } else {
      try_admit(i);
      start_decode_step(i);
    }
  }

  // Prefill first, then a decode step, at every step boundary.
  void next_colocated(std::size_t i) {
    if (engines_[i].op != Op::kIdle) return;
    if (try_prefill(i)) return;
    start_decode_step(i);
  }

  void release(std::size_t i, std::int64_t id) {
    Engine& e = engines_[i];
    e.kv_held -= reservation_[static_cast<std::size_t>(id)];
    reservation_[static_cast<std::size_t>(id)] = 0;
    --e.reserved;
    if (e.reserved == 0) e.kv_held = 0;  // drop accumulated rounding
  }

  void finish(std::int64_t id) {
    Request& r = req(id);
    r.finish_time = now_;
    trace(now_, "finish", id, r.d_instance >= 0 ? r.d_instance : r.p_instance);
    check_causality(r);
  }

  void check_causality(const Request& r) const {
    auto fail = [&](const char* what) { breach(fmt::format("request {}: {}", r.id, what)); };
    if (!(r.prefill_start >= r.arrival_time)) fail("prefill started before arrival");
    if (!(r.prefill_end >= r.prefill_start)) fail("prefill ended before it started");
    if (r.first_token_time != r.prefill_end) fail("first token not at prefill completion");
    if (r.output_len > 1) {
      if (!(r.kv_transfer_start >= r.prefill_end)) fail("KV transfer before prefill completion");
      if (!(r.kv_transfer_end >= r.kv_transfer_start)) fail("KV transfer ends before it starts");
      if (!(r.decode_start >= r.kv_transfer_end)) fail("decode before KV arrived");
    }
    if (static_cast<std::int64_t>(r.token_times.size()) != r.output_len ||
        r.tokens_emitted != r.output_len) {
      fail("token count differs from output_len");
    }
    for (std::size_t k = 1; k < r.token_times.size(); ++k) {
      if (!(r.token_times[k] > r.token_times[k - 1])) fail("token times not increasing");
    }
    if (r.finish_time != r.token_times.back()) fail("finish time differs from last token");
  }

  void check_instances() const {
    for (std::size_t i = 0; i < engines_.size(); ++i) {
      const Engine& e = engines_[i];
      if (e.in_use() > e.capacity * (1.0 + kVramSlack)) {
        breach(fmt::format("instance {} uses {} B of {} B VRAM", i, e.in_use(), e.capacity));
      }
      if (e.op != Op::kIdle) continue;
      const bool prefill_ready = !e.queue.empty() && !admissible_prefill(i).empty();
      const bool decode_ready = !e.running.empty() || !e.ready.empty();
      const bool admit_ready =
          !e.admit_wait.empty() && reservation_fits(i, requests_[static_cast<std::size_t>(
                                                          e.admit_wait.front())]);
      if (prefill_ready || decode_ready || admit_ready) {
        breach(fmt::format("instance {} idle with admissible work", i));
      }
    }
  }

  const Cluster& cluster_;
  const ModelSpec& model_;
  const WorkloadSpec& slo_;
  const SimOptions& options_;
  const bool colocated_;
  std::vector<Request> requests_;
  std::vector<Engine> engines_;
  std::vector<double> reservation_;  // per request, bytes held on its current owner
  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0;
  double transfer_bytes_per_token_ = 0;
  std::vector<TraceRecord> trace_;
};

}  // namespace

SimResult run(const Cluster& cluster, std::vector<Request> arrivals, const WorkloadSpec& slo,
              const SimOptions& options) {
  return Simulator(cluster, std::move(arrivals), slo, options, false).run();
}

SimResult run_colocated(const Cluster& cluster, std::vector<Request> arrivals,
                        const WorkloadSpec& slo, const SimOptions& options) {
  return Simulator(cluster, std::move(arrivals), slo, options, true).run();
}

SimMetrics summarize(const std::vector<Request>& requests, const WorkloadSpec& slo,
                     std::vector<double> busy_time) {
  SimMetrics m;
  m.arrived = static_cast<std::int64_t>(requests.size());
  std::vector<double> ttft;
  std::vector<double> tpot;
  double transfer_sum = 0;
  std::int64_t transfers = 0;
  for (const auto& r : requests) {
    if (r.finish_time < 0) continue;
    ++m.completed;
    m.completed_tokens += r.tokens_emitted;
    m.makespan = std::max(m.makespan, r.finish_time);
    ttft.push_back(r.ttft());
    if (r.output_len > 1) tpot.push_back(r.tpot());
    if (r.ttft() <= slo.ttft_slo && r.tpot() <= slo.tpot_slo) ++m.slo_met;
    if (r.kv_transfer_start >= 0 && r.kv_transfer_end >= 0) {
      transfer_sum += r.kv_transfer_end - r.kv_transfer_start;
      ++transfers;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  m.ttft_mean = mean(ttft);
  m.ttft_p50 = percentile(ttft, 0.50);
  m.ttft_p99 = percentile(ttft, 0.99);
  m.tpot_mean = mean(tpot);
  m.tpot_p99 = percentile(tpot, 0.99);
  m.kv_transfer_time_mean = transfers > 0 ? transfer_sum / static_cast<double>(transfers) : 0.0;
  if (m.makespan > 0) {
    m.throughput = static_cast<double>(m.completed_tokens) / m.makespan;
    m.goodput = static_cast<double>(m.slo_met) / m.makespan;
    m.completed_rate = static_cast<double>(m.completed) / m.makespan;
  }
  for (double& b : busy_time) b = m.makespan > 0 ? b / m.makespan : 0.0;
  m.busy_fraction = std::move(busy_time);
  return m;
}

double relative_delta(double value, double base) {
  if (base == 0) return value == 0 ? 0.0 : std::copysign(INFINITY, value);
  return (value - base) / base;
}

std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, SimMetrics>>& runs) {
  std::vector<ComparisonRow> rows;
  if (runs.empty()) return rows;
  const SimMetrics& base = runs.front().second;
  for (const auto& [label, m] : runs) {
    ComparisonRow row{label, m};
    row.throughput_delta = relative_delta(m.throughput, base.throughput);
    row.goodput_delta = relative_delta(m.goodput, base.goodput);
    row.ttft_mean_delta = relative_delta(m.ttft_mean, base.ttft_mean);
    row.tpot_mean_delta = relative_delta(m.tpot_mean, base.tpot_mean);
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const TransferLink& link) {
  return json{{"bandwidth", link.bandwidth},
              {"discount", link.discount},
              {"per_hop_overhead", link.per_hop_overhead},
              {"host_copy_bandwidth", link.host_copy_bandwidth}};
}

TransferLink link_from_json(const json& node, const std::string& path) {
  TransferLink link;
  link.bandwidth = jf::number(node, path, "bandwidth");
  link.discount = jf::number_or(node, path, "discount", link.discount);
  link.per_hop_overhead = jf::number_or(node, path, "per_hop_overhead", link.per_hop_overhead);
  link.host_copy_bandwidth =
      jf::number_or(node, path, "host_copy_bandwidth", link.bandwidth);
  validate(link);
  return link;
}

json to_json(const SimMetrics& m) {
  return json{{"arrived", m.arrived},
              {"completed", m.completed},
              {"completed_tokens", m.completed_tokens},
              {"slo_met", m.slo_met},
              {"makespan", m.makespan},
              {"ttft_mean", m.ttft_mean},
              {"ttft_p50", m.ttft_p50},
              {"ttft_p99", m.ttft_p99},
              {"tpot_mean", m.tpot_mean},
              {"tpot_p99", m.tpot_p99},
              {"throughput", m.throughput},
              {"goodput", m.goodput},
              {"completed_rate", m.completed_rate},
              {"kv_transfer_time_mean", m.kv_transfer_time_mean},
              {"busy_fraction", m.busy_fraction}};
}

SimMetrics metrics_from_json(const json& node, const std::string& path) {
  SimMetrics m;
  m.arrived = jf::integer(node, path, "arrived");
  m.completed = jf::integer(node, path, "completed");
  m.completed_tokens = jf::integer(node, path, "completed_tokens");
  m.slo_met = jf::integer(node, path, "slo_met");
  m.makespan = jf::number(node, path, "makespan");
  m.ttft_mean = jf::number(node, path, "ttft_mean");
  m.ttft_p50 = jf::number(node, path, "ttft_p50");
  m.ttft_p99 = jf::number(node, path, "ttft_p99");
  m.tpot_mean = jf::number(node, path, "tpot_mean");
  m.tpot_p99 = jf::number(node, path, "tpot_p99");
  m.throughput = jf::number(node, path, "throughput");
  m.goodput = jf::number(node, path, "goodput");
  m.completed_rate = jf::number(node, path, "completed_rate");
  m.kv_transfer_time_mean = jf::number(node, path, "kv_transfer_time_mean");
  const json& busy = jf::require(node, path, "busy_fraction");
  if (!busy.is_array()) throw Error(ErrorCode::kSchema, path + ".busy_fraction: expected an array");
  for (const auto& b : busy) {
    if (!b.is_number()) throw Error(ErrorCode::kSchema, path + ".busy_fraction: expected numbers");
    m.busy_fraction.push_back(b.get<double>());
  }
  return m;
}

json to_json(const TraceRecord& record) {
  return json{{"time", record.time},
              {"event", record.event},
              {"request", record.request},
              {"instance", record.instance}};
}

}  // namespace hetpd
