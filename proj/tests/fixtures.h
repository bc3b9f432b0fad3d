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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetpd/catalog.h"
#include "hetpd/cost_model.h"
#include "hetpd/error.h"
#include "hetpd/planner.h"
#include "oracles.h"

#ifndef HETPD_DATA_DIR
#error "HETPD_DATA_DIR must point at the repo data/ directory"
#endif

namespace hetpd::testing {

inline std::filesystem::path data_dir() { return HETPD_DATA_DIR; }

// Code of the hetpd::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Same numbers as data/catalog.json.
inline GpuSpec gpu_a() {
  GpuSpec g;
  g.name = "gpu-a";
  g.vendor = "vendor-a";
  g.compute_rate = 312e12;
  g.vram_capacity = 80e9;
  g.vram_bandwidth = 2.039e12;
  g.interconnect_bandwidth = 300e9;
  g.compute_discount = 0.5;
  g.vram_bw_discount = 0.8;
  g.comm_discount = 0.8;
  g.kv_block_size = 16;
  g.layout_order = {KvAxis::kLayer, KvAxis::kToken, KvAxis::kKvHead, KvAxis::kHeadDim};
  return g;
}

inline GpuSpec gpu_b() {
  GpuSpec g;
  g.name = "gpu-b";
  g.vendor = "vendor-b";
  g.compute_rate = 512e12;
  g.vram_capacity = 32e9;
  g.vram_bandwidth = 1.2e12;
  g.interconnect_bandwidth = 200e9;
  g.compute_discount = 0.5;
  g.vram_bw_discount = 0.8;
  g.comm_discount = 0.8;
  g.kv_block_size = 64;
  g.layout_order = {KvAxis::kKvHead, KvAxis::kLayer, KvAxis::kToken, KvAxis::kHeadDim};
  return g;
}

inline WorkloadSpec chat(std::int64_t input = 256, std::int64_t output = 256, double qps = 2) {
  WorkloadSpec w;
  w.name = "chat";
  w.input_len = input;
  w.output_len = output;
  w.qps = qps;
  w.ttft_slo = 1.0;
  w.tpot_slo = 0.1;
  return w;
}

struct RandomCase {
  GpuSpec p_gpu;
  GpuSpec d_gpu;
  ModelSpec model;
  WorkloadSpec workload;
  SearchSpace space;
  CostOptions cost;
};

template <typename T>
T choose(std::mt19937_64& rng, const std::vector<T>& xs) {
  return xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)];
}

template <typename T>
std::vector<T> nonempty_subset(std::mt19937_64& rng, const std::vector<T>& xs) {
  std::vector<T> out;
  while (out.empty()) {
    for (const T& x : xs) {
      if (rng() & 1) out.push_back(x);
    }
  }
  return out;
}

inline GpuSpec random_gpu(std::mt19937_64& rng, const std::string& name) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(rng); };
  GpuSpec g;
  g.name = name;
  g.vendor = "v";
  g.compute_rate = u(50, 1000) * 1e12;
  g.vram_capacity = choose<double>(rng, {16e9, 24e9, 32e9, 48e9, 80e9});
  g.vram_bandwidth = u(0.5, 3.5) * 1e12;
  g.interconnect_bandwidth = u(50, 900) * 1e9;
  g.compute_discount = u(0.3, 1.0);
  g.vram_bw_discount = u(0.3, 1.0);
  g.comm_discount = u(0.3, 1.0);
  g.kv_block_size = choose<std::int64_t>(rng, {1, 8, 16, 32, 64});
  return g;
}

// Random GPUs, model, workload and search space. SLOs are drawn around the
// batch-1 latencies of tp = 1 so that some strategies pass and some fail.
inline RandomCase random_case(std::mt19937_64& rng) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(rng); };
  RandomCase c;
  c.p_gpu = random_gpu(rng, "p");
  c.d_gpu = random_gpu(rng, "d");

  ModelSpec& m = c.model;
  m.name = "rand";
  m.num_kv_heads = choose<std::int64_t>(rng, {8, 16, 32});
  m.num_attention_heads = m.num_kv_heads * choose<std::int64_t>(rng, {1, 2, 4});
  m.head_dim = choose<std::int64_t>(rng, {64, 128});
  m.hidden_dim = m.num_attention_heads * m.head_dim;
  m.num_layers = choose<std::int64_t>(rng, {16, 24, 32, 40});
  m.ffn_dim = static_cast<std::int64_t>(u(2.5, 3.5) * static_cast<double>(m.hidden_dim)) / 256 * 256;
  m.vocab_size = choose<std::int64_t>(rng, {32000, 50000});
  if (rng() % 4 == 0) {
    m.num_experts = 8;
    m.experts_per_token = 2;
  }

  WorkloadSpec& w = c.workload;
  w.name = "rand";
  w.input_len = choose<std::int64_t>(rng, {128, 512, 1024, 2048, 4096});
  w.output_len = choose<std::int64_t>(rng, {16, 128, 512, 1024});
  w.qps = u(0.5, 20);
  const ParallelStrategy one{};
  w.ttft_slo = prefill_cost(c.p_gpu, m, one, 1, w.input_len).latency * u(0.1, 2.0);
  w.tpot_slo = decode_cost(c.d_gpu, m, one, 1, w.input_len + w.output_len / 2).latency *
               u(0.3, 3.0);

  SearchSpace& s = c.space;
  s.tp_choices = nonempty_subset<std::int64_t>(rng, {1, 2, 4, 8});
  s.pp_choices = nonempty_subset<std::int64_t>(rng, {1, 2, 4});
  s.dp_choices = nonempty_subset<std::int64_t>(rng, {1, 2});
  s.ep_choices = nonempty_subset<std::int64_t>(rng, {1, 2, 4, 8});
  s.max_gpus_per_instance = choose<std::int64_t>(rng, {4, 8, 16});

  c.cost.alignment_bytes = choose<std::int64_t>(rng, {1, 256, 4096});
  return c;
}

}  // namespace hetpd::testing
