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

#include "hetpd/catalog.h"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "fixtures.h"
#include "hetpd/error.h"

namespace hetpd {
namespace {

using nlohmann::json;
using testing::error_code;

json small_catalog() {
  return json::parse(R"({
    "gpus": [{"name": "g", "compute_rate": 1e14, "vram_capacity": 4e10,
              "vram_bandwidth": 1e12, "interconnect_bandwidth": 1e11,
              "compute_discount": 0.5, "vram_bw_discount": 0.8, "comm_discount": 0.9,
              "kv_block_size": 16, "layout_order": ["token", "layer", "kv_head", "head_dim"]}],
    "models": [{"name": "m", "num_layers": 2, "hidden_dim": 64, "num_attention_heads": 8,
                "num_kv_heads": 4, "head_dim": 8, "ffn_dim": 128, "vocab_size": 100}],
    "workloads": [{"name": "w", "input_len": 16, "output_len": 4, "qps": 1,
                   "ttft_slo": 0.5, "tpot_slo": 0.05, "arrival_process": "poisson"}]
  })");
}

TEST(Catalog, ShippedCatalogLoads) {
  const Catalog c = load_catalog_file(testing::data_dir() / "catalog.json");
  EXPECT_EQ(c.gpu("gpu-a"), testing::gpu_a());
  EXPECT_EQ(c.gpu("gpu-b"), testing::gpu_b());
  EXPECT_EQ(c.model("llama2-7b"), oracle::llama2_7b());
  EXPECT_GE(c.workloads.size(), 2u);
}

TEST(Catalog, Llama2DerivedConstants) {
  const ModelStats s = derive_stats(oracle::llama2_7b());
  EXPECT_EQ(s.kv_bytes_per_token, oracle::kLlama2KvBytesPerToken);
  EXPECT_EQ(s.kv_bytes_per_token, 524288);
  EXPECT_EQ(s.param_count, oracle::kLlama2Params);
  EXPECT_EQ(s.active_param_count, s.param_count);
  EXPECT_EQ(s.expert_param_count, 0);
  EXPECT_EQ(s.weight_bytes_total, oracle::kLlama2WeightBytes);
  EXPECT_NEAR(static_cast<double>(s.weight_bytes_total), 13.48e9, 0.02 * 13.48e9);
}

TEST(Catalog, MoeCountsEveryExpertButActivatesTopK) {
  ModelSpec m = oracle::llama2_7b();
  m.num_experts = 8;
  m.experts_per_token = 2;
  const ModelStats s = derive_stats(m);
  EXPECT_DOUBLE_EQ(static_cast<double>(s.param_count), oracle::all_params(m));
  EXPECT_DOUBLE_EQ(static_cast<double>(s.active_param_count), oracle::active_params(m));
  EXPECT_EQ(s.expert_param_count, 32LL * 8 * 3 * 4096 * 11008);
}

TEST(Catalog, ParsesEveryField) {
  const Catalog c = load_catalog(small_catalog());
  const GpuSpec& g = c.gpu("g");
  EXPECT_EQ(g.kv_block_size, 16);
  EXPECT_EQ(g.layout_order[0], KvAxis::kToken);
  EXPECT_EQ(g.vendor, "");
  EXPECT_EQ(c.model("m").num_experts, 1);
  EXPECT_EQ(c.model("m").dtype_bytes, 2);
  EXPECT_EQ(c.workload("w").arrival_process, ArrivalProcess::kPoisson);
}

TEST(Catalog, JsonRoundTrip) {
  const Catalog c = load_catalog(small_catalog());
  EXPECT_EQ(load_catalog(to_json(c)), c);
  EXPECT_EQ(parse_catalog(to_json(c).dump()), c);
}

TEST(Catalog, SchemaErrorsNameTheField) {
  json doc = small_catalog();
  doc["gpus"][0].erase("compute_rate");
  try {
    load_catalog(doc);
    FAIL() << "expected a schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
    EXPECT_NE(std::string(e.what()).find("gpus[0].compute_rate"), std::string::npos) << e.what();
  }

  doc = small_catalog();
  doc["models"][0]["num_layers"] = "two";
  EXPECT_EQ(error_code([&] { load_catalog(doc); }), ErrorCode::kSchema);

  doc = small_catalog();
  doc["models"][0]["num_layers"] = 2.5;
  EXPECT_EQ(error_code([&] { load_catalog(doc); }), ErrorCode::kSchema);

  EXPECT_EQ(error_code([] { parse_catalog("{not json"); }), ErrorCode::kSchema);
}

TEST(Catalog, InvariantViolations) {
  auto with = [](auto edit) {
    json doc = small_catalog();
    edit(doc);
    return error_code([&] { load_catalog(doc); });
  };
  EXPECT_EQ(with([](json& d) { d["gpus"][0]["vram_capacity"] = -1; }), ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["gpus"][0]["compute_discount"] = 1.5; }),
            ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["gpus"][0]["kv_block_size"] = 0; }), ErrorCode::kInvariant);
  EXPECT_NE(with([](json& d) {
              d["gpus"][0]["layout_order"] = {"token", "token", "kv_head", "head_dim"};
            }),
            std::nullopt);
  EXPECT_EQ(with([](json& d) { d["models"][0]["num_kv_heads"] = 3; }), ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["models"][0]["experts_per_token"] = 2; }),
            ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["workloads"][0]["qps"] = 0; }), ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["workloads"][0]["output_len"] = 0; }), ErrorCode::kInvariant);
  EXPECT_EQ(with([](json& d) { d["gpus"].push_back(d["gpus"][0]); }), ErrorCode::kInvariant);
}

TEST(Catalog, ZeroSloIsAccepted) {
  json doc = small_catalog();
  doc["workloads"][0]["ttft_slo"] = 0;
  EXPECT_NO_THROW(load_catalog(doc));
}

TEST(Catalog, UnknownNamesThrow) {
  const Catalog c = load_catalog(small_catalog());
  EXPECT_THROW(c.gpu("nope"), Error);
  EXPECT_THROW(c.model("nope"), Error);
  EXPECT_THROW(c.workload("nope"), Error);
}

TEST(Catalog, AxisNames) {
  for (KvAxis a : kCanonicalAxisOrder) EXPECT_EQ(parse_axis(to_string(a)), a);
  EXPECT_EQ(parse_axis("batch"), std::nullopt);
  EXPECT_TRUE(is_permutation(kCanonicalAxisOrder));
  EXPECT_FALSE(is_permutation({KvAxis::kLayer, KvAxis::kLayer, KvAxis::kToken, KvAxis::kHeadDim}));
}

}  // namespace
}  // namespace hetpd
