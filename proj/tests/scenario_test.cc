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

#include <gtest/gtest.h>

#include "fixtures.h"
#include "hetpd/report.h"

namespace hetpd {
namespace {

using nlohmann::json;
using testing::error_code;

json base_doc() {
  return json{{"catalog", (testing::data_dir() / "catalog.json").string()},
              {"model", "llama2-7b"},
              {"workload", "chat-short"},
              {"duration", 5},
              {"deployments",
               json::array({json{{"label", "1P1D"}, {"p_gpu", "gpu-b"}, {"d_gpu", "gpu-a"}}})}};
}

TEST(Scenario, ShippedScenariosAreSound) {
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(testing::data_dir() / "scenarios")) {
    if (entry.path().extension() != ".json") continue;
    const Scenario s = load_scenario_file(entry.path());
    EXPECT_TRUE(check_scenario(s).empty()) << entry.path();
    EXPECT_FALSE(s.deployments.empty());
    ++n;
  }
  EXPECT_GE(n, 5);
}

TEST(Scenario, SweepPointsFirstAxisOutermost) {
  const auto points = sweep_points({{"input_len", {1, 2}}, {"output_len", {10, 20, 30}}});
  ASSERT_EQ(points.size(), 6u);
  EXPECT_EQ(points[0].values[0].second, 1);
  EXPECT_EQ(points[0].values[1].second, 10);
  EXPECT_EQ(points[1].values[1].second, 20);
  EXPECT_EQ(points[3].values[0].second, 2);
  EXPECT_EQ(sweep_points({}).size(), 1u);
}

TEST(Scenario, ApplyPoint) {
  WorkloadSpec w = testing::chat();
  Deployment d;
  apply_point({{{"input_len", 64}, {"qps", 7.5}, {"d_count", 3}, {"tpot_slo", 0.2}}}, w, d);
  EXPECT_EQ(w.input_len, 64);
  EXPECT_EQ(w.qps, 7.5);
  EXPECT_EQ(w.tpot_slo, 0.2);
  EXPECT_EQ(d.d_count, 3);
  EXPECT_EQ(error_code([&] { apply_point({{{"d_count", 1.5}}}, w, d); }), ErrorCode::kSchema);
}

TEST(Scenario, SweepIsOrderedAndThreadIndependent) {
  json doc = base_doc();
  doc["sweep"] = json::array({json{{"axis", "input_len"}, {"values", {128, 512}}},
                              json{{"axis", "qps"}, {"values", {1, 2, 4}}}});
  const Scenario s = load_scenario(doc, ".");
  const auto serial = run_sweep(s, 1);
  const auto parallel = run_sweep(s, 4);
  ASSERT_EQ(serial.size(), 6u);
  ASSERT_EQ(parallel.size(), 6u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].metrics, parallel[i].metrics);
    EXPECT_EQ(serial[i].point.values, parallel[i].point.values);
  }
  EXPECT_EQ(serial[4].point.values[0].second, 512);
  EXPECT_EQ(serial[4].point.values[1].second, 2);
}

TEST(Scenario, CompareCasesAndColocatedPools) {
  json doc = base_doc();
  doc["deployments"].push_back(
      json{{"label", "mixed"}, {"mode", "colocated"}, {"gpus", {"gpu-b", "gpu-a"}}});
  doc["deployments"].push_back(
      json{{"label", "coloc"}, {"mode", "colocated"}, {"gpu", "gpu-a"}, {"count", 2}});
  doc["cases"] = json::array({json{{"label", "a"}, {"workload", "chat-short"}},
                              json{{"label", "b"}, {"workload", "long-context"}}});
  const Scenario s = load_scenario(doc, ".");
  EXPECT_TRUE(check_scenario(s).empty());
  EXPECT_EQ(resolve(s, s.deployments[1], s.workload).cluster.instances[1].gpu.name, "gpu-a");
  const auto cases = run_compare(s);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[1].label, "b");
  ASSERT_EQ(cases[0].rows.size(), 3u);
  EXPECT_EQ(cases[0].rows[0].throughput_delta, 0);
  EXPECT_EQ(cases[0].rows[2].label, "coloc");
}

TEST(Scenario, PlannedDeployment) {
  json doc = base_doc();
  doc["deployments"] = json::array({json{{"label", "auto"}, {"plan", "auto"}}});
  const Scenario s = load_scenario(doc, ".");
  const ResolvedDeployment r = resolve(s, s.deployments[0], s.workload);
  ASSERT_TRUE(r.plan.has_value());
  EXPECT_EQ(r.cluster.count(InstanceRole::kPrefill), r.plan->p_count);
  EXPECT_EQ(r.cluster.count(InstanceRole::kDecode), r.plan->d_count);
}

TEST(Scenario, Problems) {
  json doc = base_doc();
  doc["deployments"][0]["p_gpu"] = "gpu-z";
  EXPECT_FALSE(check_scenario(load_scenario(doc, ".")).empty());

  doc = base_doc();
  doc["sweep"] = json::array({json{{"axis", "colour"}, {"values", {1}}}});
  EXPECT_NE(error_code([&] { load_scenario(doc, "."); }), std::nullopt);

  doc = base_doc();
  doc.erase("model");
  EXPECT_EQ(error_code([&] { load_scenario(doc, "."); }), ErrorCode::kSchema);

  doc = base_doc();
  doc["catalog"] = "missing.json";
  EXPECT_EQ(error_code([&] { load_scenario(doc, "/nonexistent"); }), ErrorCode::kIo);

  doc = base_doc();
  doc["deployments"][0]["mode"] = "hybrid";
  EXPECT_EQ(error_code([&] { load_scenario(doc, "."); }), ErrorCode::kSchema);
}

TEST(Report, Formats) {
  EXPECT_EQ(parse_format("csv"), Format::kCsv);
  EXPECT_EQ(parse_format("json-lines"), Format::kJsonl);
  EXPECT_EQ(parse_format("xml"), std::nullopt);
  std::vector<Row> rows(2);
  rows[0]["label"] = "a";
  rows[0]["x"] = 1.5;
  rows[1]["label"] = "b,c";
  rows[1]["x"] = 2;
  const std::string csv = render(rows, Format::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,x");
  EXPECT_NE(csv.find("\"b,c\""), std::string::npos);
  const std::string jl = render(rows, Format::kJsonl);
  EXPECT_EQ(json::parse(jl.substr(0, jl.find('\n')))["x"], 1.5);
  EXPECT_NE(render(rows, Format::kTable).find("label"), std::string::npos);
}

}  // namespace
}  // namespace hetpd
