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

#include "hetpd/report.h"

#include <fmt/format.h>

#include <algorithm>

namespace hetpd {

std::optional<Format> parse_format(std::string_view name) {
  if (name == "table") return Format::kTable;
  if (name == "csv") return Format::kCsv;
  if (name == "jsonl" || name == "json-lines") return Format::kJsonl;
  return std::nullopt;
}

std::string_view file_extension(Format format) {
  switch (format) {
    case Format::kTable: return ".txt";
    case Format::kCsv: return ".csv";
    case Format::kJsonl: return ".jsonl";
  }
  return "";
}

namespace {

std::string cell(const Row& value, bool for_table) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) {
    return for_table ? fmt::format("{:.6g}", value.get<double>())
                     : fmt::format("{}", value.get<double>());
  }
  if (value.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (i) out += ';';
      out += cell(value[i], for_table);
    }
    return out;
  }
  return value.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string render(const std::vector<Row>& rows, Format format) {
  std::string out;
  if (format == Format::kJsonl) {
    for (const auto& row : rows) out += row.dump() + "\n";
    return out;
  }
  if (rows.empty()) return out;
  std::vector<std::string> keys;
  for (const auto& item : rows.front().items()) keys.push_back(item.key());

  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> line;
    for (const auto& key : keys) {
      line.push_back(row.contains(key) ? cell(row.at(key), format == Format::kTable) : "");
    }
    cells.push_back(std::move(line));
  }
  if (format == Format::kCsv) {
    for (std::size_t k = 0; k < keys.size(); ++k) out += (k ? "," : "") + csv_escape(keys[k]);
    out += "\n";
    for (const auto& line : cells) {
      for (std::size_t k = 0; k < line.size(); ++k) out += (k ? "," : "") + csv_escape(line[k]);
      out += "\n";
    }
    return out;
  }
  std::vector<std::size_t> width(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    width[k] = keys[k].size();
    for (const auto& line : cells) width[k] = std::max(width[k], line[k].size());
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      out += fmt::format("{}{:<{}}", k ? "  " : "", line[k], width[k]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  };
  emit(keys);
  for (const auto& line : cells) emit(line);
  return out;
}

Row metrics_row(const std::string& label, const SimMetrics& m, const SweepPoint& point) {
  Row row;
  row["label"] = label;
  for (const auto& [axis, v] : point.values) row[axis] = v;
  const nlohmann::json fields = to_json(m);
  // Keep a stable, reader-friendly order rather than the alphabetical one.
  for (const char* key : {"arrived", "completed", "completed_tokens", "slo_met", "makespan",
                          "ttft_mean", "ttft_p50", "ttft_p99", "tpot_mean", "tpot_p99",
                          "throughput", "goodput", "completed_rate", "kv_transfer_time_mean",
                          "busy_fraction"}) {
    row[key] = fields.at(key);
  }
  return row;
}

Row comparison_row(const std::string& case_label, const ComparisonRow& r) {
  Row row;
  row["case"] = case_label;
  row["label"] = r.label;
  row["throughput"] = r.metrics.throughput;
  row["throughput_delta"] = r.throughput_delta;
  row["goodput"] = r.metrics.goodput;
  row["goodput_delta"] = r.goodput_delta;
  row["ttft_mean"] = r.metrics.ttft_mean;
  row["ttft_mean_delta"] = r.ttft_mean_delta;
  row["tpot_mean"] = r.metrics.tpot_mean;
  row["tpot_mean_delta"] = r.tpot_mean_delta;
  row["completed"] = r.metrics.completed;
  row["makespan"] = r.metrics.makespan;
  return row;
}

}  // namespace hetpd
