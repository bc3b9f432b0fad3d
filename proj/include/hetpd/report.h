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

// Row-oriented report output. Each row is an ordered JSON object; every row
// of one report shares the key order of the first.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetpd/cluster_sim.h"
#include "hetpd/scenario.h"

namespace hetpd {

enum class Format { kTable, kCsv, kJsonl };

std::optional<Format> parse_format(std::string_view name);
std::string_view file_extension(Format format);

using Row = nlohmann::ordered_json;

std::string render(const std::vector<Row>& rows, Format format);

Row metrics_row(const std::string& label, const SimMetrics& metrics,
                const SweepPoint& point = {});
Row comparison_row(const std::string& case_label, const ComparisonRow& row);

}  // namespace hetpd
