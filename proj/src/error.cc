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

#include "hetpd/error.h"

namespace hetpd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kInvariant: return "invariant";
    case ErrorCode::kIncompatibleStrategy: return "incompatible-strategy";
    case ErrorCode::kNoCompatibleStrategy: return "no-compatible-strategy";
    case ErrorCode::kWeightsDoNotFit: return "weights-do-not-fit";
    case ErrorCode::kNoFeasibleBatch: return "no-feasible-batch";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kQpsUnreachable: return "qps-unreachable";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kUnsupportedDtype: return "unsupported-dtype";
    case ErrorCode::kMissingShard: return "missing-shard";
    case ErrorCode::kPipelineMismatch: return "pipeline-mismatch";
    case ErrorCode::kSimTimeOverflow: return "sim-time-overflow";
    case ErrorCode::kInvariantBreach: return "invariant-breach";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace hetpd
