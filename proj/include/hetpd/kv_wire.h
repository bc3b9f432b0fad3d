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

// Shard file format, all integers little-endian:
//
//   offset  size  field
//        0     8  magic "HPDKVSH1"
//        8     4  u32 format version (1)
//       12     4  u32 tp_rank
//       16     4  u32 tp_degree
//       20     4  u32 head_begin
//       24     4  u32 head_end (exclusive)
//       28     4  u32 num_layers
//       32     4  u32 head_dim
//       36     4  u32 valid_tokens
//       40     4  u32 block_size
//       44     4  u32 dtype_bytes
//       48     4  u8[4] axis_order, outermost first
//                 (0 = layer, 1 = kv_head, 2 = token, 3 = head_dim)
//       52     4  u32 reserved, 0
//       56     8  u64 payload length in bytes
//       64     n  payload
//
// Payload length must equal layers * heads * padded_tokens * head_dim *
// dtype_bytes, with tokens padded up to whole blocks.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "hetpd/kv_align.h"

namespace hetpd {

inline constexpr std::size_t kShardHeaderBytes = 64;

std::vector<std::byte> encode_shard(const KvShard& shard);
// Throws Error(kSchema) for a bad header and Error(kLengthMismatch) for a
// truncated or oversized payload.
KvShard decode_shard(std::span<const std::byte> bytes);

void write_shard_file(const std::filesystem::path& path, const KvShard& shard);
KvShard read_shard_file(const std::filesystem::path& path);

}  // namespace hetpd
