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

// Host-side KV-cache realignment between a producer (prefill) and a consumer
// (decode) that disagree on tensor-parallel degree, tensor layout,
// paged-attention block size, or element type.
//
// A shard holds the KV of one tp rank: every layer, a contiguous range of kv
// heads, and the token axis padded up to whole blocks. Rank r of a degree-tp
// group owns heads [r * H / tp, (r + 1) * H / tp). Padding tokens are zero and
// never read as data; only the first `valid_tokens` tokens carry values.
//
// Elements are opaque `dtype_bytes`-wide little-endian words; every transform
// except cast_dtype moves them without interpretation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hetpd/catalog.h"
#include "hetpd/cost_model.h"

namespace hetpd {

struct KvLayout {
  AxisOrder axis_order = kCanonicalAxisOrder;  // outermost axis first
  std::int64_t block_size = 1;                 // tokens per block
  std::int64_t dtype_bytes = 2;

  bool operator==(const KvLayout&) const = default;
};

void validate(const KvLayout& layout);

// Extents of one shard's payload; `tokens` is already padded to whole blocks.
struct KvShape {
  std::int64_t layers = 0;
  std::int64_t heads = 0;
  std::int64_t tokens = 0;
  std::int64_t head_dim = 0;

  std::int64_t elements() const { return layers * heads * tokens * head_dim; }
  bool operator==(const KvShape&) const = default;
};

std::int64_t padded_tokens(std::int64_t valid_tokens, std::int64_t block_size);

struct HeadRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;  // exclusive

  std::int64_t size() const { return end - begin; }
  bool operator==(const HeadRange&) const = default;
};

// Heads owned by `rank` under head-contiguous sharding.
HeadRange rank_heads(std::int64_t rank, std::int64_t tp_degree, std::int64_t num_kv_heads);

struct KvShard {
  std::int64_t tp_rank = 0;
  std::int64_t tp_degree = 1;
  HeadRange heads;
  std::int64_t num_layers = 0;
  std::int64_t head_dim = 0;
  std::int64_t valid_tokens = 0;
  KvLayout layout;
  std::vector<std::byte> payload;

  KvShape shape() const;
  std::size_t expected_payload_bytes() const;
  bool operator==(const KvShard&) const = default;
};

// Throws Error(kInvariant) or Error(kLengthMismatch).
void validate(const KvShard& shard);

struct FlatKv {
  std::vector<std::byte> data;  // canonical (layer, kv_head, token, head_dim)
  KvLayout layout;              // source layout; restore() with it inverts flatten()
  KvShape shape;
};

FlatKv flatten(const KvShard& shard);

// Lays a canonical buffer out in `target` order. Throws Error(kLengthMismatch)
// when the buffer does not hold exactly shape.elements() elements.
std::vector<std::byte> restore(std::span<const std::byte> canonical, const KvLayout& target,
                               const KvShape& shape);

struct RepartitionEntry {
  std::int64_t src_rank = 0;
  HeadRange src_heads;  // global head indices, inside the source rank's range
  std::int64_t dst_rank = 0;
  std::int64_t dst_head_offset = 0;  // first destination-local head written

  bool operator==(const RepartitionEntry&) const = default;
};

struct RepartitionPlan {
  std::int64_t src_degree = 1;
  std::int64_t dst_degree = 1;
  std::int64_t num_kv_heads = 0;
  std::vector<RepartitionEntry> entries;  // sorted by (dst_rank, src_rank)

  bool operator==(const RepartitionPlan&) const = default;
};

// Destination rank d receives the intersection of its head range with every
// source range it overlaps. tp_src > tp_dst merges whole source shards,
// tp_src < tp_dst splits them, and degrees that do not divide each other get
// the general intersection. Throws Error(kInvariant) if a degree does not
// divide num_kv_heads.
RepartitionPlan plan_repartition(std::int64_t tp_src, std::int64_t tp_dst,
                                 std::int64_t num_kv_heads);

// Same, taking whole strategies; differing pp degrees are rejected with
// Error(kPipelineMismatch) because layer re-slicing is not supported.
RepartitionPlan plan_repartition(const ParallelStrategy& src, const ParallelStrategy& dst,
                                 std::int64_t num_kv_heads);

// Checks coverage (every destination head written exactly once) and that no
// entry crosses a source shard boundary.
void validate(const RepartitionPlan& plan);

// Produces the destination shards in `target` layout and block size. The
// source element type must equal target.dtype_bytes (cast first).
std::vector<KvShard> apply_repartition(std::span<const KvShard> shards,
                                       const RepartitionPlan& plan, const KvLayout& target);

struct KvDims {
  std::int64_t layers = 0;
  std::int64_t heads = 0;
  std::int64_t head_dim = 0;
};

// Re-pads the token axis for a new block size. The two layouts must differ
// only in block_size.
std::vector<std::byte> remap_block_size(std::span<const std::byte> payload,
                                        const KvLayout& src, const KvLayout& dst,
                                        const KvDims& dims, std::int64_t valid_tokens);

// IEEE binary16 <-> binary32. Widening is exact; narrowing rounds to nearest
// even. Throws Error(kUnsupportedDtype) for any pair outside {2, 4}.
std::vector<std::byte> cast_dtype(std::span<const std::byte> payload, std::int64_t src_bytes,
                                  std::int64_t dst_bytes);

float half_to_float(std::uint16_t bits);
std::uint16_t float_to_half(float value);

// Splits a canonical full-head tensor into tp shards laid out in `layout`.
// `canonical` holds (layers, num_kv_heads, padded tokens, head_dim) elements.
std::vector<KvShard> make_shards(std::span<const std::byte> canonical, std::int64_t num_layers,
                                 std::int64_t num_kv_heads, std::int64_t head_dim,
                                 std::int64_t valid_tokens, std::int64_t tp_degree,
                                 const KvLayout& layout);

}  // namespace hetpd
