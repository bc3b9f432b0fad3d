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

#include "hetpd/kv_align.h"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>

#include "hetpd/error.h"

namespace hetpd {

namespace {

using Strides = std::array<std::int64_t, 4>;  // indexed by KvAxis

std::int64_t extent(const KvShape& shape, KvAxis axis) {
  switch (axis) {
    case KvAxis::kLayer: return shape.layers;
    case KvAxis::kKvHead: return shape.heads;
    case KvAxis::kToken: return shape.tokens;
    case KvAxis::kHeadDim: return shape.head_dim;
  }
  return 0;
}

// Element strides for each logical axis when stored in `order`.
Strides strides_for(const AxisOrder& order, const KvShape& shape) {
  Strides strides{};
  std::int64_t running = 1;
  for (int pos = 3; pos >= 0; --pos) {
    strides[static_cast<std::size_t>(order[pos])] = running;
    running *= extent(shape, order[pos]);
  }
  return strides;
}

std::int64_t offset(const Strides& s, std::int64_t l, std::int64_t h, std::int64_t t,
                    std::int64_t d) {
  return l * s[0] + h * s[1] + t * s[2] + d * s[3];
}

// Copies every element with token index < `tokens` from one strided view to
// another. Both views share layer/head/head_dim extents.
void copy_elements(const std::byte* src, const Strides& src_strides, std::byte* dst,
                   const Strides& dst_strides, std::int64_t layers, std::int64_t heads,
                   std::int64_t tokens, std::int64_t head_dim, std::int64_t elem,
                   std::int64_t src_head0 = 0, std::int64_t dst_head0 = 0) {
  for (std::int64_t l = 0; l < layers; ++l) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t t = 0; t < tokens; ++t) {
        for (std::int64_t d = 0; d < head_dim; ++d) {
          const std::int64_t so = offset(src_strides, l, h + src_head0, t, d);
          const std::int64_t dof = offset(dst_strides, l, h + dst_head0, t, d);
          std::memcpy(dst + dof * elem, src + so * elem, static_cast<std::size_t>(elem));
        }
      }
    }
  }
}

}  // namespace

void validate(const KvLayout& layout) {
  if (!is_permutation(layout.axis_order)) {
    throw Error(ErrorCode::kInvariant, "KvLayout: axis_order is not a permutation");
  }
  if (layout.block_size < 1) throw Error(ErrorCode::kInvariant, "KvLayout: block_size must be >= 1");
  if (layout.dtype_bytes < 1) throw Error(ErrorCode::kInvariant, "KvLayout: dtype_bytes must be >= 1");
}

std::int64_t padded_tokens(std::int64_t valid_tokens, std::int64_t block_size) {
  if (valid_tokens <= 0) return 0;
  return (valid_tokens + block_size - 1) / block_size * block_size;
}

HeadRange rank_heads(std::int64_t rank, std::int64_t tp_degree, std::int64_t num_kv_heads) {
  const std::int64_t per_rank = num_kv_heads / tp_degree;
  return {rank * per_rank, (rank + 1) * per_rank};
}

KvShape KvShard::shape() const {
  return {num_layers, heads.size(), padded_tokens(valid_tokens, layout.block_size), head_dim};
}

std::size_t KvShard::expected_payload_bytes() const {
  return static_cast<std::size_t>(shape().elements() * layout.dtype_bytes);
}

void validate(const KvShard& shard) {
  validate(shard.layout);
  if (shard.tp_degree < 1 || shard.tp_rank < 0 || shard.tp_rank >= shard.tp_degree) {
    throw Error(ErrorCode::kInvariant,
                fmt::format("KvShard: rank {} outside degree {}", shard.tp_rank, shard.tp_degree));
  }
  if (shard.heads.begin < 0 || shard.heads.end <= shard.heads.begin) {
    throw Error(ErrorCode::kInvariant, "KvShard: empty or negative head range");
  }
  if (shard.num_layers < 1 || shard.head_dim < 1 || shard.valid_tokens < 0) {
    throw Error(ErrorCode::kInvariant, "KvShard: layers and head_dim must be >= 1");
  }
  if (shard.payload.size() != shard.expected_payload_bytes()) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("KvShard rank {}: payload is {} bytes, shape needs {}", shard.tp_rank,
                            shard.payload.size(), shard.expected_payload_bytes()));
  }
}

FlatKv flatten(const KvShard& shard) {
  validate(shard);
  FlatKv flat;
  flat.layout = shard.layout;
  flat.shape = shard.shape();
  if (shard.layout.axis_order == kCanonicalAxisOrder) {
    flat.data = shard.payload;
    return flat;
  }
  flat.data.resize(shard.payload.size());
  const KvShape& s = flat.shape;
  copy_elements(shard.payload.data(), strides_for(shard.layout.axis_order, s), flat.data.data(),
                strides_for(kCanonicalAxisOrder, s), s.layers, s.heads, s.tokens, s.head_dim,
                shard.layout.dtype_bytes);
  return flat;
}

std::vector<std::byte> restore(std::span<const std::byte> canonical, const KvLayout& target,
                               const KvShape& shape) {
  validate(target);
  const auto expected = static_cast<std::size_t>(shape.elements() * target.dtype_bytes);
  if (canonical.size() != expected) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("restore: buffer is {} bytes, shape needs {}", canonical.size(),
                            expected));
  }
  if (target.axis_order == kCanonicalAxisOrder) {
    return {canonical.begin(), canonical.end()};
  }
  std::vector<std::byte> out(expected);
  copy_elements(canonical.data(), strides_for(kCanonicalAxisOrder, shape), out.data(),
                strides_for(target.axis_order, shape), shape.layers, shape.heads, shape.tokens,
                shape.head_dim, target.dtype_bytes);
  return out;
}

RepartitionPlan plan_repartition(std::int64_t tp_src, std::int64_t tp_dst,
                                 std::int64_t num_kv_heads) {
  for (std::int64_t degree : {tp_src, tp_dst}) {
    if (degree < 1 || num_kv_heads < 1 || num_kv_heads % degree != 0) {
      throw Error(ErrorCode::kInvariant,
                  fmt::format("tp degree {} does not divide num_kv_heads {}", degree,
                              num_kv_heads));
    }
  }
  RepartitionPlan plan{tp_src, tp_dst, num_kv_heads, {}};
  for (std::int64_t d = 0; d < tp_dst; ++d) {
    const HeadRange dst = rank_heads(d, tp_dst, num_kv_heads);
    for (std::int64_t s = 0; s < tp_src; ++s) {
      const HeadRange src = rank_heads(s, tp_src, num_kv_heads);
      const std::int64_t begin = std::max(src.begin, dst.begin);
      const std::int64_t end = std::min(src.end, dst.end);
      if (begin >= end) continue;
      plan.entries.push_back({s, {begin, end}, d, begin - dst.begin});
    }
  }
  validate(plan);
  return plan;
}

RepartitionPlan plan_repartition(const ParallelStrategy& src, const ParallelStrategy& dst,
                                 std::int64_t num_kv_heads) {
  if (src.pp != dst.pp) {
    throw Error(ErrorCode::kPipelineMismatch,
                fmt::format("KV realignment across pipeline degrees is unsupported (pp {} -> {})",
                            src.pp, dst.pp));
  }
  return plan_repartition(src.tp, dst.tp, num_kv_heads);
}

void validate(const RepartitionPlan& plan) {
  std::vector<int> written(static_cast<std::size_t>(plan.num_kv_heads), 0);
  for (const auto& e : plan.entries) {
    if (e.src_rank < 0 || e.src_rank >= plan.src_degree || e.dst_rank < 0 ||
        e.dst_rank >= plan.dst_degree) {
      throw Error(ErrorCode::kInvariant, "RepartitionPlan: rank out of range");
    }
    const HeadRange src = rank_heads(e.src_rank, plan.src_degree, plan.num_kv_heads);
    if (e.src_heads.begin < src.begin || e.src_heads.end > src.end ||
        e.src_heads.size() <= 0) {
      throw Error(ErrorCode::kInvariant, "RepartitionPlan: entry spans two source shards");
    }
    const HeadRange dst = rank_heads(e.dst_rank, plan.dst_degree, plan.num_kv_heads);
    if (dst.begin + e.dst_head_offset != e.src_heads.begin ||
        e.dst_head_offset + e.src_heads.size() > dst.size() || e.dst_head_offset < 0) {
      throw Error(ErrorCode::kInvariant, "RepartitionPlan: entry misplaced in destination");
    }
    for (std::int64_t h = e.src_heads.begin; h < e.src_heads.end; ++h) {
      ++written[static_cast<std::size_t>(h)];
    }
  }
  for (std::size_t h = 0; h < written.size(); ++h) {
    if (written[h] != 1) {
      throw Error(ErrorCode::kInvariant,
                  fmt::format("RepartitionPlan: head {} written {} times", h, written[h]));
    }
  }
}

std::vector<KvShard> apply_repartition(std::span<const KvShard> shards,
                                       const RepartitionPlan& plan, const KvLayout& target) {
  validate(target);
  validate(plan);
  std::vector<const KvShard*> by_rank(static_cast<std::size_t>(plan.src_degree), nullptr);
  for (const auto& shard : shards) {
    if (shard.tp_degree != plan.src_degree) continue;
    validate(shard);
    if (shard.heads != rank_heads(shard.tp_rank, plan.src_degree, plan.num_kv_heads)) {
      throw Error(ErrorCode::kInvariant,
                  fmt::format("shard rank {} holds heads [{}, {}) instead of its own range",
                              shard.tp_rank, shard.heads.begin, shard.heads.end));
    }
    by_rank[static_cast<std::size_t>(shard.tp_rank)] = &shard;
  }
  for (std::int64_t r = 0; r < plan.src_degree; ++r) {
    if (by_rank[static_cast<std::size_t>(r)] == nullptr) {
      throw Error(ErrorCode::kMissingShard,
                  fmt::format("missing source shard for tp rank {} of {}", r, plan.src_degree));
    }
  }
  const KvShard& first = *by_rank.front();
  for (const KvShard* shard : by_rank) {
    if (shard->num_layers != first.num_layers || shard->head_dim != first.head_dim ||
        shard->valid_tokens != first.valid_tokens ||
        shard->layout.dtype_bytes != first.layout.dtype_bytes) {
      throw Error(ErrorCode::kInvariant, "source shards disagree on shape or dtype");
    }
  }
  if (first.layout.dtype_bytes != target.dtype_bytes) {
    throw Error(ErrorCode::kUnsupportedDtype,
                "apply_repartition: source and target dtype differ; cast_dtype first");
  }

  std::vector<KvShard> out;
  out.reserve(static_cast<std::size_t>(plan.dst_degree));
  for (std::int64_t d = 0; d < plan.dst_degree; ++d) {
    KvShard dst;
    dst.tp_rank = d;
    dst.tp_degree = plan.dst_degree;
    dst.heads = rank_heads(d, plan.dst_degree, plan.num_kv_heads);
    dst.num_layers = first.num_layers;
    dst.head_dim = first.head_dim;
    dst.valid_tokens = first.valid_tokens;
    dst.layout = target;
    dst.payload.assign(dst.expected_payload_bytes(), std::byte{0});
    const Strides dst_strides = strides_for(target.axis_order, dst.shape());
    for (const auto& e : plan.entries) {
      if (e.dst_rank != d) continue;
      const KvShard& src = *by_rank[static_cast<std::size_t>(e.src_rank)];
      copy_elements(src.payload.data(), strides_for(src.layout.axis_order, src.shape()),
                    dst.payload.data(), dst_strides, dst.num_layers, e.src_heads.size(),
                    dst.valid_tokens, dst.head_dim, target.dtype_bytes,
                    e.src_heads.begin - src.heads.begin, e.dst_head_offset);
    }
    out.push_back(std::move(dst));
  }
  return out;
}

std::vector<std::byte> remap_block_size(std::span<const std::byte> payload,
                                        const KvLayout& src, const KvLayout& dst,
                                        const KvDims& dims, std::int64_t valid_tokens) {
  validate(src);
  validate(dst);
  if (src.axis_order != dst.axis_order || src.dtype_bytes != dst.dtype_bytes) {
    throw Error(ErrorCode::kInvariant, "remap_block_size: layouts must differ only in block_size");
  }
  const KvShape src_shape{dims.layers, dims.heads, padded_tokens(valid_tokens, src.block_size),
                          dims.head_dim};
  const auto src_bytes = static_cast<std::size_t>(src_shape.elements() * src.dtype_bytes);
  if (payload.size() != src_bytes) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("remap_block_size: payload is {} bytes, source shape needs {}",
                            payload.size(), src_bytes));
  }
  if (src.block_size == dst.block_size) return {payload.begin(), payload.end()};
  const KvShape dst_shape{dims.layers, dims.heads, padded_tokens(valid_tokens, dst.block_size),
                          dims.head_dim};
  std::vector<std::byte> out(static_cast<std::size_t>(dst_shape.elements() * dst.dtype_bytes),
                             std::byte{0});
  copy_elements(payload.data(), strides_for(src.axis_order, src_shape), out.data(),
                strides_for(dst.axis_order, dst_shape), dims.layers, dims.heads, valid_tokens,
                dims.head_dim, dst.dtype_bytes);
  return out;
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1fu;
  std::uint32_t mantissa = h & 0x3ffu;
  std::uint32_t bits = 0;
  if (exponent == 0) {
    if (mantissa == 0) {
      bits = sign;
    } else {
      // Subnormal half: normalise into a float.
      std::int32_t e = -14;
      while ((mantissa & 0x400u) == 0) {
        mantissa <<= 1;
        --e;
      }
      mantissa &= 0x3ffu;
      bits = sign | (static_cast<std::uint32_t>(e + 127) << 23) | (mantissa << 13);
    }
  } else if (exponent == 0x1f) {
    bits = sign | 0x7f800000u | (mantissa << 13);
  } else {
    bits = sign | ((exponent - 15 + 127) << 23) | (mantissa << 13);
  }
  return std::bit_cast<float>(bits);
}

std::uint16_t float_to_half(float value) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t magnitude = x & 0x7fffffffu;

  if (magnitude >= 0x7f800000u) {
    if (magnitude == 0x7f800000u) return sign | 0x7c00u;
    // NaN: keep the top payload bits and force quiet.
    return static_cast<std::uint16_t>(sign | 0x7e00u | ((magnitude >> 13) & 0x3ffu));
  }
  if (magnitude >= 0x477ff000u) return sign | 0x7c00u;  // >= 65520 rounds to inf

  if (magnitude < 0x38800000u) {  // below the smallest normal half
    const std::uint32_t exponent = magnitude >> 23;
    const int shift = 126 - static_cast<int>(exponent);
    if (shift > 24) return sign;
    const std::uint32_t mantissa = (magnitude & 0x7fffffu) | 0x800000u;
    std::uint32_t q = mantissa >> shift;
    const std::uint32_t rem = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (q & 1u))) ++q;
    return static_cast<std::uint16_t>(sign | q);
  }

  std::uint32_t h = (magnitude - 0x38000000u) >> 13;
  const std::uint32_t rem = magnitude & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
  return static_cast<std::uint16_t>(sign | h);
}

std::vector<std::byte> cast_dtype(std::span<const std::byte> payload, std::int64_t src_bytes,
                                  std::int64_t dst_bytes) {
  auto supported = [](std::int64_t b) { return b == 2 || b == 4; };
  if (!supported(src_bytes) || !supported(dst_bytes)) {
    throw Error(ErrorCode::kUnsupportedDtype,
                fmt::format("cast_dtype: unsupported element widths {} -> {}", src_bytes,
                            dst_bytes));
  }
  if (payload.size() % static_cast<std::size_t>(src_bytes) != 0) {
    throw Error(ErrorCode::kLengthMismatch, "cast_dtype: payload is not a whole number of elements");
  }
  if (src_bytes == dst_bytes) return {payload.begin(), payload.end()};

  const std::size_t count = payload.size() / static_cast<std::size_t>(src_bytes);
  std::vector<std::byte> out(count * static_cast<std::size_t>(dst_bytes));
  for (std::size_t i = 0; i < count; ++i) {
    if (src_bytes == 2) {
      std::uint16_t h;
      std::memcpy(&h, payload.data() + i * 2, 2);
      const float f = half_to_float(h);
      std::memcpy(out.data() + i * 4, &f, 4);
    } else {
      float f;
      std::memcpy(&f, payload.data() + i * 4, 4);
      const std::uint16_t h = float_to_half(f);
      std::memcpy(out.data() + i * 2, &h, 2);
    }
  }
  return out;
}

std::vector<KvShard> make_shards(std::span<const std::byte> canonical, std::int64_t num_layers,
                                 std::int64_t num_kv_heads, std::int64_t head_dim,
                                 std::int64_t valid_tokens, std::int64_t tp_degree,
                                 const KvLayout& layout) {
  validate(layout);
  if (tp_degree < 1 || num_kv_heads % tp_degree != 0) {
    throw Error(ErrorCode::kInvariant, "make_shards: tp degree must divide num_kv_heads");
  }
  const KvShape full{num_layers, num_kv_heads, padded_tokens(valid_tokens, layout.block_size),
                     head_dim};
  if (canonical.size() != static_cast<std::size_t>(full.elements() * layout.dtype_bytes)) {
    throw Error(ErrorCode::kLengthMismatch, "make_shards: canonical buffer size mismatch");
  }
  const Strides full_strides = strides_for(kCanonicalAxisOrder, full);
  std::vector<KvShard> shards;
  for (std::int64_t r = 0; r < tp_degree; ++r) {
    KvShard shard;
    shard.tp_rank = r;
    shard.tp_degree = tp_degree;
    shard.heads = rank_heads(r, tp_degree, num_kv_heads);
    shard.num_layers = num_layers;
    shard.head_dim = head_dim;
    shard.valid_tokens = valid_tokens;
    shard.layout = layout;
    shard.payload.assign(shard.expected_payload_bytes(), std::byte{0});
    copy_elements(canonical.data(), full_strides, shard.payload.data(),
                  strides_for(layout.axis_order, shard.shape()), num_layers, shard.heads.size(),
                  valid_tokens, head_dim, layout.dtype_bytes, shard.heads.begin, 0);
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace hetpd
