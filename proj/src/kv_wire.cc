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

#include "hetpd/kv_wire.h"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hetpd/error.h"

namespace hetpd {

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'P', 'D', 'K', 'V', 'S', 'H', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::byte* at, std::uint64_t value) {
  for (int i = 0; i < 4; ++i) at[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffu);
}

void put_u64(std::byte* at, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) at[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(const std::byte* at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(at[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::byte* at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(at[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::byte> encode_shard(const KvShard& shard) {
  validate(shard);
  std::vector<std::byte> out(kShardHeaderBytes + shard.payload.size());
  std::memcpy(out.data(), kMagic.data(), kMagic.size());
  std::byte* h = out.data();
  put_u32(h + 8, kVersion);
  put_u32(h + 12, static_cast<std::uint64_t>(shard.tp_rank));
  put_u32(h + 16, static_cast<std::uint64_t>(shard.tp_degree));
  put_u32(h + 20, static_cast<std::uint64_t>(shard.heads.begin));
  put_u32(h + 24, static_cast<std::uint64_t>(shard.heads.end));
  put_u32(h + 28, static_cast<std::uint64_t>(shard.num_layers));
  put_u32(h + 32, static_cast<std::uint64_t>(shard.head_dim));
  put_u32(h + 36, static_cast<std::uint64_t>(shard.valid_tokens));
  put_u32(h + 40, static_cast<std::uint64_t>(shard.layout.block_size));
  put_u32(h + 44, static_cast<std::uint64_t>(shard.layout.dtype_bytes));
  for (int i = 0; i < 4; ++i) h[48 + i] = static_cast<std::byte>(shard.layout.axis_order[i]);
  put_u32(h + 52, 0);
  put_u64(h + 56, shard.payload.size());
  std::memcpy(h + kShardHeaderBytes, shard.payload.data(), shard.payload.size());
  return out;
}

KvShard decode_shard(std::span<const std::byte> bytes) {
  if (bytes.size() < kShardHeaderBytes) {
    throw Error(ErrorCode::kSchema, "shard: truncated header");
  }
  const std::byte* h = bytes.data();
  if (std::memcmp(h, kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::kSchema, "shard: bad magic");
  }
  if (get_u32(h + 8) != kVersion) throw Error(ErrorCode::kSchema, "shard: unsupported version");

  KvShard shard;
  shard.tp_rank = get_u32(h + 12);
  shard.tp_degree = get_u32(h + 16);
  shard.heads = {get_u32(h + 20), get_u32(h + 24)};
  shard.num_layers = get_u32(h + 28);
  shard.head_dim = get_u32(h + 32);
  shard.valid_tokens = get_u32(h + 36);
  shard.layout.block_size = get_u32(h + 40);
  shard.layout.dtype_bytes = get_u32(h + 44);
  for (int i = 0; i < 4; ++i) {
    const auto code = static_cast<std::uint8_t>(h[48 + i]);
    if (code > 3) throw Error(ErrorCode::kSchema, "shard: bad axis code");
    shard.layout.axis_order[i] = static_cast<KvAxis>(code);
  }
  const std::uint64_t length = get_u64(h + 56);
  if (bytes.size() - kShardHeaderBytes != length) {
    throw Error(ErrorCode::kLengthMismatch, "shard: payload length disagrees with header");
  }
  shard.payload.assign(bytes.begin() + kShardHeaderBytes, bytes.end());
  validate(shard);
  return shard;
}

void write_shard_file(const std::filesystem::path& path, const KvShard& shard) {
  const auto bytes = encode_shard(shard);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

KvShard read_shard_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_shard(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace hetpd
