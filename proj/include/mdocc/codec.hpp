// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mdocc/types.hpp"

namespace mdocc {

using Bytes = std::vector<std::uint8_t>;

// MOCC v1, little-endian:
//   "MOCC" | u16 version | u32 D, H, W | f64 voxel_size | f64 origin x, y, z |
//   u16 class count | u16 labels[D*H*W] (row-major)
inline constexpr std::uint16_t kMoccVersion = 1;
inline constexpr std::size_t kMoccHeaderSize = 52;

Bytes grid_encode(const OccupancyGrid& grid);
OccupancyGrid grid_decode(std::span<const std::uint8_t> bytes);

// MPLY v1, little-endian: "MPLY" | u16 version | u32 count | f64 xyz[count]
inline constexpr std::uint16_t kMplyVersion = 1;

Bytes cloud_encode(const PointCloud& cloud);
PointCloud cloud_decode(std::span<const std::uint8_t> bytes);

/// Little-endian primitive writer shared by every binary format in the project.
class ByteWriter {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v);
  Bytes take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

/// Bounds-checked reader; throws DecodeError(TruncatedPayload) with the failing offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::string bytes(std::size_t n);
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64();
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t get(int n);
  void need(std::size_t n) const;
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mdocc
