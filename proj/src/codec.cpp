// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/codec.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace mdocc {

void ByteWriter::f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

void ByteReader::need(std::size_t n) const {
  if (in_.size() - pos_ < n)
    throw DecodeError(ErrorCode::TruncatedPayload, pos_,
                      "need " + std::to_string(n) + " bytes, have " +
                          std::to_string(in_.size() - pos_));
}

std::uint64_t ByteReader::get(int n) {
  need(static_cast<std::size_t>(n));
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(get(8)); }

std::string ByteReader::bytes(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
  pos_ += n;
  return s;
}

Bytes grid_encode(const OccupancyGrid& grid) {
  const auto& g = grid.geometry();
  ByteWriter w;
  w.bytes("MOCC");
  w.u16(kMoccVersion);
  w.u32(g.dims.d);
  w.u32(g.dims.h);
  w.u32(g.dims.w);
  w.f64(g.voxel_size);
  w.f64(g.origin.x);
  w.f64(g.origin.y);
  w.f64(g.origin.z);
  w.u16(static_cast<std::uint16_t>(grid.num_classes()));
  for (Label l : grid.labels()) w.u16(l);
  return w.take();
}

OccupancyGrid grid_decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != "MOCC")
    throw DecodeError(ErrorCode::BadMagic, 0, "expected magic MOCC");
  const std::size_t version_at = r.offset();
  const auto version = r.u16();
  if (version != kMoccVersion)
    throw DecodeError(ErrorCode::VersionUnsupported, version_at,
                      "MOCC version " + std::to_string(version));
  GridGeometry g;
  g.dims.d = r.u32();
  g.dims.h = r.u32();
  g.dims.w = r.u32();
  g.voxel_size = r.f64();
  g.origin.x = r.f64();
  g.origin.y = r.f64();
  g.origin.z = r.f64();
  const std::size_t classes = r.u16();
  const std::size_t n = g.dims.count();
  if (r.remaining() < 2 * n)
    throw DecodeError(ErrorCode::TruncatedPayload, r.offset() + (r.remaining() & ~std::size_t{1}),
                      "label payload shorter than D*H*W");
  std::vector<Label> labels(n);
  for (auto& l : labels) l = r.u16();
  return OccupancyGrid(g, classes, std::move(labels));
}

Bytes cloud_encode(const PointCloud& cloud) {
  ByteWriter w;
  w.bytes("MPLY");
  w.u16(kMplyVersion);
  w.u32(static_cast<std::uint32_t>(cloud.size()));
  for (const auto& p : cloud) {
    w.f64(p.x);
    w.f64(p.y);
    w.f64(p.z);
  }
  return w.take();
}

PointCloud cloud_decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != "MPLY")
    throw DecodeError(ErrorCode::BadMagic, 0, "expected magic MPLY");
  const std::size_t version_at = r.offset();
  const auto version = r.u16();
  if (version != kMplyVersion)
    throw DecodeError(ErrorCode::VersionUnsupported, version_at,
                      "MPLY version " + std::to_string(version));
  const std::size_t n = r.u32();
  if (r.remaining() < 24 * n)
    throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), "point payload shorter than count");
  PointCloud cloud(n);
  for (auto& p : cloud) {
    p.x = r.f64();
    p.y = r.f64();
    p.z = r.f64();
  }
  return cloud;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace mdocc
