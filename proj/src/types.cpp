// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/types.hpp"

#include <cmath>
#include <set>

namespace mdocc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ExtentTooSmall: return "ExtentTooSmall";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MisalignedCorpus: return "MisalignedCorpus";
    case ErrorCode::InfeasibleCover: return "InfeasibleCover";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::OutOfGrid: return "OutOfGrid";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::MissingTransform: return "MissingTransform";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Range3D Range3D::checked(double x_min, double x_max, double y_min, double y_max, double z_min,
                         double z_max) {
  Range3D r{x_min, x_max, y_min, y_max, z_min, z_max};
  if (!r.valid()) throw Error(ErrorCode::InvalidArgument, "range requires min < max per axis");
  return r;
}

bool Range3D::valid() const {
  auto ok = [](double lo, double hi) { return std::isfinite(lo) && std::isfinite(hi) && lo < hi; };
  return ok(x_min, x_max) && ok(y_min, y_max) && ok(z_min, z_max);
}

bool Range3D::contains(const Point3& p) const {
  return p.x >= x_min && p.x < x_max && p.y >= y_min && p.y < y_max && p.z >= z_min &&
         p.z < z_max;
}

bool Range3D::contains(const Range3D& o) const {
  return o.x_min >= x_min && o.x_max <= x_max && o.y_min >= y_min && o.y_max <= y_max &&
         o.z_min >= z_min && o.z_max <= z_max;
}

void LidarConfig::validate() const {
  if (beam_count < 2) throw Error(ErrorCode::InvalidArgument, "beam_count must be >= 2");
  if (!(vfov_min_deg < vfov_max_deg)) throw Error(ErrorCode::InvalidArgument, "vfov min >= max");
  if (!(horiz_angular_res_deg > 0.0))
    throw Error(ErrorCode::InvalidArgument, "horizontal resolution must be positive");
  if (!(max_range_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "max range must be positive");
}

std::size_t LidarConfig::azimuth_steps() const {
  // Guard against 360/0.08 landing a hair above an integer.
  return static_cast<std::size_t>(std::ceil(360.0 / horiz_angular_res_deg - 1e-9));
}

LabelSpace::LabelSpace(std::vector<std::string> names, Label empty_id)
    : names_(std::move(names)), empty_id_(empty_id) {
  if (names_.empty() || empty_id_ >= names_.size())
    throw Error(ErrorCode::InvalidArgument, "empty_id outside label space");
  if (names_.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "label space too large");
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size())
    throw Error(ErrorCode::InvalidArgument, "label names must be distinct");
}

std::size_t LabelSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return names_.size();
}

Range3D GridGeometry::extent() const {
  return {origin.x, origin.x + dims.d * voxel_size, origin.y, origin.y + dims.h * voxel_size,
          origin.z, origin.z + dims.w * voxel_size};
}

Point3 GridGeometry::center(std::size_t x, std::size_t y, std::size_t z) const {
  return {origin.x + (double(x) + 0.5) * voxel_size, origin.y + (double(y) + 0.5) * voxel_size,
          origin.z + (double(z) + 0.5) * voxel_size};
}

OccupancyGrid::OccupancyGrid(GridGeometry geometry, std::size_t num_classes,
                             std::vector<Label> labels)
    : geometry_(geometry), num_classes_(num_classes), labels_(std::move(labels)) {
  const auto& d = geometry_.dims;
  if (d.d == 0 || d.h == 0 || d.w == 0) throw Error(ErrorCode::InvalidArgument, "zero grid dim");
  if (!(geometry_.voxel_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel size <= 0");
  if (num_classes_ == 0 || num_classes_ > 0xFFFF)
    throw Error(ErrorCode::InvalidArgument, "class count out of range");
  if (labels_.size() != d.count())
    throw Error(ErrorCode::DimMismatch, "label count does not match dims");
  for (Label l : labels_)
    if (l >= num_classes_)
      throw Error(ErrorCode::InvalidArgument, "label id " + std::to_string(l) + " >= class count");
}

OccupancyGrid OccupancyGrid::filled(GridGeometry geometry, std::size_t num_classes, Label value) {
  return OccupancyGrid(geometry, num_classes, std::vector<Label>(geometry.dims.count(), value));
}

ScoreGrid::ScoreGrid(Dims dims, std::size_t num_classes, std::vector<double> scores)
    : dims_(dims), num_classes_(num_classes), scores_(std::move(scores)) {
  if (num_classes_ == 0) throw Error(ErrorCode::InvalidArgument, "score grid needs classes");
  if (scores_.size() != dims_.count() * num_classes_)
    throw Error(ErrorCode::DimMismatch, "score count does not match dims x classes");
  for (double s : scores_)
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "non-finite score");
}

std::vector<Label> ScoreGrid::argmax() const {
  std::vector<Label> out(voxels());
  for (std::size_t v = 0; v < out.size(); ++v) {
    auto s = voxel(v);
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.size(); ++c)
      if (s[c] > s[best]) best = c;
    out[v] = static_cast<Label>(best);
  }
  return out;
}

double DatasetSpec::voxel_size() const {
  return (gt_range.x_max - gt_range.x_min) / grid_dims.d;
}

void DatasetSpec::validate() const {
  lidar.validate();
  if (!point_range.valid() || !gt_range.valid())
    throw Error(ErrorCode::InvalidArgument, name + ": invalid range");
  if (!point_range.contains(gt_range))
    throw Error(ErrorCode::InvalidArgument, name + ": gt_range must lie inside point_range");
  if (grid_dims.count() == 0) throw Error(ErrorCode::InvalidArgument, name + ": empty grid");
  const double vx = voxel_size();
  const double vy = (gt_range.y_max - gt_range.y_min) / grid_dims.h;
  const double vz = (gt_range.z_max - gt_range.z_min) / grid_dims.w;
  if (std::abs(vx - vy) > 1e-9 || std::abs(vx - vz) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, name + ": grid voxels are not cubic");
}

GridGeometry DatasetSpec::gt_geometry() const {
  return {grid_dims, voxel_size(), {gt_range.x_min, gt_range.y_min, gt_range.z_min}};
}

GridGeometry geometry_for(const Range3D& range, double voxel_size) {
  auto cells = [&](double lo, double hi) {
    const double n = (hi - lo) / voxel_size;
    const double r = std::round(n);
    if (r < 1.0 || std::abs(n - r) > 1e-6)
      throw Error(ErrorCode::InvalidArgument, "range is not a whole number of voxels");
    return static_cast<std::uint32_t>(r);
  };
  return {{cells(range.x_min, range.x_max), cells(range.y_min, range.y_max),
           cells(range.z_min, range.z_max)},
          voxel_size,
          {range.x_min, range.y_min, range.z_min}};
}

OccupancyGrid resample(const OccupancyGrid& src, const GridGeometry& target, Label fill) {
  const auto& sg = src.geometry();
  const auto& td = target.dims;
  std::vector<Label> out(td.count(), fill);
  for (std::size_t x = 0; x < td.d; ++x)
    for (std::size_t y = 0; y < td.h; ++y)
      for (std::size_t z = 0; z < td.w; ++z) {
        const Point3 c = target.center(x, y, z);
        const long sx = static_cast<long>(std::floor((c.x - sg.origin.x) / sg.voxel_size));
        const long sy = static_cast<long>(std::floor((c.y - sg.origin.y) / sg.voxel_size));
        const long sz = static_cast<long>(std::floor((c.z - sg.origin.z) / sg.voxel_size));
        if (sg.dims.inside(sx, sy, sz)) out[td.index(x, y, z)] = src.at(sx, sy, sz);
      }
  return OccupancyGrid(target, src.num_classes(), std::move(out));
}

}  // namespace mdocc
