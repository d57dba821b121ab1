// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdocc/error.hpp"

namespace mdocc {

using Label = std::uint16_t;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

using PointCloud = std::vector<Point3>;

/// Axis-aligned box in meters. Containment is half-open: min <= v < max.
struct Range3D {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  double z_min = 0.0, z_max = 0.0;

  /// Builds a range and throws InvalidArgument unless min < max on every axis.
  static Range3D checked(double x_min, double x_max, double y_min, double y_max, double z_min,
                         double z_max);

  bool valid() const;
  bool contains(const Point3& p) const;
  bool contains(const Range3D& other) const;

  friend bool operator==(const Range3D&, const Range3D&) = default;
};

struct LidarConfig {
  int beam_count = 32;
  double vfov_min_deg = -30.0;
  double vfov_max_deg = 10.0;
  double horiz_angular_res_deg = 0.33;
  double max_range_m = 20.0;

  void validate() const;
  std::size_t azimuth_steps() const;
};

/// Ordered class taxonomy with a reserved "empty" class.
class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<std::string> names, Label empty_id);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(Label id) const { return names_.at(id); }
  Label empty_id() const { return empty_id_; }
  /// Returns size() when the name is unknown.
  std::size_t index_of(std::string_view name) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> names_;
  Label empty_id_ = 0;
};

/// Grid extents as (D, H, W) = (x-cells, y-cells, z-cells); memory order is
/// row-major with D outermost and W innermost.
struct Dims {
  std::uint32_t d = 0, h = 0, w = 0;

  std::size_t count() const { return std::size_t{d} * h * w; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * h + y) * w + z;
  }
  std::array<std::size_t, 3> coords(std::size_t idx) const {
    return {idx / (std::size_t{h} * w), (idx / w) % h, idx % w};
  }
  bool inside(long x, long y, long z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < long(d) && y < long(h) && z < long(w);
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct GridGeometry {
  Dims dims;
  double voxel_size = 0.0;
  Point3 origin;  // world position of the (0,0,0) voxel's min corner

  Range3D extent() const;
  Point3 center(std::size_t x, std::size_t y, std::size_t z) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Dense label volume. Immutable after construction.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(GridGeometry geometry, std::size_t num_classes, std::vector<Label> labels);
  /// Uniformly filled grid.
  static OccupancyGrid filled(GridGeometry geometry, std::size_t num_classes, Label value);

  const GridGeometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  std::size_t num_classes() const { return num_classes_; }
  std::span<const Label> labels() const { return labels_; }
  Label at(std::size_t x, std::size_t y, std::size_t z) const {
    return labels_[geometry_.dims.index(x, y, z)];
  }
  Label operator[](std::size_t idx) const { return labels_[idx]; }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  GridGeometry geometry_;
  std::size_t num_classes_ = 0;
  std::vector<Label> labels_;
};

/// Per-voxel class scores, voxel-major: scores[v * num_classes + c].
class ScoreGrid {
 public:
  ScoreGrid() = default;
  ScoreGrid(Dims dims, std::size_t num_classes, std::vector<double> scores);

  const Dims& dims() const { return dims_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t voxels() const { return dims_.count(); }
  std::span<const double> scores() const { return scores_; }
  std::span<const double> voxel(std::size_t v) const {
    return std::span<const double>(scores_).subspan(v * num_classes_, num_classes_);
  }
  double at(std::size_t v, std::size_t c) const { return scores_[v * num_classes_ + c]; }

  /// Argmax per voxel (lowest index wins ties).
  std::vector<Label> argmax() const;

 private:
  Dims dims_;
  std::size_t num_classes_ = 0;
  std::vector<double> scores_;
};

struct DatasetSpec {
  std::string name;
  LidarConfig lidar;
  Range3D point_range;
  Range3D gt_range;
  Dims grid_dims;
  LabelSpace label_space;

  void validate() const;
  double voxel_size() const;
  GridGeometry gt_geometry() const;
};

/// Geometry of a grid covering `range` with cubic voxels of `voxel_size`.
/// Throws InvalidArgument when the range is not an integer number of voxels.
GridGeometry geometry_for(const Range3D& range, double voxel_size);

/// Nearest-center resampling onto `target`: each target voxel takes the label of the
/// source voxel containing its center, or `fill` outside the source grid.
OccupancyGrid resample(const OccupancyGrid& src, const GridGeometry& target, Label fill);

}  // namespace mdocc
