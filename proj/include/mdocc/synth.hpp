// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdocc/types.hpp"

namespace mdocc::synth {

/// Fine (generator-native) classes.
enum FineClass : Label {
  kEmpty = 0,
  kRoad,
  kSidewalk,
  kCar,
  kTruck,
  kBus,
  kPedestrian,
  kPole,
  kTrunk,
  kBuilding,
  kVegetation,
  kFineClassCount
};

LabelSpace fine_label_space();

struct SceneSpec {
  Range3D extent;
  double voxel_size = 0.2;
  int boxes = 0;    // vehicles
  int pillars = 0;  // poles / trunks
  int walls = 0;    // buildings
  int blobs = 0;    // vegetation
  int posts = 0;    // pedestrians
  std::uint64_t seed = 0;
  /// Objects keep out of this radius around the world origin (sensor position).
  double clear_radius_m = 1.6;

  void validate() const;
};

/// Default scene: 36 m x 36 m footprint spanning both presets' point ranges.
SceneSpec default_scene_spec(std::uint64_t seed);

/// Dense scene in the fine taxonomy. The lowest z-layer is ground (road/sidewalk);
/// objects sit on it and are separated from each other by at least one free voxel.
OccupancyGrid gen_scene(const SceneSpec& spec);

/// One dataset's view of the fine taxonomy: a total, surjective projection.
struct DatasetTaxonomy {
  std::string dataset;
  LabelSpace space;
  std::vector<Label> projection;  // fine id -> dataset id
};

struct TaxonomyMap {
  LabelSpace fine_space;
  std::vector<DatasetTaxonomy> datasets;

  void validate() const;
  const DatasetTaxonomy& for_dataset(const std::string& name) const;
  /// Dataset-label pairs (a, b) that share at least one fine class.
  std::vector<std::pair<Label, Label>> correspondence(const std::string& a,
                                                      const std::string& b) const;
};

/// A splits vehicles into car/truck/bus and merges road+sidewalk into ground;
/// B merges vehicles and keeps road/sidewalk apart.
TaxonomyMap split_taxonomy();
/// B is A's taxonomy with its non-empty classes listed in reverse order (a bijection).
TaxonomyMap twin_taxonomy();

/// Preset A: 32 beams, VFOV [-30, 10], cube point range of 12.8 m, 128x128x10 gt grid.
DatasetSpec preset_a(const LabelSpace& space);
/// Preset B: 64 beams, VFOV [-23.6, 3.2], 18 m point range, 64x64x8 gt grid.
DatasetSpec preset_b(const LabelSpace& space);

/// One ray per (beam, azimuth step), exact voxel traversal, first non-empty voxel's center.
/// Output order is beam-major, azimuth-minor. Beams run in parallel.
PointCloud raycast(const OccupancyGrid& scene, const LidarConfig& lidar, const Point3& sensor,
                   Label empty_id = kEmpty);
/// Single-threaded reference with identical output.
PointCloud raycast_serial(const OccupancyGrid& scene, const LidarConfig& lidar,
                          const Point3& sensor, Label empty_id = kEmpty);

struct DatasetView {
  PointCloud cloud;
  OccupancyGrid gt;
};

/// Raycast with the dataset's LiDAR, crop to its point range, relabel the scene through
/// the dataset's projection and resample onto its gt grid (outside the scene: empty).
DatasetView derive_dataset_view(const OccupancyGrid& scene, const TaxonomyMap& taxonomy,
                                const DatasetSpec& dataset, const Point3& sensor = {});

/// Relabel a fine-taxonomy grid through a projection.
OccupancyGrid project_labels(const OccupancyGrid& grid, const DatasetTaxonomy& taxonomy);

}  // namespace mdocc::synth
