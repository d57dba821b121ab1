// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "mdocc/geom.hpp"
#include "mdocc/rng.hpp"

namespace mdocc::synth {

LabelSpace fine_label_space() {
  return LabelSpace({"empty", "road", "sidewalk", "car", "truck", "bus", "pedestrian", "pole",
                     "trunk", "building", "vegetation"},
                    kEmpty);
}

void SceneSpec::validate() const {
  if (!extent.valid()) throw Error(ErrorCode::InvalidArgument, "scene extent invalid");
  if (!(voxel_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel size <= 0");
  if (boxes < 0 || pillars < 0 || walls < 0 || blobs < 0 || posts < 0)
    throw Error(ErrorCode::InvalidArgument, "archetype counts must be >= 0");
}

SceneSpec default_scene_spec(std::uint64_t seed) {
  SceneSpec s;
  s.extent = Range3D::checked(-18.0, 18.0, -18.0, 18.0, -0.85, 0.75);
  s.voxel_size = 0.2;
  s.boxes = 16;
  s.pillars = 18;
  s.walls = 8;
  s.blobs = 12;
  s.posts = 12;
  s.seed = seed;
  return s;
}

namespace {

struct Footprint {
  long x0, y0, x1, y1;  // inclusive-exclusive voxel rectangle
};

class Placer {
 public:
  Placer(const SceneSpec& spec, const GridGeometry& g, Rng& rng)
      : spec_(spec), g_(g), rng_(rng), taken_(std::size_t{g.dims.d} * g.dims.h, 0) {}

  /// Finds a free rectangle of size (lx, ly) with a one-voxel margin to other objects.
  Footprint place(long lx, long ly, const char* what) {
    const long nd = g_.dims.d, nh = g_.dims.h;
    if (lx + 2 > nd || ly + 2 > nh)
      throw Error(ErrorCode::ExtentTooSmall, std::string("cannot fit ") + what);
    for (int attempt = 0; attempt < 500; ++attempt) {
      const long x0 = rng_.between(1, nd - lx - 1);
      const long y0 = rng_.between(1, nh - ly - 1);
      Footprint f{x0, y0, x0 + lx, y0 + ly};
      if (near_sensor(f) || overlaps(f)) continue;
      for (long x = f.x0; x < f.x1; ++x)
        for (long y = f.y0; y < f.y1; ++y) taken_[x * nh + y] = 1;
      return f;
    }
    throw Error(ErrorCode::ExtentTooSmall, std::string("no free space left for ") + what);
  }

 private:
  bool overlaps(const Footprint& f) const {
    const long nh = g_.dims.h;
    for (long x = f.x0 - 1; x <= f.x1; ++x)
      for (long y = f.y0 - 1; y <= f.y1; ++y)
        if (taken_[x * nh + y]) return true;
    return false;
  }
  bool near_sensor(const Footprint& f) const {
    // Closest point of the rectangle to the origin.
    const double lo_x = g_.origin.x + f.x0 * g_.voxel_size, hi_x = g_.origin.x + f.x1 * g_.voxel_size;
    const double lo_y = g_.origin.y + f.y0 * g_.voxel_size, hi_y = g_.origin.y + f.y1 * g_.voxel_size;
    const double cx = std::clamp(0.0, lo_x, hi_x), cy = std::clamp(0.0, lo_y, hi_y);
    return std::hypot(cx, cy) < spec_.clear_radius_m;
  }

  const SceneSpec& spec_;
  const GridGeometry& g_;
  Rng& rng_;
  std::vector<std::uint8_t> taken_;
};

}  // namespace

OccupancyGrid gen_scene(const SceneSpec& spec) {
  spec.validate();
  const GridGeometry g = geometry_for(spec.extent, spec.voxel_size);
  const auto& d = g.dims;
  std::vector<Label> labels(d.count(), kEmpty);
  const long top = long(d.w) - 1;  // highest usable layer index

  for (std::size_t x = 0; x < d.d; ++x)
    for (std::size_t y = 0; y < d.h; ++y) {
      const Point3 c = g.center(x, y, 0);
      const bool road = std::min(std::abs(c.x), std::abs(c.y)) < 3.0;
      labels[d.index(x, y, 0)] = road ? kRoad : kSidewalk;
    }
  if (d.w < 2) {
    if (spec.boxes + spec.pillars + spec.walls + spec.blobs + spec.posts > 0)
      throw Error(ErrorCode::ExtentTooSmall, "no room above the ground layer");
    return OccupancyGrid(g, kFineClassCount, std::move(labels));
  }

  Rng rng(spec.seed, "scene");
  Placer placer(spec, g, rng);
  auto fill_box = [&](const Footprint& f, long z0, long z1, Label cls) {
    z1 = std::min(z1, top + 1);
    for (long x = f.x0; x < f.x1; ++x)
      for (long y = f.y0; y < f.y1; ++y)
        for (long z = z0; z < z1; ++z) labels[d.index(x, y, z)] = cls;
  };
  auto oriented = [&](long a, long b) {
    return rng.bernoulli(0.5) ? std::pair{a, b} : std::pair{b, a};
  };

  for (int i = 0; i < spec.walls; ++i) {
    const auto [lx, ly] = oriented(rng.between(8, 24), 2);
    fill_box(placer.place(lx, ly, "wall"), 1, 1 + rng.between(5, 7), kBuilding);
  }
  for (int i = 0; i < spec.boxes; ++i) {
    const double u = rng.uniform();
    const Label cls = u < 0.6 ? kCar : (u < 0.85 ? kTruck : kBus);
    const long len = cls == kCar ? 5 : (cls == kTruck ? 7 : 10);
    const long height = cls == kCar ? 2 : 3;
    const auto [lx, ly] = oriented(len, 3);
    fill_box(placer.place(lx, ly, "box"), 1, 1 + height, cls);
  }
  for (int i = 0; i < spec.blobs; ++i) {
    const long rxy = rng.between(2, 3), rz = rng.between(1, 2);
    const Footprint f = placer.place(2 * rxy + 1, 2 * rxy + 1, "blob");
    const double cx = f.x0 + rxy, cy = f.y0 + rxy, cz = 1 + rz;
    for (long x = f.x0; x < f.x1; ++x)
      for (long y = f.y0; y < f.y1; ++y)
        for (long z = 1; z <= std::min(top, long(cz + rz)); ++z) {
          const double e = std::pow((x - cx) / (rxy + 0.5), 2) + std::pow((y - cy) / (rxy + 0.5), 2) +
                           std::pow((z - cz) / (rz + 0.5), 2);
          if (e <= 1.0) labels[d.index(x, y, z)] = kVegetation;
        }
  }
  for (int i = 0; i < spec.pillars; ++i) {
    if (rng.bernoulli(0.5)) {
      fill_box(placer.place(1, 1, "pole"), 1, 1 + rng.between(5, 7), kPole);
    } else {
      fill_box(placer.place(2, 2, "trunk"), 1, 1 + rng.between(3, 4), kTrunk);
    }
  }
  for (int i = 0; i < spec.posts; ++i) fill_box(placer.place(1, 1, "post"), 1, 4, kPedestrian);

  return OccupancyGrid(g, kFineClassCount, std::move(labels));
}

void TaxonomyMap::validate() const {
  for (const auto& t : datasets) {
    if (t.projection.size() != fine_space.size())
      throw Error(ErrorCode::InvalidArgument, t.dataset + ": projection is not total");
    std::set<Label> hit;
    for (Label l : t.projection) {
      if (l >= t.space.size())
        throw Error(ErrorCode::InvalidArgument, t.dataset + ": projection target out of range");
      hit.insert(l);
    }
    if (hit.size() != t.space.size())
      throw Error(ErrorCode::InvalidArgument, t.dataset + ": projection is not surjective");
    if (t.projection[fine_space.empty_id()] != t.space.empty_id())
      throw Error(ErrorCode::InvalidArgument, t.dataset + ": empty must map to empty");
  }
}

const DatasetTaxonomy& TaxonomyMap::for_dataset(const std::string& name) const {
  for (const auto& t : datasets)
    if (t.dataset == name) return t;
  throw Error(ErrorCode::UnknownDataset, "no taxonomy for dataset " + name);
}

std::vector<std::pair<Label, Label>> TaxonomyMap::correspondence(const std::string& a,
                                                                 const std::string& b) const {
  const auto& ta = for_dataset(a);
  const auto& tb = for_dataset(b);
  std::set<std::pair<Label, Label>> pairs;
  for (std::size_t f = 0; f < fine_space.size(); ++f) pairs.insert({ta.projection[f], tb.projection[f]});
  return {pairs.begin(), pairs.end()};
}

namespace {

DatasetTaxonomy taxonomy_a() {
  LabelSpace space({"empty", "ground", "car", "truck", "bus", "pedestrian", "pole", "building",
                    "vegetation"},
                   0);
  // fine: empty road sidewalk car truck bus pedestrian pole trunk building vegetation
  return {"A", space, {0, 1, 1, 2, 3, 4, 5, 6, 8, 7, 8}};
}

DatasetTaxonomy taxonomy_b() {
  LabelSpace space({"empty", "road", "sidewalk", "vehicle", "person", "pole", "trunk", "building",
                    "vegetation"},
                   0);
  return {"B", space, {0, 1, 2, 3, 3, 3, 4, 5, 6, 7, 8}};
}

}  // namespace

TaxonomyMap split_taxonomy() {
  TaxonomyMap m{fine_label_space(), {taxonomy_a(), taxonomy_b()}};
  m.validate();
  return m;
}

TaxonomyMap twin_taxonomy() {
  DatasetTaxonomy a = taxonomy_a();
  const std::size_t n = a.space.size();
  // Twin order: empty first, remaining classes reversed.
  std::vector<Label> perm(n);  // a id -> twin id
  perm[0] = 0;
  for (std::size_t i = 1; i < n; ++i) perm[i] = static_cast<Label>(n - i);
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[perm[i]] = a.space.name(static_cast<Label>(i));
  DatasetTaxonomy b{"B", LabelSpace(names, 0), {}};
  for (Label l : a.projection) b.projection.push_back(perm[l]);
  TaxonomyMap m{fine_label_space(), {a, b}};
  m.validate();
  return m;
}

DatasetSpec preset_a(const LabelSpace& space) {
  DatasetSpec s;
  s.name = "A";
  s.lidar = {32, -30.0, 10.0, 0.33, 20.0};
  s.point_range = Range3D::checked(-12.8, 12.8, -12.8, 12.8, -1.25, 0.75);
  s.gt_range = s.point_range;
  s.grid_dims = {128, 128, 10};
  s.label_space = space;
  s.validate();
  return s;
}

DatasetSpec preset_b(const LabelSpace& space) {
  DatasetSpec s;
  s.name = "B";
  s.lidar = {64, -23.6, 3.2, 0.08, 30.0};
  s.point_range = Range3D::checked(-18.0, 18.0, -18.0, 18.0, -0.85, 0.75);
  s.gt_range = Range3D::checked(0.0, 12.8, -6.4, 6.4, -0.85, 0.75);
  s.grid_dims = {64, 64, 8};
  s.label_space = space;
  s.validate();
  return s;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Amanatides-Woo traversal; returns false when nothing is hit within max_range.
bool trace_ray(const OccupancyGrid& scene, Label empty_id, const Point3& o, const Point3& dir,
               double max_range, Point3& hit) {
  const auto& g = scene.geometry();
  const double vs = g.voxel_size;
  const double p[3] = {(o.x - g.origin.x) / vs, (o.y - g.origin.y) / vs, (o.z - g.origin.z) / vs};
  const double dv[3] = {dir.x, dir.y, dir.z};
  long idx[3];
  long step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    idx[a] = static_cast<long>(std::floor(p[a]));
    if (dv[a] > 0) {
      step[a] = 1;
      t_max[a] = (idx[a] + 1 - p[a]) * vs / dv[a];
      t_delta[a] = vs / dv[a];
    } else if (dv[a] < 0) {
      step[a] = -1;
      t_max[a] = (p[a] - idx[a]) * vs / -dv[a];
      t_delta[a] = vs / -dv[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }
  const auto& dims = g.dims;
  if (!dims.inside(idx[0], idx[1], idx[2])) return false;
  double t_entry = 0.0;
  for (;;) {
    if (scene.at(idx[0], idx[1], idx[2]) != empty_id) {
      if (t_entry > max_range) return false;
      hit = g.center(idx[0], idx[1], idx[2]);
      return true;
    }
    int a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    t_entry = t_max[a];
    if (t_entry > max_range) return false;
    idx[a] += step[a];
    if (!dims.inside(idx[0], idx[1], idx[2])) return false;
    t_max[a] += t_delta[a];
  }
}

void trace_beam(const OccupancyGrid& scene, const LidarConfig& lidar, const Point3& sensor,
                Label empty_id, int beam, PointCloud& out) {
  const std::size_t steps = lidar.azimuth_steps();
  const double elev_deg = lidar.vfov_min_deg + (lidar.vfov_max_deg - lidar.vfov_min_deg) * beam /
                                                   (lidar.beam_count - 1);
  const double elev = elev_deg * std::numbers::pi / 180.0;
  const double ce = std::cos(elev), se = std::sin(elev);
  Point3 hit;
  for (std::size_t i = 0; i < steps; ++i) {
    const double az = 2.0 * std::numbers::pi * double(i) / double(steps);
    const Point3 dir{ce * std::cos(az), ce * std::sin(az), se};
    if (trace_ray(scene, empty_id, sensor, dir, lidar.max_range_m, hit)) out.push_back(hit);
  }
}

}  // namespace

PointCloud raycast_serial(const OccupancyGrid& scene, const LidarConfig& lidar,
                          const Point3& sensor, Label empty_id) {
  lidar.validate();
  PointCloud out;
  for (int b = 0; b < lidar.beam_count; ++b) trace_beam(scene, lidar, sensor, empty_id, b, out);
  return out;
}

PointCloud raycast(const OccupancyGrid& scene, const LidarConfig& lidar, const Point3& sensor,
                   Label empty_id) {
  lidar.validate();
  std::vector<PointCloud> per_beam(static_cast<std::size_t>(lidar.beam_count));
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < lidar.beam_count; ++b)
    trace_beam(scene, lidar, sensor, empty_id, b, per_beam[static_cast<std::size_t>(b)]);
  std::size_t total = 0;
  for (const auto& c : per_beam) total += c.size();
  PointCloud out;
  out.reserve(total);
  for (const auto& c : per_beam) out.insert(out.end(), c.begin(), c.end());
  return out;
}

OccupancyGrid project_labels(const OccupancyGrid& grid, const DatasetTaxonomy& taxonomy) {
  std::vector<Label> out(grid.labels().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = taxonomy.projection.at(grid[i]);
  return OccupancyGrid(grid.geometry(), taxonomy.space.size(), std::move(out));
}

DatasetView derive_dataset_view(const OccupancyGrid& scene, const TaxonomyMap& taxonomy,
                                const DatasetSpec& dataset, const Point3& sensor) {
  const auto& tax = taxonomy.for_dataset(dataset.name);
  DatasetView view;
  view.cloud = geom::crop_points(raycast(scene, dataset.lidar, sensor, taxonomy.fine_space.empty_id()),
                                 dataset.point_range);
  view.gt = resample(project_labels(scene, tax), dataset.gt_geometry(), tax.space.empty_id());
  return view;
}

}  // namespace mdocc::synth
