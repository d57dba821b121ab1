// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mdocc/model.hpp"
#include "mdocc/types.hpp"

namespace mdocc::c2f {

using Coord = std::array<std::size_t, 3>;

/// Coordinates of every voxel whose label differs from the grid's empty id, row-major.
std::vector<Coord> occupied_voxels(const OccupancyGrid& coarse, Label empty_id);

struct VoxelQuerySet {
  Dims coarse;                      // dims of the grid the queries were split from
  std::size_t eta = 1;
  std::vector<Coord> coords;        // fine coordinates
  std::vector<std::size_t> source;  // index into the occupied sequence per query
};

/// eta^3 fine coordinates (eta*x0 + i, eta*y0 + j, eta*z0 + k) per coarse voxel.
VoxelQuerySet split_voxels(std::span<const Coord> occupied, const Dims& coarse, std::size_t eta);

/// Voxel center: origin + (coord + 0.5) * voxel_size.
Point3 voxel_to_world(const Coord& c, const GridGeometry& g);
/// Floor convention; boundary points go to the voxel above. Throws OutOfGrid.
Coord world_to_voxel(const Point3& p, const GridGeometry& g);

/// Trilinear samples of a coarse feature volume (dims x width, row-major) at fine-voxel
/// centers. Fine coordinate i maps to coarse position (i + 0.5) / eta - 0.5, clamped
/// to the volume.
std::vector<double> sample_features(std::span<const double> volume, const Dims& coarse,
                                    std::size_t width, std::span<const Coord> fine,
                                    std::size_t eta);

/// Scores `rows` feature rows; returns rows x classes.
using RowScorer = std::function<std::vector<double>(std::span<const double>, std::size_t)>;

/// The model's second affine layer and a dataset head.
RowScorer model_scorer(const model::ModelParams& p, std::size_t head);

/// Argmax of each query's scores written at its fine coordinate; everything else is
/// `empty_id`. Throws DimMismatch unless fine dims = eta * coarse dims.
OccupancyGrid refine_and_reassemble(const VoxelQuerySet& q, std::span<const double> features,
                                    std::size_t width, const RowScorer& scorer,
                                    std::size_t classes, const GridGeometry& fine,
                                    Label empty_id);

/// Whole refinement of one sample: occupied voxels of `coarse_pred`, split, sample the
/// model's aggregated hidden features, rescore. Output geometry is the coarse geometry
/// with voxels eta times smaller.
OccupancyGrid refine(const model::ModelParams& p, const model::Sample& s, std::size_t slot,
                     std::size_t head, const OccupancyGrid& coarse_pred, Label empty_id,
                     std::size_t eta);

}  // namespace mdocc::c2f
