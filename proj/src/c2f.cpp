// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/c2f.hpp"

#include <algorithm>
#include <cmath>

namespace mdocc::c2f {

std::vector<Coord> occupied_voxels(const OccupancyGrid& coarse, Label empty_id) {
  std::vector<Coord> out;
  const Dims& d = coarse.dims();
  for (std::size_t v = 0; v < d.count(); ++v)
    if (coarse[v] != empty_id) out.push_back(d.coords(v));
  return out;
}

VoxelQuerySet split_voxels(std::span<const Coord> occupied, const Dims& coarse, std::size_t eta) {
  if (eta == 0) throw Error(ErrorCode::InvalidArgument, "split ratio must be >= 1");
  VoxelQuerySet q{coarse, eta, {}, {}};
  q.coords.reserve(occupied.size() * eta * eta * eta);
  for (std::size_t o = 0; o < occupied.size(); ++o) {
    const auto& c = occupied[o];
    if (!coarse.inside(long(c[0]), long(c[1]), long(c[2])))
      throw Error(ErrorCode::OutOfGrid, "occupied voxel outside the coarse grid");
    for (std::size_t i = 0; i < eta; ++i)
      for (std::size_t j = 0; j < eta; ++j)
        for (std::size_t k = 0; k < eta; ++k) {
          q.coords.push_back({eta * c[0] + i, eta * c[1] + j, eta * c[2] + k});
          q.source.push_back(o);
        }
  }
  return q;
}

Point3 voxel_to_world(const Coord& c, const GridGeometry& g) {
  return g.center(c[0], c[1], c[2]);
}

Coord world_to_voxel(const Point3& p, const GridGeometry& g) {
  const double fx = std::floor((p.x - g.origin.x) / g.voxel_size);
  const double fy = std::floor((p.y - g.origin.y) / g.voxel_size);
  const double fz = std::floor((p.z - g.origin.z) / g.voxel_size);
  if (!(fx >= 0 && fy >= 0 && fz >= 0 && fx < g.dims.d && fy < g.dims.h && fz < g.dims.w))
    throw Error(ErrorCode::OutOfGrid, "point outside the grid extent");
  return {std::size_t(fx), std::size_t(fy), std::size_t(fz)};
}

namespace {

struct Lerp {
  std::size_t i0, i1;
  double t;
};

Lerp axis(std::size_t fine, std::size_t eta, std::size_t n) {
  double p = (double(fine) + 0.5) / double(eta) - 0.5;
  p = std::clamp(p, 0.0, double(n - 1));
  const auto i0 = std::size_t(std::floor(p));
  return {i0, std::min(i0 + 1, n - 1), p - double(i0)};
}

}  // namespace

std::vector<double> sample_features(std::span<const double> vol, const Dims& coarse,
                                    std::size_t width, std::span<const Coord> fine,
                                    std::size_t eta) {
  if (eta == 0) throw Error(ErrorCode::InvalidArgument, "split ratio must be >= 1");
  if (vol.size() != coarse.count() * width)
    throw Error(ErrorCode::DimMismatch, "feature volume does not match its dims");
  for (const auto& c : fine)
    if (c[0] >= eta * coarse.d || c[1] >= eta * coarse.h || c[2] >= eta * coarse.w)
      throw Error(ErrorCode::OutOfGrid, "query outside the refined extent");
  std::vector<double> out(fine.size() * width, 0.0);
#pragma omp parallel for schedule(static)
  for (long qi = 0; qi < long(fine.size()); ++qi) {
    const auto& c = fine[std::size_t(qi)];
    const Lerp lx = axis(c[0], eta, coarse.d), ly = axis(c[1], eta, coarse.h),
               lz = axis(c[2], eta, coarse.w);
    double* o = &out[std::size_t(qi) * width];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int e = 0; e < 2; ++e) {
          const double w = (a ? lx.t : 1.0 - lx.t) * (b ? ly.t : 1.0 - ly.t) *
                           (e ? lz.t : 1.0 - lz.t);
          if (w == 0.0) continue;
          const double* f = &vol[coarse.index(a ? lx.i1 : lx.i0, b ? ly.i1 : ly.i0,
                                              e ? lz.i1 : lz.i0) *
                                 width];
          for (std::size_t j = 0; j < width; ++j) o[j] += w * f[j];
        }
  }
  return out;
}

RowScorer model_scorer(const model::ModelParams& p, std::size_t head) {
  return [&p, head](std::span<const double> rows, std::size_t n) {
    return model::score_rows(p, head, rows, n);
  };
}

OccupancyGrid refine_and_reassemble(const VoxelQuerySet& q, std::span<const double> features,
                                    std::size_t width, const RowScorer& scorer,
                                    std::size_t classes, const GridGeometry& fine,
                                    Label empty_id) {
  const Dims& fd = fine.dims;
  if (fd.d != q.eta * q.coarse.d || fd.h != q.eta * q.coarse.h || fd.w != q.eta * q.coarse.w)
    throw Error(ErrorCode::DimMismatch, "fine dims must be eta times the coarse dims");
  if (features.size() != q.coords.size() * width)
    throw Error(ErrorCode::DimMismatch, "one feature row per query required");
  std::vector<Label> labels(fd.count(), empty_id);
  if (!q.coords.empty()) {
    const auto scores = scorer(features, q.coords.size());
    if (scores.size() != q.coords.size() * classes)
      throw Error(ErrorCode::DimMismatch, "scorer returned the wrong shape");
    for (std::size_t i = 0; i < q.coords.size(); ++i) {
      const double* s = &scores[i * classes];
      const auto best = std::size_t(std::max_element(s, s + classes) - s);
      labels[fd.index(q.coords[i][0], q.coords[i][1], q.coords[i][2])] = Label(best);
    }
  }
  return OccupancyGrid(fine, classes, std::move(labels));
}

OccupancyGrid refine(const model::ModelParams& p, const model::Sample& s, std::size_t slot,
                     std::size_t head, const OccupancyGrid& coarse_pred, Label empty_id,
                     std::size_t eta) {
  if (coarse_pred.dims() != s.dims)
    throw Error(ErrorCode::DimMismatch, "coarse prediction and sample dims differ");
  const auto occ = occupied_voxels(coarse_pred, empty_id);
  const auto q = split_voxels(occ, s.dims, eta);
  const auto hidden = model::hidden_features(p, s, slot, geom::NormMode::Eval);
  const auto feats = sample_features(hidden.m, s.dims, hidden.width, q.coords, eta);
  const GridGeometry& cg = coarse_pred.geometry();
  const auto e = std::uint32_t(eta);
  const GridGeometry fine{{cg.dims.d * e, cg.dims.h * e, cg.dims.w * e},
                          cg.voxel_size / double(eta), cg.origin};
  return refine_and_reassemble(q, feats, hidden.width, model_scorer(p, head),
                               p.heads.at(head).classes, fine, empty_id);
}

}  // namespace mdocc::c2f
