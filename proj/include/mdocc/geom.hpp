// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mdocc/types.hpp"

namespace mdocc::geom {

/// Per-axis max of minima and min of maxima. Throws EmptyIntersection when an axis
/// degenerates and InvalidArgument on an empty input.
Range3D intersect_ranges(std::span<const Range3D> ranges);

/// Points with min <= coord < max on every axis, order preserved.
PointCloud crop_points(const PointCloud& cloud, const Range3D& range);

struct CylGridSpec {
  std::size_t n_radius = 36;
  std::size_t n_angle = 180;
  std::size_t n_height = 4;
  double radius_max_m = 14.4;
  double z_min_m = -0.85;
  double z_max_m = 0.75;

  void validate() const;
  double d_radius() const { return radius_max_m / double(n_radius); }
  double d_angle() const;
  double d_height() const { return (z_max_m - z_min_m) / double(n_height); }
  std::size_t bins() const { return n_radius * n_angle * n_height; }
  std::size_t index(std::size_t r, std::size_t a, std::size_t h) const {
    return (r * n_angle + a) * n_height + h;
  }

  /// Fixed bin counts stretched over a point range: radius_max reaches the farthest
  /// xy corner, the height span is the range's z extent.
  static CylGridSpec covering(const Range3D& range, std::size_t n_radius, std::size_t n_angle,
                              std::size_t n_height);
};

struct CylCoord {
  double r, theta, z;
};

/// Polar coordinates with theta in [0, 2*pi); theta is 0 at r == 0.
CylCoord to_cylindrical(const Point3& p);

/// Bin index of a point, or false if it lies outside radius_max / the z span.
bool cyl_bin(const CylGridSpec& spec, const Point3& p, std::size_t& r, std::size_t& a,
             std::size_t& h);

/// Features per bin: point count, mean r / theta / z offset from the bin center, mean radius.
inline constexpr std::size_t kCylFeatures = 5;

struct CylFeatureVolume {
  CylGridSpec spec;
  std::vector<double> features;  // bins() * kCylFeatures, bin-major
  std::size_t retained = 0;      // points that landed in a bin

  std::span<const double> bin(std::size_t idx) const {
    return std::span<const double>(features).subspan(idx * kCylFeatures, kCylFeatures);
  }
};

CylFeatureVolume cylindrical_voxelize(const PointCloud& cloud, const CylGridSpec& spec);

// ---------------------------------------------------------------------------
// Dataset-specific normalization with shared affine parameters:
//   y = gamma * (x - mu_k) / sqrt(var_k + eps) + beta
// mu_k / var_k are per dataset; gamma / beta exist exactly once.

enum class NormMode { Train, Eval };

struct NormStats {
  std::string dataset;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::uint64_t updates = 0;
};

class NormState {
 public:
  NormState() = default;
  explicit NormState(std::size_t features, double eps = 1e-5, double momentum = 0.1);

  /// Registers a dataset (running mean 0, var 1) and returns its slot.
  std::size_t register_dataset(const std::string& name);
  std::size_t slot(const std::string& name) const;  // throws UnknownDataset
  std::size_t num_datasets() const { return stats_.size(); }
  std::size_t features() const { return gamma.size(); }

  const NormStats& stats(std::size_t slot) const;
  NormStats& stats(std::size_t slot);

  /// EMA update of one slot's running statistics from a batch's mean and unbiased variance.
  void update_running(std::size_t slot, std::span<const double> batch_mean,
                      std::span<const double> batch_var_unbiased);

  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = 1e-5;
  double momentum = 0.1;

 private:
  std::vector<NormStats> stats_;
};

/// Per-batch quantities a backward pass needs.
struct NormForward {
  std::vector<double> y;        // n x features
  std::vector<double> x_hat;    // n x features
  std::vector<double> mean;     // statistics actually used
  std::vector<double> var;      // biased batch variance (train) or running variance (eval)
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

/// Pure normalization of an n x features row-major batch; never touches running stats.
NormForward dsnorm_apply(std::span<const double> x, std::size_t n, std::size_t slot,
                         const NormState& state, NormMode mode);

/// Normalizes and, in train mode, folds the batch statistics into `slot`'s running stats.
std::vector<double> dsnorm_forward(std::span<const double> x, std::size_t n, std::size_t slot,
                                   NormState& state, NormMode mode);

/// Gradient step on the single shared gamma / beta pair.
void dsnorm_update_shared(NormState& state, std::span<const double> d_gamma,
                          std::span<const double> d_beta, double learning_rate);

}  // namespace mdocc::geom
