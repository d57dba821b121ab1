// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdocc::geom {

Range3D intersect_ranges(std::span<const Range3D> ranges) {
  if (ranges.empty()) throw Error(ErrorCode::InvalidArgument, "no ranges to intersect");
  Range3D r = ranges.front();
  for (const auto& o : ranges.subspan(1)) {
    r.x_min = std::max(r.x_min, o.x_min);
    r.x_max = std::min(r.x_max, o.x_max);
    r.y_min = std::max(r.y_min, o.y_min);
    r.y_max = std::min(r.y_max, o.y_max);
    r.z_min = std::max(r.z_min, o.z_min);
    r.z_max = std::min(r.z_max, o.z_max);
  }
  if (!(r.x_min < r.x_max)) throw Error(ErrorCode::EmptyIntersection, "x extents do not overlap");
  if (!(r.y_min < r.y_max)) throw Error(ErrorCode::EmptyIntersection, "y extents do not overlap");
  if (!(r.z_min < r.z_max)) throw Error(ErrorCode::EmptyIntersection, "z extents do not overlap");
  return r;
}

PointCloud crop_points(const PointCloud& cloud, const Range3D& range) {
  PointCloud out;
  out.reserve(cloud.size());
  std::copy_if(cloud.begin(), cloud.end(), std::back_inserter(out),
               [&](const Point3& p) { return range.contains(p); });
  return out;
}

void CylGridSpec::validate() const {
  if (n_radius == 0 || n_angle == 0 || n_height == 0)
    throw Error(ErrorCode::InvalidArgument, "cylinder bins must be positive");
  if (!(radius_max_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius_max must be > 0");
  if (!(z_min_m < z_max_m)) throw Error(ErrorCode::InvalidArgument, "cylinder z_min >= z_max");
}

double CylGridSpec::d_angle() const { return 2.0 * std::numbers::pi / double(n_angle); }

CylGridSpec CylGridSpec::covering(const Range3D& range, std::size_t n_radius, std::size_t n_angle,
                                  std::size_t n_height) {
  const double fx = std::max(std::abs(range.x_min), std::abs(range.x_max));
  const double fy = std::max(std::abs(range.y_min), std::abs(range.y_max));
  CylGridSpec s{n_radius, n_angle, n_height, std::hypot(fx, fy), range.z_min, range.z_max};
  s.validate();
  return s;
}

CylCoord to_cylindrical(const Point3& p) {
  const double r = std::hypot(p.x, p.y);
  double theta = 0.0;
  if (r > 0.0) {
    theta = std::atan2(p.y, p.x);
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
  }
  return {r, theta, p.z};
}

bool cyl_bin(const CylGridSpec& spec, const Point3& p, std::size_t& r, std::size_t& a,
             std::size_t& h) {
  const CylCoord c = to_cylindrical(p);
  if (c.r >= spec.radius_max_m || c.z < spec.z_min_m || c.z >= spec.z_max_m) return false;
  r = std::min(spec.n_radius - 1, static_cast<std::size_t>(c.r / spec.d_radius()));
  // theta can round up to exactly 2*pi when atan2 returns a tiny negative angle.
  a = std::min(spec.n_angle - 1, static_cast<std::size_t>(c.theta / spec.d_angle()));
  h = std::min(spec.n_height - 1, static_cast<std::size_t>((c.z - spec.z_min_m) / spec.d_height()));
  return true;
}

CylFeatureVolume cylindrical_voxelize(const PointCloud& cloud, const CylGridSpec& spec) {
  spec.validate();
  CylFeatureVolume vol{spec, std::vector<double>(spec.bins() * kCylFeatures, 0.0), 0};
  const double dr = spec.d_radius(), da = spec.d_angle(), dh = spec.d_height();
  for (const auto& p : cloud) {
    std::size_t r, a, h;
    if (!cyl_bin(spec, p, r, a, h)) continue;
    const CylCoord c = to_cylindrical(p);
    double* f = &vol.features[spec.index(r, a, h) * kCylFeatures];
    f[0] += 1.0;
    f[1] += c.r - (double(r) + 0.5) * dr;
    f[2] += c.theta - (double(a) + 0.5) * da;
    f[3] += c.z - (spec.z_min_m + (double(h) + 0.5) * dh);
    f[4] += c.r;
    ++vol.retained;
  }
  for (std::size_t b = 0; b < spec.bins(); ++b) {
    double* f = &vol.features[b * kCylFeatures];
    if (f[0] > 0.0)
      for (std::size_t k = 1; k < kCylFeatures; ++k) f[k] /= f[0];
  }
  return vol;
}

NormState::NormState(std::size_t features, double eps_, double momentum_)
    : gamma(features, 1.0), beta(features, 0.0), eps(eps_), momentum(momentum_) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be > 0");
  if (!(momentum > 0.0 && momentum < 1.0))
    throw Error(ErrorCode::InvalidArgument, "momentum must be in (0,1)");
}

std::size_t NormState::register_dataset(const std::string& name) {
  for (std::size_t i = 0; i < stats_.size(); ++i)
    if (stats_[i].dataset == name) return i;
  stats_.push_back({name, std::vector<double>(features(), 0.0), std::vector<double>(features(), 1.0), 0});
  return stats_.size() - 1;
}

std::size_t NormState::slot(const std::string& name) const {
  for (std::size_t i = 0; i < stats_.size(); ++i)
    if (stats_[i].dataset == name) return i;
  throw Error(ErrorCode::UnknownDataset, "dataset " + name + " not registered for normalization");
}

const NormStats& NormState::stats(std::size_t s) const {
  if (s >= stats_.size()) throw Error(ErrorCode::UnknownDataset, "norm slot " + std::to_string(s));
  return stats_[s];
}

NormStats& NormState::stats(std::size_t s) {
  if (s >= stats_.size()) throw Error(ErrorCode::UnknownDataset, "norm slot " + std::to_string(s));
  return stats_[s];
}

void NormState::update_running(std::size_t s, std::span<const double> batch_mean,
                               std::span<const double> batch_var_unbiased) {
  auto& st = stats(s);
  for (std::size_t j = 0; j < features(); ++j) {
    st.running_mean[j] = (1.0 - momentum) * st.running_mean[j] + momentum * batch_mean[j];
    st.running_var[j] = (1.0 - momentum) * st.running_var[j] + momentum * batch_var_unbiased[j];
  }
  ++st.updates;
}

NormForward dsnorm_apply(std::span<const double> x, std::size_t n, std::size_t s,
                         const NormState& state, NormMode mode) {
  const std::size_t f = state.features();
  if (x.size() != n * f) throw Error(ErrorCode::DimMismatch, "batch size does not match features");
  const auto& st = state.stats(s);
  NormForward out;
  out.mean.assign(f, 0.0);
  out.var.assign(f, 0.0);
  if (mode == NormMode::Train) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty batch in train mode");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) out.mean[j] += x[i * f + j];
    for (auto& m : out.mean) m /= double(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x[i * f + j] - out.mean[j];
        out.var[j] += d * d;
      }
    for (auto& v : out.var) v /= double(n);
  } else {
    out.mean = st.running_mean;
    out.var = st.running_var;
  }
  out.inv_std.resize(f);
  for (std::size_t j = 0; j < f; ++j) out.inv_std[j] = 1.0 / std::sqrt(out.var[j] + state.eps);
  out.x_hat.resize(n * f);
  out.y.resize(n * f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (x[i * f + j] - out.mean[j]) * out.inv_std[j];
      out.x_hat[i * f + j] = xh;
      out.y[i * f + j] = state.gamma[j] * xh + state.beta[j];
    }
  return out;
}

std::vector<double> dsnorm_forward(std::span<const double> x, std::size_t n, std::size_t s,
                                   NormState& state, NormMode mode) {
  NormForward fw = dsnorm_apply(x, n, s, state, mode);
  if (mode == NormMode::Train) {
    std::vector<double> unbiased(fw.var);
    if (n > 1)
      for (auto& v : unbiased) v *= double(n) / double(n - 1);
    state.update_running(s, fw.mean, unbiased);
  }
  return std::move(fw.y);
}

void dsnorm_update_shared(NormState& state, std::span<const double> d_gamma,
                          std::span<const double> d_beta, double learning_rate) {
  if (d_gamma.size() != state.features() || d_beta.size() != state.features())
    throw Error(ErrorCode::DimMismatch, "shared affine gradient length mismatch");
  for (std::size_t j = 0; j < state.features(); ++j) {
    state.gamma[j] -= learning_rate * d_gamma[j];
    state.beta[j] -= learning_rate * d_beta[j];
  }
}

}  // namespace mdocc::geom
