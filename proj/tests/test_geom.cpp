// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mdocc/geom.hpp"
#include "mdocc/rng.hpp"

namespace mdocc::geom {
namespace {

TEST(IntersectRanges, TableRangesAlignToTheMinimum) {
  const std::vector<Range3D> rs{Range3D::checked(-51.2, 51.2, -51.2, 51.2, -5.0, 3.0),
                                Range3D::checked(0.0, 51.2, -25.6, 25.6, -3.4, 3.0)};
  EXPECT_EQ(intersect_ranges(rs), Range3D::checked(0.0, 51.2, -25.6, 25.6, -3.4, 3.0));
}

TEST(IntersectRanges, IdentityCommutativityAndErrors) {
  const auto a = Range3D::checked(0, 2, 0, 2, 0, 2), b = Range3D::checked(1, 3, -1, 1, 0.5, 4);
  const auto c = Range3D::checked(0.5, 1.5, -3, 3, 0, 1);
  EXPECT_EQ(intersect_ranges(std::vector{a}), a);
  EXPECT_EQ(intersect_ranges(std::vector{a, b, c}), intersect_ranges(std::vector{c, a, b}));
  EXPECT_EQ(intersect_ranges(std::vector{intersect_ranges(std::vector{a, b}), c}),
            intersect_ranges(std::vector{a, intersect_ranges(std::vector{b, c})}));
  try {
    intersect_ranges(std::vector{a, Range3D::checked(0, 2, 0, 2, 5, 6)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyIntersection);
  }
  EXPECT_THROW(intersect_ranges(std::vector<Range3D>{}), Error);
}

TEST(CropPoints, HalfOpenOrderPreservingAndIdempotent) {
  const auto r = Range3D::checked(-1, 1, -1, 1, -1, 1);
  const PointCloud c{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0.5, 0.99, -0.2}};
  const PointCloud want{{0, 0, 0}, {-1, 0, 0}, {0.5, 0.99, -0.2}};
  EXPECT_EQ(crop_points(c, r), want);
  EXPECT_EQ(crop_points(crop_points(c, r), r), crop_points(c, r));

  Rng rng(9, "crop");
  PointCloud big(1000);
  for (auto& p : big) p = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  const auto rr = Range3D::checked(-1.3, 0.7, -0.2, 1.9, -2, 0);
  PointCloud brute;
  for (const auto& p : big)
    if (p.x >= rr.x_min && p.x < rr.x_max && p.y >= rr.y_min && p.y < rr.y_max &&
        p.z >= rr.z_min && p.z < rr.z_max)
      brute.push_back(p);
  EXPECT_EQ(crop_points(big, rr), brute);
}

CylGridSpec small_spec() {
  CylGridSpec s;
  s.n_radius = 4;
  s.n_angle = 8;
  s.n_height = 2;
  s.radius_max_m = 4.0;
  s.z_min_m = -1.0;
  s.z_max_m = 1.0;
  return s;
}

TEST(Cylindrical, BinCenterPointHasZeroOffsets) {
  const auto s = small_spec();
  const double r = s.d_radius() / 2, t = s.d_angle() / 2, z = s.z_min_m + s.d_height() / 2;
  const PointCloud c{{r * std::cos(t), r * std::sin(t), z}};
  const auto v = cylindrical_voxelize(c, s);
  EXPECT_EQ(v.retained, 1u);
  const auto f = v.bin(s.index(0, 0, 0));
  EXPECT_EQ(f[0], 1.0);
  EXPECT_NEAR(f[1], 0.0, 1e-12);
  EXPECT_NEAR(f[2], 0.0, 1e-12);
  EXPECT_NEAR(f[3], 0.0, 1e-12);
  EXPECT_NEAR(f[4], r, 1e-12);
  for (std::size_t b = 1; b < s.bins(); ++b) EXPECT_EQ(v.bin(b)[0], 0.0);
}

TEST(Cylindrical, OriginGoesToAngleBinZero) {
  const auto s = small_spec();
  std::size_t r, a, h;
  ASSERT_TRUE(cyl_bin(s, {0, 0, 0}, r, a, h));
  EXPECT_EQ(r, 0u);
  EXPECT_EQ(a, 0u);
  EXPECT_EQ(to_cylindrical({0, 0, 1}).theta, 0.0);
  const auto c = to_cylindrical({0, -1, 0});
  EXPECT_NEAR(c.theta, 1.5 * std::numbers::pi, 1e-12);
}

TEST(Cylindrical, CountsAreConserved) {
  const auto s = small_spec();
  Rng rng(4, "cyl");
  PointCloud c(10000);
  for (auto& p : c) p = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1.5, 1.5)};
  const auto v = cylindrical_voxelize(c, s);
  double sum = 0;
  for (std::size_t b = 0; b < s.bins(); ++b) sum += v.bin(b)[0];
  std::size_t inside = 0;
  for (const auto& p : c) {
    std::size_t r, a, h;
    inside += cyl_bin(s, p, r, a, h);
  }
  EXPECT_EQ(sum, double(v.retained));
  EXPECT_EQ(v.retained, inside);
  EXPECT_GT(inside, 0u);
  EXPECT_LT(inside, c.size());
}

TEST(Cylindrical, CoveringReachesTheFarCorner) {
  const auto s = CylGridSpec::covering(Range3D::checked(0, 3, -4, 4, -1, 2), 6, 12, 3);
  EXPECT_DOUBLE_EQ(s.radius_max_m, 5.0);
  EXPECT_EQ(s.z_min_m, -1.0);
  EXPECT_EQ(s.z_max_m, 2.0);
}

TEST(DsNorm, ConstantBatchMapsToBeta) {
  NormState st(3);
  st.register_dataset("A");
  const std::vector<double> x(12, 4.2);
  for (double y : dsnorm_forward(x, 4, 0, st, NormMode::Train)) EXPECT_EQ(y, 0.0);
}

TEST(DsNorm, ClosedFormMeanThreeVarFour) {
  NormState st(1);
  st.register_dataset("A");
  st.gamma = {2.0};
  st.beta = {1.0};
  const std::vector<double> x{1.0, 5.0, 1.0, 5.0};  // mean 3, biased var 4
  const auto y = dsnorm_forward(x, 4, 0, st, NormMode::Train);
  const double s = 2.0 / std::sqrt(4.0 + st.eps);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], s * (x[i] - 3.0) + 1.0, 1e-12);
  EXPECT_NEAR(y[0], -1.0, 1e-5);
}

TEST(DsNorm, EvalUsesOnlyTheSlotsRunningStats) {
  NormState st(2);
  st.register_dataset("A");
  st.register_dataset("B");
  st.stats(1).running_mean = {1.0, -1.0};
  st.stats(1).running_var = {4.0, 9.0};
  const std::vector<double> x{3.0, 2.0};
  const auto a = dsnorm_apply(x, 1, 0, st, NormMode::Eval).y;
  const auto b = dsnorm_apply(x, 1, 1, st, NormMode::Eval).y;
  EXPECT_NEAR(a[0], 3.0 / std::sqrt(1.0 + st.eps), 1e-12);
  EXPECT_NEAR(b[0], 2.0 / std::sqrt(4.0 + st.eps), 1e-12);
  EXPECT_NEAR(b[1], 3.0 / std::sqrt(9.0 + st.eps), 1e-12);
}

TEST(DsNorm, InterleavedStreamsConvergeWithoutMixing) {
  NormState st(1);
  st.register_dataset("A");
  st.register_dataset("B");
  Rng rng(2, "stream");
  for (int i = 0; i < 400; ++i) {
    std::vector<double> xa(32), xb(32);
    for (auto& v : xa) v = 5.0 + rng.normal();
    for (auto& v : xb) v = -5.0 + rng.normal();
    dsnorm_forward(xa, 32, 0, st, NormMode::Train);
    dsnorm_forward(xb, 32, 1, st, NormMode::Train);
  }
  EXPECT_NEAR(st.stats(0).running_mean[0], 5.0, 0.2);
  EXPECT_NEAR(st.stats(1).running_mean[0], -5.0, 0.2);
}

TEST(DsNorm, UpdatingOneSlotLeavesOthersBitIdentical) {
  NormState st(2);
  st.register_dataset("A");
  st.register_dataset("B");
  const NormStats before = st.stats(1);
  const std::vector<double> x{1, 2, 3, 4, 5, 7};
  dsnorm_forward(x, 3, 0, st, NormMode::Train);
  EXPECT_EQ(st.stats(1).running_mean, before.running_mean);
  EXPECT_EQ(st.stats(1).running_var, before.running_var);
  EXPECT_EQ(st.stats(1).updates, before.updates);
  EXPECT_EQ(st.stats(0).updates, 1u);
}

TEST(DsNorm, UnknownDatasetIsRejected) {
  NormState st(1);
  st.register_dataset("A");
  try {
    st.slot("C");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownDataset);
  }
}

TEST(DsNorm, SharedAffineHasOneCopy) {
  NormState st(2);
  st.register_dataset("A");
  st.register_dataset("B");
  const std::vector<double> ga{1.0, 0.0}, gb{0.0, 2.0}, zero{0.0, 0.0};
  dsnorm_update_shared(st, ga, zero, 0.5);
  dsnorm_update_shared(st, gb, zero, 0.5);
  EXPECT_EQ(st.gamma, (std::vector<double>{0.5, 0.0}));
  const auto g = st.gamma;
  dsnorm_update_shared(st, ga, ga, 0.0);
  dsnorm_update_shared(st, zero, zero, 0.3);
  EXPECT_EQ(st.gamma, g);
  EXPECT_EQ(st.beta, zero);
}

}  // namespace
}  // namespace mdocc::geom
