// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "mdocc/model.hpp"

namespace mdocc::model {
namespace {

TEST(Coarsen, GeometryAndMajorityVote) {
  const GridGeometry fine{{4, 2, 2}, 0.2, {1, 2, 3}};
  const auto cg = coarse_geometry(fine, 2);
  EXPECT_EQ(cg.dims, (Dims{2, 1, 1}));
  EXPECT_DOUBLE_EQ(cg.voxel_size, 0.4);
  EXPECT_EQ(cg.origin, fine.origin);
  EXPECT_THROW(coarse_geometry(fine, 3), Error);

  // Block 0: 5 empty, 2 of class 2, 1 of class 1. Block 1: ties 1 vs 2 -> 1.
  std::vector<Label> l(fine.dims.count(), 0);
  l[fine.dims.index(0, 0, 0)] = 2;
  l[fine.dims.index(1, 1, 1)] = 2;
  l[fine.dims.index(0, 1, 0)] = 1;
  l[fine.dims.index(2, 0, 0)] = 2;
  l[fine.dims.index(3, 0, 0)] = 1;
  const auto c = coarsen_labels(OccupancyGrid(fine, 3, l), 2, 0);
  EXPECT_EQ(c.labels()[0], 2);
  EXPECT_EQ(c.labels()[1], 1);
  EXPECT_EQ(coarsen_labels(OccupancyGrid::filled(fine, 3, 0), 2, 0).labels()[0], 0);
}

TEST(GatherFeatures, CenterBinAndLogCount) {
  geom::CylGridSpec spec;
  spec.n_radius = 2;
  spec.n_angle = 4;
  spec.n_height = 1;
  spec.radius_max_m = 2.0;
  spec.z_min_m = -1.0;
  spec.z_max_m = 1.0;
  const PointCloud cloud{{0.5, 0.1, 0.0}, {0.5, 0.2, 0.0}, {0.5, 0.3, 0.0}};
  const auto vol = geom::cylindrical_voxelize(cloud, spec);
  const GridGeometry cg{{1, 1, 1}, 0.2, {0.4, 0.2, -0.1}};  // center (0.5, 0.3, 0)
  const auto x = gather_features(vol, cg);
  ASSERT_EQ(x.size(), geom::kCylFeatures);
  EXPECT_DOUBLE_EQ(x[0], std::log1p(3.0));
  for (std::size_t f = 1; f < geom::kCylFeatures; ++f) EXPECT_EQ(x[f], vol.bin(0)[f]);
  const GridGeometry far{{1, 1, 1}, 0.2, {5, 5, 0}};
  for (double v : gather_features(vol, far)) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ParallelMatchesSerial) {
  const auto in = oracle::grad_instance(1, {6, 5, 4}, 8, 1);
  for (auto mode : {geom::NormMode::Train, geom::NormMode::Eval}) {
    const auto a = forward(in.params, in.samples[0], in.slot, in.head, mode);
    const auto b = forward_serial(in.params, in.samples[0], in.slot, in.head, mode);
    ASSERT_EQ(a.scores().size(), b.scores().size());
    for (std::size_t i = 0; i < a.scores().size(); ++i)
      EXPECT_NEAR(a.scores()[i], b.scores()[i], 1e-12);
  }
}

TEST(ForwardBackward, ParallelMatchesSerial) {
  const auto in = oracle::grad_instance(2, {5, 4, 3}, 6, 3);
  for (auto red : {Reduction::Mean, Reduction::Sum}) {
    const auto a = forward_backward(in.params, in.batch(), in.weights, red);
    const auto b = forward_backward_serial(in.params, in.batch(), in.weights, red);
    EXPECT_NEAR(a.loss, b.loss, 1e-10 * std::abs(b.loss));
    const auto ga = gradient_pointers(a.grad), gb = gradient_pointers(b.grad);
    ASSERT_EQ(ga.size(), gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(*ga[i], *gb[i], 1e-10);
    EXPECT_NEAR(a.loss, batch_loss(in.params, in.batch(), in.weights, red), 1e-10 * a.loss);
  }
}

TEST(ForwardBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto in = oracle::grad_instance(seed, {4, 4, 4}, 6, 2);
    const auto r = oracle::grad_check(in.params, in.batch(), in.weights, Reduction::Mean, 1e-5,
                                      1e-4);
    EXPECT_GE(double(r.within), 0.99 * double(r.coords)) << "worst " << r.worst;
  }
}

TEST(ForwardBackward, UnroutedHeadGetsNoGradient) {
  const auto in = oracle::grad_instance(4, {3, 3, 3}, 4, 2);
  const auto r = forward_backward(in.params, in.batch(), in.weights, Reduction::Mean);
  const std::size_t other = 1 - in.head;
  for (double g : r.grad.head_w[other]) EXPECT_EQ(g, 0.0);
  for (double g : r.grad.head_b[other]) EXPECT_EQ(g, 0.0);
}

TEST(Forward, ZeroFeaturesAndBiasesGiveUniformScores) {
  auto p = ModelParams::init(6, {{"A", 4}}, {"A"}, 9);
  const Sample s{"A", {3, 2, 2}, std::vector<double>(12 * geom::kCylFeatures, 0.0), {}};
  for (auto mode : {geom::NormMode::Train, geom::NormMode::Eval}) {
    const auto out = forward(p, s, 0, 0, mode);
    for (double v : out.scores()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, HandSetSingleVoxelComposition) {
  auto p = ModelParams::init(1, {{"A", 2}}, {"A"}, 1);
  p.w1 = {2.0, 0.0, 0.0, 0.0, 0.0};
  p.w2 = {3.0};
  p.b2 = {-1.0};
  p.heads[0].w = {1.0, -2.0};
  p.heads[0].b = {0.5, 0.25};
  p.norm.gamma = {1.5};
  p.norm.beta = {0.2};
  p.norm.stats(0).running_mean = {1.0};
  p.norm.stats(0).running_var = {4.0};
  const Sample s{"A", {1, 1, 1}, {2.0, 9.0, 9.0, 9.0, 9.0}, {}};
  const double h = std::max(0.0, 1.5 * (4.0 - 1.0) / std::sqrt(4.0 + p.norm.eps) + 0.2);
  const double z = 3.0 * h - 1.0;
  const auto out = forward(p, s, 0, 0, geom::NormMode::Eval);
  EXPECT_NEAR(out.at(0, 0), z + 0.5, 1e-12);
  EXPECT_NEAR(out.at(0, 1), -2.0 * z + 0.25, 1e-12);
}

TEST(Forward, HeadsAreDistinct) {
  const auto in = oracle::grad_instance(7, {3, 3, 3}, 6, 1);
  const auto a = forward(in.params, in.samples[0], 0, 0, geom::NormMode::Train);
  const auto b = forward(in.params, in.samples[0], 0, 1, geom::NormMode::Train);
  EXPECT_NE(std::vector<double>(a.voxel(0).begin(), a.voxel(0).begin() + 2),
            std::vector<double>(b.voxel(0).begin(), b.voxel(0).begin() + 2));
}

TEST(ForwardBackward, StepLeavesOtherHeadBitIdenticalAndMovesBackbone) {
  auto in = oracle::grad_instance(9, {3, 3, 3}, 4, 2);
  const ModelParams before = in.params;
  const auto r = forward_backward(in.params, in.batch(), in.weights, Reduction::Mean);
  apply_gradients(in.params, r.grad, 0.1);
  const std::size_t other = 1 - in.head;
  EXPECT_EQ(in.params.heads[other].w, before.heads[other].w);
  EXPECT_EQ(in.params.heads[other].b, before.heads[other].b);
  EXPECT_NE(in.params.w1, before.w1);
  EXPECT_NE(in.params.w2, before.w2);
}

TEST(ForwardBackward, DuplicatedBatchDoublesSumGradient) {
  const auto in = oracle::grad_instance(10, {3, 3, 2}, 4, 1);
  Batch one = in.batch(), two = in.batch();
  two.samples.push_back(two.samples[0]);
  const auto a = forward_backward(in.params, one, in.weights, Reduction::Sum);
  const auto b = forward_backward(in.params, two, in.weights, Reduction::Sum);
  EXPECT_NEAR(b.loss, 2.0 * a.loss, 1e-10 * a.loss);
  const auto ga = gradient_pointers(a.grad), gb = gradient_pointers(b.grad);
  for (std::size_t i = 0; i < ga.size(); ++i)
    EXPECT_NEAR(*gb[i], 2.0 * *ga[i], 1e-9 * (1.0 + std::abs(*ga[i])));
}

TEST(LossCe, GradientMatchesFiniteDifferences) {
  Rng rng(11, "ce");
  const Dims d{2, 2, 2};
  std::vector<double> z(16);
  for (auto& v : z) v = rng.normal();
  std::vector<Label> y(8);
  for (auto& l : y) l = Label(rng.below(2));
  const OccupancyGrid gt({d, 0.2, {}}, 2, y);
  const std::vector<double> w{0.7, 1.9};
  const auto lg = loss_ce(ScoreGrid(d, 2, z), gt, w);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto zp = z, zm = z;
    zp[i] += 1e-5;
    zm[i] -= 1e-5;
    const double num =
        (loss_ce(ScoreGrid(d, 2, zp), gt, w).loss - loss_ce(ScoreGrid(d, 2, zm), gt, w).loss) /
        2e-5;
    EXPECT_NEAR(lg.grad[i], num, 1e-6 * std::max(std::abs(num), 1e-3));
  }
}

TEST(LossCe, UniformScoresGiveLogC) {
  const Dims d{1, 1, 2};
  const ScoreGrid s(d, 4, std::vector<double>(8, 0.3));
  const OccupancyGrid gt({d, 0.2, {}}, 4, {1, 3});
  const std::vector<double> w(4, 1.0);
  const auto lg = loss_ce(s, gt, w);
  EXPECT_NEAR(lg.loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(lg.grad[1], (0.25 - 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(lg.grad[0], 0.25 / 2.0, 1e-12);
  EXPECT_NEAR(loss_ce(s, gt, w, Reduction::Sum).loss, 2.0 * std::log(4.0), 1e-12);
}

TEST(Sampling, BalancedBatchesAlternateAndFlagRepeats) {
  Rng rng(1, "sampler");
  const std::vector<std::size_t> sizes{6, 2};
  const auto bs = balanced_batches(sizes, 2, rng);
  ASSERT_EQ(bs.size(), 6u);
  std::multiset<std::size_t> a_seen;
  std::size_t fresh_b = 0;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    EXPECT_EQ(bs[i].dataset, i % 2);
    EXPECT_EQ(bs[i].indices.size(), 2u);
    if (bs[i].dataset == 0) {
      a_seen.insert(bs[i].indices.begin(), bs[i].indices.end());
      for (bool r : bs[i].repeat) EXPECT_FALSE(r);
    } else {
      for (std::size_t k = 0; k < 2; ++k) fresh_b += !bs[i].repeat[k];
    }
  }
  EXPECT_EQ(a_seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(fresh_b, 2u);
  EXPECT_THROW(balanced_batches(sizes, 0, rng), Error);
}

TEST(Sampling, MergedBatchesCoverEveryPairOnce) {
  Rng rng(2, "sampler");
  const std::vector<std::size_t> sizes{3, 4};
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t n = 0;
  for (const auto& b : merged_batches(sizes, 3, rng)) {
    EXPECT_LE(b.size(), 3u);
    for (const auto& p : b) {
      seen.insert(p);
      ++n;
    }
  }
  EXPECT_EQ(n, 7u);
  EXPECT_EQ(seen.size(), 7u);
}

Stream stream_with_labels(std::vector<Label> y, std::size_t classes) {
  Stream s;
  s.name = "A";
  Sample smp;
  smp.dataset = "A";
  smp.dims = {1, 1, std::uint32_t(y.size())};
  smp.x.assign(y.size() * geom::kCylFeatures, 0.0);
  smp.y = std::move(y);
  s.train.push_back(smp);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  s.space = LabelSpace(names, 0);
  for (std::size_t c = 0; c < classes; ++c) s.head_to_dataset.push_back(Label(c));
  return s;
}

TEST(ClassWeights, InverseFrequencyClippedAndAbsentStaysOne) {
  std::vector<Label> y(200, 0);
  y[0] = 1;
  y[1] = 1;
  const std::vector<Stream> streams{stream_with_labels(y, 3)};
  const auto p = ModelParams::init(4, {{"A", 3}}, {"A"}, 1);
  const auto w = class_weights(p, streams, ClassWeighting::InverseFrequency)[0];
  // total 200 over 2 present classes: 200/(2*198) and 200/(2*2) = 50 -> 10.
  EXPECT_DOUBLE_EQ(w[0], 200.0 / 396.0);
  EXPECT_EQ(w[1], 10.0);
  EXPECT_EQ(w[2], 1.0);
  const auto ones = class_weights(p, streams, ClassWeighting::None);
  for (double v : ones[0]) EXPECT_EQ(v, 1.0);
}

TEST(Train, NonFiniteLossIsDivergedLoss) {
  std::vector<Stream> streams{stream_with_labels({0, 1, 0, 1}, 2)};
  for (std::size_t i = 0; i < streams[0].train[0].x.size(); ++i)
    streams[0].train[0].x[i] = double(i % 7);
  TrainConfig cfg;
  cfg.regime = Regime::Single;
  cfg.epochs = 5;
  cfg.learning_rate = 1e300;
  try {
    train(cfg, streams, ModelParams::init(4, {{"A", 2}}, {"A"}, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergedLoss);
  }
}

TEST(Train, LossDecreasesOnALearnableTask) {
  // Label is 1 wherever the first feature is positive.
  Rng rng(5, "task");
  Stream s = stream_with_labels(std::vector<Label>(64, 0), 2);
  s.train[0].dims = {4, 4, 4};
  for (std::size_t v = 0; v < 64; ++v) {
    const double f = rng.normal();
    s.train[0].x[v * geom::kCylFeatures] = f;
    s.train[0].y[v] = f > 0.0;
  }
  std::vector<Stream> streams{s};
  TrainConfig cfg;
  cfg.regime = Regime::Single;
  cfg.epochs = 40;
  cfg.batch_size = 1;
  const auto r = train(cfg, streams, ModelParams::init(8, {{"A", 2}}, {"A"}, 3));
  ASSERT_EQ(r.log.size(), 40u);
  EXPECT_LT(*r.log.back().loss, *r.log.front().loss);
  for (std::size_t e = 5; e < r.log.size(); ++e) EXPECT_LT(*r.log[e].loss, *r.log[e - 5].loss);
}

TEST(Train, MdtWithOneDatasetMatchesSingleBitForBit) {
  Rng rng(12, "equiv");
  Stream s = stream_with_labels(std::vector<Label>(27, 0), 3);
  s.train[0].dims = {3, 3, 3};
  for (auto& v : s.train[0].x) v = rng.normal();
  for (auto& l : s.train[0].y) l = Label(rng.below(3));
  s.train.push_back(s.train[0]);
  for (auto& v : s.train[1].x) v = rng.normal();
  s.test = s.train;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 1;
  std::vector<Stream> a{s}, b{s};
  cfg.regime = Regime::Single;
  const auto ra = train(cfg, a, ModelParams::init(5, {{"A", 3}}, {"A"}, 2));
  cfg.regime = Regime::Mdt;
  const auto rb = train(cfg, b, ModelParams::init(5, {{"A", 3}}, {"A"}, 2));
  EXPECT_EQ(checkpoint_encode(ra.params, {}), checkpoint_encode(rb.params, {}));
  EXPECT_EQ(metric_log_csv(ra.log), metric_log_csv(rb.log));
}

TEST(Regime, ParseRoundTripsAndRejectsUnknown) {
  for (auto r : {Regime::Single, Regime::Mdt, Regime::DirectMerge, Regime::PretrainFinetune})
    EXPECT_EQ(parse_regime(to_string(r)), r);
  for (auto w : {ClassWeighting::None, ClassWeighting::InverseFrequency})
    EXPECT_EQ(parse_weighting(to_string(w)), w);
  try {
    parse_regime("joint");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Checkpoint, RoundTripsBitExactly) {
  auto in = oracle::grad_instance(6, {3, 3, 3}, 5, 2);
  const auto r = forward_backward(in.params, in.batch(), in.weights, Reduction::Mean);
  update_running_stats(in.params, in.slot, r);
  const Metadata meta{{"regime", "mdt"}, {"datasets", "A,B"}};
  const Bytes b = checkpoint_encode(in.params, meta);
  const auto [p, m] = checkpoint_decode(b);
  EXPECT_EQ(m, meta);
  EXPECT_EQ(checkpoint_encode(p, m), b);
  EXPECT_EQ(p.norm.stats(in.slot).running_mean, in.params.norm.stats(in.slot).running_mean);
  Bytes bad = b;
  bad[5] = 9;
  EXPECT_THROW(checkpoint_decode(bad), DecodeError);
  EXPECT_THROW(checkpoint_decode(std::span(b).first(b.size() - 1)), DecodeError);
}

TEST(ModelParams, UnknownHeadIsUnknownDataset) {
  const auto p = ModelParams::init(4, {{"A", 2}}, {"A"}, 1);
  try {
    p.head("B");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownDataset);
  }
}

}  // namespace
}  // namespace mdocc::model
