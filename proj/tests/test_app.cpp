// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mdocc/app.hpp"
#include "mdocc/codec.hpp"

namespace mdocc::app {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mdocc_test_app_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorCode config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

TEST(Config, DefaultsRoundTripThroughText) {
  ExperimentConfig c;
  c.tau = std::numeric_limits<double>::infinity();
  c.seeds = {7, 9};
  c.regime = model::Regime::PretrainFinetune;
  EXPECT_EQ(parse_config(to_text(c)), c);
  EXPECT_EQ(parse_config(""), ExperimentConfig{});
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_EQ(config_error("[train]\nepoch = 3\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[trian]\nepochs = 3\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[train]\nepochs = three\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[train]\nregime = joint\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[eval]\ncross_domain = yes\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[data]\ntaxonomy = flat\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error("[eval]\neta = 0\n"), ErrorCode::ConfigError);
  EXPECT_EQ(parse_config("[labels]\ntau = inf\n").tau, std::numeric_limits<double>::infinity());
}

TEST(Preprocess, AlignedUsesTheIntersectionOfGroundTruthRanges) {
  const ExperimentConfig cfg;
  const auto tax = taxonomy_by_name("split");
  const std::vector<DatasetSpec> ds{preset_by_name("A", tax), preset_by_name("B", tax)};
  const auto pre = aligned_preprocess(ds, cfg);
  EXPECT_EQ(pre.point_range, Range3D::checked(0, 12.8, -6.4, 6.4, -0.85, 0.75));
  EXPECT_EQ(pre.gt.dims, (Dims{64, 64, 8}));
  EXPECT_EQ(own_preprocess(ds[0], cfg).gt.dims, (Dims{128, 128, 10}));
}

TEST(EvalGroundTruth, CoarsensToTheEvaluationGrid) {
  const GridGeometry g{{8, 8, 8}, 0.2, {0, 0, 0}};
  std::vector<Label> l(g.dims.count(), 0);
  l[g.dims.index(5, 5, 5)] = 2;
  const OccupancyGrid gt(g, 3, l);
  const auto r = Range3D::checked(0, 1.6, 0, 1.6, 0, 1.6);
  const auto same = eval_ground_truth(gt, r, 0.2, 2, 2, 0);
  EXPECT_EQ(same, gt);
  const auto coarse = eval_ground_truth(gt, r, 0.2, 4, 2, 0);  // 0.4 m voxels
  EXPECT_EQ(coarse.dims(), (Dims{4, 4, 4}));
  EXPECT_EQ(coarse.at(2, 2, 2), 2);
}

TEST(Commands, SynthIsDeterministic) {
  ExperimentConfig cfg;
  cfg.train_scenes = 1;
  cfg.test_scenes = 1;
  cfg.seed = 11;
  cfg.out = scratch("synth_a").string();
  cmd_synth(cfg);
  ExperimentConfig again = cfg;
  again.out = scratch("synth_b").string();
  cmd_synth(again);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(fs::path(cfg.out) / "data")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), cfg.out);
    EXPECT_EQ(read_file(e.path()), read_file(fs::path(again.out) / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 9u);  // manifest + 2 datasets x 2 scenes x (cloud, grid)
  const auto scenes = load_split(cfg.out, "B", "test", 1);
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_EQ(scenes[0].gt.dims(), (Dims{64, 64, 8}));
  EXPECT_THROW(load_split(cfg.out, "B", "test", 2), Error);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MDOCC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("synth --seed notanumber"), 1);
  std::ofstream(dir / "bad.ini") << "[train]\nepochz = 1\n";
  EXPECT_EQ(run_cli("synth --config " + (dir / "bad.ini").string()), 1);
  EXPECT_EQ(run_cli("synth --config " + (dir / "missing.ini").string()), 3);
  // Training without synthesized data cannot read its inputs.
  EXPECT_EQ(run_cli("train --out " + (dir / "empty").string()), 3);
  std::ofstream(dir / "lr.ini") << "[train]\nlearning_rate = 1e300\nepochs = 2\n"
                                << "[data]\ntrain_scenes = 1\ntest_scenes = 1\n";
  const std::string lr = "--config " + (dir / "lr.ini").string() + " --out " +
                         (dir / "lr").string();
  ASSERT_EQ(run_cli("synth " + lr), 0);
  EXPECT_EQ(run_cli("train " + lr), 2);
}

}  // namespace
}  // namespace mdocc::app
