// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdocc/labels.hpp"
#include "mdocc/metrics.hpp"
#include "mdocc/model.hpp"
#include "mdocc/synth.hpp"

namespace mdocc::app {

/// Every tunable of an experiment. Text form: INI sections [experiment], [data],
/// [train], [labels], [eval]; unknown sections or keys are rejected.
struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 42;
  std::string out = "out";
  // [data]
  std::vector<std::string> presets{"A", "B"};
  std::string taxonomy = "split";  // split | twin
  std::size_t train_scenes = 8;
  std::size_t test_scenes = 4;
  // [train]
  model::Regime regime = model::Regime::Mdt;
  std::vector<std::string> datasets{"A", "B"};
  std::size_t epochs = 30;
  std::size_t batch_size = 2;
  double learning_rate = 0.1;
  std::size_t hidden = 32;
  model::ClassWeighting class_weighting = model::ClassWeighting::InverseFrequency;
  std::size_t cyl_radius_bins = 36;
  std::size_t cyl_angle_bins = 180;
  std::size_t cyl_height_bins = 4;
  std::size_t stride = 2;
  // [labels]
  double lambda = 0.05;
  double tau = 0.1;
  // [eval]
  std::size_t eta = 2;
  std::vector<std::string> setups{"single-A", "single-B", "direct_merge", "mdt"};
  bool cross_domain = true;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const;  // throws ConfigError
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(const std::string& text);
std::string to_text(const ExperimentConfig& cfg);

synth::TaxonomyMap taxonomy_by_name(const std::string& name);
DatasetSpec preset_by_name(const std::string& name, const synth::TaxonomyMap& taxonomy);

/// How a point cloud becomes model input: crop range, target grid, stride, bins.
struct Preprocess {
  Range3D point_range;
  GridGeometry gt;
  std::size_t stride = 2;
  std::size_t radius_bins = 36, angle_bins = 180, height_bins = 4;
};

Preprocess own_preprocess(const DatasetSpec& d, const ExperimentConfig& cfg);
/// Crop to the intersection of the datasets' ground-truth ranges.
Preprocess aligned_preprocess(const std::vector<DatasetSpec>& ds, const ExperimentConfig& cfg);

/// Crop, voxelize, gather onto the coarse grid; with `gt`, also the coarse labels of the
/// ground truth resampled onto the preprocess grid.
model::Sample prepare_sample(const std::string& dataset, const PointCloud& cloud,
                             const OccupancyGrid* gt, Label empty_id, const Preprocess& pre);

struct SceneData {
  PointCloud cloud;
  OccupancyGrid gt;
};

/// Reads <out>/data/<dataset>/<split>_NNNN.{mply,mocc} in index order.
std::vector<SceneData> load_split(const std::filesystem::path& out, const std::string& dataset,
                                  const std::string& split, std::size_t count);

/// Ground truth on the evaluation grid: `range` at voxel size coarse / eta.
OccupancyGrid eval_ground_truth(const OccupancyGrid& gt, const Range3D& range, double fine_voxel,
                                std::size_t stride, std::size_t eta, Label empty_id);

// Commands. Each is a pure function of the config and the files it reads.
void cmd_synth(const ExperimentConfig& cfg);
/// Writes <out>/train/<setup>/{model.mckpt,metrics.csv}; returns the setups trained.
std::vector<std::string> cmd_train(const ExperimentConfig& cfg);
labels::UnifiedSpace cmd_learn_labels(const ExperimentConfig& cfg);
std::vector<metrics::ReportRow> cmd_eval(const ExperimentConfig& cfg);

struct Trend {
  std::uint64_t seed = 0;
  std::string check;
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
};

/// Trend checks of one seed: cross-domain geometric IoU of mdt vs single models (both
/// directions), in-domain geometric IoU of mdt vs direct merge (both datasets), and
/// the pretrain-finetune drop of dataset A's geometric IoU below its pretrain peak.
std::vector<Trend> seed_trends(const ExperimentConfig& cfg, std::uint64_t seed);

/// For every seed: synth, train all regimes, learn labels, eval; writes
/// <out>/seed_<s>/... and <out>/trends.csv. Returns every trend row.
std::vector<Trend> cmd_report(const ExperimentConfig& cfg);

std::string trends_csv(const std::vector<Trend>& trends);

}  // namespace mdocc::app
