// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdocc/labels.hpp"
#include "mdocc/types.hpp"

namespace mdocc::metrics {

/// C x C counts, rows = ground truth, columns = prediction. Ignored classes count as
/// occupied for geometric IoU but are left out of the mIoU mean.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes, std::vector<bool> ignore = {});

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * classes_ + pred]; }
  void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1);
  bool ignored(std::size_t c) const { return ignore_[c]; }
  std::uint64_t total() const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<bool> ignore_;
};

/// Adds every voxel whose center lies in `eval_range` (half-open). Throws
/// GeometryMismatch when the grids differ in geometry, InvalidArgument on labels
/// outside the matrix. Voxels are tallied in fixed chunks across threads.
void accumulate(ConfusionMatrix& cm, const OccupancyGrid& pred, const OccupancyGrid& gt,
                const Range3D& eval_range);
/// Single-threaded reference.
void accumulate_serial(ConfusionMatrix& cm, const OccupancyGrid& pred, const OccupancyGrid& gt,
                       const Range3D& eval_range);

/// Occupied-vs-empty IoU. nullopt when nothing is occupied in either grid.
std::optional<double> geometric_iou(const ConfusionMatrix& cm, std::size_t empty_id);
/// Mean class IoU over non-empty, non-ignored classes present in gt or prediction.
/// nullopt when no such class exists.
std::optional<double> miou(const ConfusionMatrix& cm, std::size_t empty_id);

struct ReportRow {
  std::string setup;
  std::string dataset;
  std::optional<double> iou;
  std::optional<double> miou;
};

/// `setup,dataset,iou,miou` with 4 decimals; undefined values print as "nan".
std::string report_csv(std::span<const ReportRow> rows);

/// Hard predictions of one setup in the taxonomy `source`, one grid per scene.
struct Prediction {
  std::string setup;
  std::string source;
  std::vector<OccupancyGrid> grids;
  /// Explicit label tables into other taxonomies (unmapped = nullopt); they take
  /// precedence over the unified space.
  std::map<std::string, std::vector<std::optional<Label>>> translations;
};

struct Target {
  std::string dataset;
  LabelSpace space;
  std::vector<OccupancyGrid> gts;
};

/// One row per (prediction, target) pair, in input order. Cross-taxonomy cells go
/// through T_target T_source^T; labels without a preimage become an ignored
/// "unknown" class, except an unmapped source empty which lands on the target's empty.
/// Throws MissingTransform when no translation is available.
std::vector<ReportRow> cross_eval(std::span<const Prediction> predictions,
                                  std::span<const Target> targets,
                                  const labels::UnifiedSpace* unified, const Range3D& eval_range);

/// Confusion matrix of one cell (exposed for logging): gt classes + 1 unknown column.
ConfusionMatrix evaluate_cell(std::span<const OccupancyGrid> preds,
                              const std::vector<std::optional<Label>>& table,
                              std::span<const OccupancyGrid> gts, std::size_t gt_classes,
                              const Range3D& eval_range);

}  // namespace mdocc::metrics
