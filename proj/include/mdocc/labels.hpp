// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdocc/types.hpp"

namespace mdocc::labels {

/// Boolean transform from a dataset taxonomy (rows) to a unified space (columns).
/// Every row holds exactly one 1; every column at most one.
class MappingMatrix {
 public:
  MappingMatrix() = default;
  /// target[r] is the unified column of dataset label r.
  MappingMatrix(std::size_t cols, std::vector<std::size_t> target);
  static MappingMatrix identity(std::size_t n);
  /// Rows may share a column (e.g. {car, truck} -> vehicle). Learned transforms never
  /// do; preimage() then reports the lowest such row.
  static MappingMatrix many_to_one(std::size_t cols, std::vector<std::size_t> target);

  std::size_t rows() const { return target_.size(); }
  std::size_t cols() const { return cols_; }
  bool at(std::size_t r, std::size_t c) const { return target_.at(r) == c; }
  std::size_t target(std::size_t r) const { return target_.at(r); }
  const std::vector<std::size_t>& targets() const { return target_; }
  /// Dataset label mapped onto column c, if any.
  std::optional<std::size_t> preimage(std::size_t c) const;
  /// This transform followed by `next` (next.rows() == cols()).
  MappingMatrix then(const MappingMatrix& next) const;

  friend bool operator==(const MappingMatrix&, const MappingMatrix&) = default;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> target_;
};

/// Per-voxel softmax.
ScoreGrid softmax(const ScoreGrid& logits);

struct MergedScores {
  ScoreGrid scores;
  std::vector<bool> backed;  // false: no dataset maps onto the unified class (score left at 0)
};

/// d = (sum_k T_k^T o^k) / (sum_k T_k^T 1), elementwise per voxel.
MergedScores merged_score(std::span<const ScoreGrid> outputs,
                          std::span<const MappingMatrix> transforms);

/// o~ = T d per voxel.
ScoreGrid reproject(const ScoreGrid& unified, const MappingMatrix& transform);

struct LabelRef {
  std::size_t dataset = 0;
  std::size_t label = 0;

  friend auto operator<=>(const LabelRef&, const LabelRef&) = default;
};

/// A prospective unified class: at most one label per dataset, sorted by dataset.
struct MergeCandidate {
  std::vector<LabelRef> members;
  double cost = 0.0;

  std::size_t size() const { return members.size(); }
  bool contains(LabelRef r) const;
};

/// Scores per dataset over a shared scene set: grids[dataset][scene], voxel-aligned.
struct Corpus {
  std::vector<std::vector<ScoreGrid>> grids;

  std::size_t datasets() const { return grids.size(); }
  /// Throws MisalignedCorpus when scene counts or dims differ across datasets.
  void validate() const;
  std::size_t classes(std::size_t dataset) const;
};

/// Mean over voxels and member labels of the absolute change a round trip through the
/// merged class causes. Singletons cost 0.
double merge_cost(const MergeCandidate& candidate, const Corpus& corpus);

using CostFn = std::function<double(const MergeCandidate&)>;

inline constexpr double kNoPruning = std::numeric_limits<double>::infinity();

/// Greedy growth: all singletons; a size-n candidate is kept iff it extends a kept
/// size-(n-1) candidate by a label of an unused dataset and cost/(n-1) <= tau.
/// Result is sorted by (size, members). Costs of one level are evaluated in parallel.
std::vector<MergeCandidate> enumerate_candidates(std::span<const std::size_t> label_counts,
                                                 const CostFn& cost, double tau);
std::vector<MergeCandidate> enumerate_candidates(const Corpus& corpus, double tau);

struct Selection {
  std::vector<std::size_t> chosen;  // candidate indices, ascending
  double objective = 0.0;           // sum of (cost + lambda), summed in `chosen` order
};

/// Exact minimizer of sum x_t (c_t + lambda) subject to every label being covered
/// exactly once. Ties: fewer classes, then lexicographically smaller `chosen`.
/// Two datasets with candidates of size <= 2 use an assignment reduction; anything
/// else runs branch and bound. Throws InfeasibleCover.
Selection solve_selection(std::span<const std::size_t> label_counts,
                          std::span<const MergeCandidate> candidates, double lambda);
/// The branch-and-bound path regardless of shape.
Selection solve_selection_bnb(std::span<const std::size_t> label_counts,
                              std::span<const MergeCandidate> candidates, double lambda);

struct UnifiedSpace {
  LabelSpace space;                      // unified taxonomy
  std::vector<std::string> datasets;     // dataset names, corpus order
  std::vector<LabelSpace> dataset_spaces;
  std::vector<MappingMatrix> transforms;  // one per dataset
  double objective = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  std::vector<MergeCandidate> candidates;  // everything the solver saw
  std::vector<std::size_t> chosen;

  void validate() const;
  std::size_t dataset_index(const std::string& name) const;  // throws UnknownDataset
};

/// Turns a selection into a unified space. Unified classes are ordered by their
/// smallest member; names join "dataset:label" members with '+'.
UnifiedSpace build_unified(std::vector<std::string> datasets,
                           std::vector<LabelSpace> spaces,
                           std::vector<MergeCandidate> candidates, const Selection& sel,
                           double lambda, double tau);

/// enumerate_candidates + solve_selection + build_unified.
UnifiedSpace learn_unified(const Corpus& corpus, std::vector<std::string> datasets,
                           std::vector<LabelSpace> spaces, double lambda, double tau);

/// Adds one dataset by treating `existing` as a single pseudo-dataset whose scores are
/// `existing_scores` (merged unified scores per scene). Original transforms are
/// composed through the pseudo-dataset's mapping.
UnifiedSpace sequential_add(const UnifiedSpace& existing,
                            const std::vector<ScoreGrid>& existing_scores,
                            const std::vector<ScoreGrid>& new_scores, const std::string& name,
                            const LabelSpace& space, double lambda, double tau);

/// Label translation from one taxonomy to another through the unified space:
/// out[a] = preimage under `to` of to-unified(a), or nullopt when there is none.
/// With `to` == nullptr the target is the unified space itself.
std::vector<std::optional<Label>> translation(const MappingMatrix& from, const MappingMatrix* to);

/// Hard-label transcode. Labels without a preimage become `fallback`.
OccupancyGrid transcode(const OccupancyGrid& grid, const MappingMatrix& from,
                        const MappingMatrix* to, std::size_t target_classes, Label fallback);

/// Text export with stable key order; from_document inverts it.
std::string to_document(const UnifiedSpace& u);
UnifiedSpace from_document(const std::string& text);

}  // namespace mdocc::labels
