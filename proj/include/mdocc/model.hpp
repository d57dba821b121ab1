// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdocc/codec.hpp"
#include "mdocc/geom.hpp"
#include "mdocc/rng.hpp"
#include "mdocc/types.hpp"

namespace mdocc::model {

/// One scene as the network sees it: gathered cylindrical features on the coarse grid
/// and coarse ground truth in the dataset's own label space.
struct Sample {
  std::string dataset;
  Dims dims;
  std::vector<double> x;  // dims.count() x input features
  std::vector<Label> y;   // dims.count(), may be empty for inference only
};

/// Coarse geometry of a fine grid at integer stride. Throws DimMismatch when the
/// fine dims are not divisible by the stride.
GridGeometry coarse_geometry(const GridGeometry& fine, std::size_t stride);

/// Most frequent non-empty label of each stride^3 block (lower id on ties), else empty.
OccupancyGrid coarsen_labels(const OccupancyGrid& fine, std::size_t stride, Label empty_id);

/// Each coarse voxel takes the features of the cylindrical bin containing its center
/// (zeros outside the cylinder). The count feature is compressed with log1p.
std::vector<double> gather_features(const geom::CylFeatureVolume& volume,
                                    const GridGeometry& coarse);

struct Head {
  std::string name;
  std::size_t classes = 0;
  std::vector<double> w;  // classes x hidden
  std::vector<double> b;  // classes
};

/// x -> W1 -> dsnorm(slot) -> relu -> 6-neighborhood mean -> W2, b2 -> head.
struct ModelParams {
  std::size_t input = geom::kCylFeatures;
  std::size_t hidden = 16;
  std::vector<double> w1;  // hidden x input
  std::vector<double> w2;  // hidden x hidden
  std::vector<double> b2;  // hidden
  std::vector<Head> heads;
  geom::NormState norm;

  /// He init for W1, N(0, 1/hidden) for W2 and heads, zero biases, gamma 1, beta 0.
  static ModelParams init(std::size_t hidden,
                          const std::vector<std::pair<std::string, std::size_t>>& heads,
                          const std::vector<std::string>& norm_slots, std::uint64_t seed);

  std::size_t head(const std::string& name) const;  // throws UnknownDataset
  void validate() const;
};

struct Gradients {
  std::vector<double> w1, w2, b2, gamma, beta;
  std::vector<std::vector<double>> head_w, head_b;

  static Gradients zeros_like(const ModelParams& p);
  Gradients& operator+=(const Gradients& o);
};

/// Flat views in one fixed order (w1, w2, b2, gamma, beta, then each head's w, b).
std::vector<double*> parameter_pointers(ModelParams& p);
std::vector<const double*> gradient_pointers(const Gradients& g);

enum class Reduction { Mean, Sum };

/// Samples sharing one norm slot and one head. `offset` shifts every sample's labels
/// into the head's label space (non-zero for the disjoint label union).
struct Batch {
  std::size_t slot = 0;
  std::size_t head = 0;
  std::vector<const Sample*> samples;
  std::vector<Label> offsets;  // per sample; empty means all zero
};

struct BatchResult {
  double loss = 0.0;
  Gradients grad;
  std::vector<double> mean, var;  // batch statistics (biased variance)
  std::vector<double> sample_loss;  // weighted CE averaged over each sample's voxels
  double min_abs_preact = 0.0;      // smallest |normalized pre-activation|
  std::size_t voxels = 0;
};

/// Train-mode forward (batch statistics, running stats untouched) and analytic backward.
/// Per-voxel work runs in parallel; reductions use fixed chunks summed in order.
BatchResult forward_backward(const ModelParams& p, const Batch& batch,
                             std::span<const double> class_weights, Reduction reduction);
/// Plain-loop reference of forward_backward.
BatchResult forward_backward_serial(const ModelParams& p, const Batch& batch,
                                    std::span<const double> class_weights, Reduction reduction);
/// Loss only, same forward as forward_backward_serial.
double batch_loss(const ModelParams& p, const Batch& batch, std::span<const double> class_weights,
                  Reduction reduction);

/// Gradient step on every parameter, shared gamma / beta included.
void apply_gradients(ModelParams& p, const Gradients& g, double learning_rate);
/// Folds a batch's statistics into the slot's running stats.
void update_running_stats(ModelParams& p, std::size_t slot, const BatchResult& r);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as the scores
};

/// Weighted softmax cross-entropy; gradient (softmax - onehot) * weight / N under Mean.
LossGrad loss_ce(const ScoreGrid& scores, const OccupancyGrid& gt,
                 std::span<const double> class_weights, Reduction reduction = Reduction::Mean);

/// Aggregated hidden features (input of W2) for one sample.
struct Hidden {
  Dims dims;
  std::size_t width = 0;
  std::vector<double> m;  // dims.count() x width
};

Hidden hidden_features(const ModelParams& p, const Sample& s, std::size_t slot,
                       geom::NormMode mode);
/// W2, b2 then the head, for arbitrary rows of hidden features.
std::vector<double> score_rows(const ModelParams& p, std::size_t head, std::span<const double> m,
                               std::size_t rows);
/// Full forward of one sample; pure (train mode uses the sample's own statistics).
ScoreGrid forward(const ModelParams& p, const Sample& s, std::size_t slot, std::size_t head,
                  geom::NormMode mode);
/// Reference forward with plain loops.
ScoreGrid forward_serial(const ModelParams& p, const Sample& s, std::size_t slot,
                         std::size_t head, geom::NormMode mode);

// ---------------------------------------------------------------------------
// Sampling and training.

struct ScheduledBatch {
  std::size_t dataset = 0;
  std::vector<std::size_t> indices;
  std::vector<bool> repeat;  // true for wrap-around draws of a shorter dataset
};

/// Single-dataset batches alternating round-robin; every dataset contributes one batch
/// per round; shorter datasets wrap with fresh permutations.
std::vector<ScheduledBatch> balanced_batches(std::span<const std::size_t> sizes,
                                             std::size_t batch_size, Rng& rng);

/// Shuffled union of all (dataset, index) pairs cut into mixed batches.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> merged_batches(
    std::span<const std::size_t> sizes, std::size_t batch_size, Rng& rng);

enum class Regime { Single, Mdt, DirectMerge, PretrainFinetune };
Regime parse_regime(const std::string& s);  // throws ConfigError
const char* to_string(Regime r);

enum class ClassWeighting { None, InverseFrequency };
ClassWeighting parse_weighting(const std::string& s);
const char* to_string(ClassWeighting w);

struct TrainConfig {
  Regime regime = Regime::Mdt;
  std::size_t epochs = 30;
  std::size_t batch_size = 2;
  double learning_rate = 0.1;
  std::uint64_t seed = 42;
  ClassWeighting weighting = ClassWeighting::InverseFrequency;
  Reduction reduction = Reduction::Mean;
};

/// A dataset as routed through the model.
struct Stream {
  std::string name;
  std::size_t head = 0;
  std::size_t slot = 0;
  Label offset = 0;  // label shift into the head's space
  std::vector<Sample> train;
  std::vector<Sample> test;
  /// Head label -> dataset label for logged metrics; unmapped labels count as
  /// occupied-unknown.
  std::vector<std::optional<Label>> head_to_dataset;
  LabelSpace space;
};

struct MetricRow {
  std::size_t epoch = 0;
  std::string dataset;
  std::optional<double> loss, iou, miou;
};

struct TrainResult {
  ModelParams params;
  std::vector<MetricRow> log;
};

/// Clipped inverse-frequency weights (or ones) per head class.
std::vector<std::vector<double>> class_weights(const ModelParams& p,
                                               const std::vector<Stream>& streams,
                                               ClassWeighting weighting);

/// Single / Mdt: balanced round-robin over streams. DirectMerge: merged batches (all
/// streams must share head and slot). PretrainFinetune: `epochs` on stream 0, then
/// `epochs` on stream 1. Throws DivergedLoss on a non-finite loss.
TrainResult train(const TrainConfig& cfg, std::vector<Stream>& streams, ModelParams params);

/// Coarse in-domain metrics of one stream's test samples.
MetricRow evaluate_stream(const ModelParams& p, const Stream& s);

/// `epoch,dataset,loss,iou,miou` with 6 decimals; undefined values print as "nan".
std::string metric_log_csv(const std::vector<MetricRow>& log);

// MCKPT v1, little-endian:
//   "MCKPT" | u16 version | u32 meta length | meta (key=value lines) | u32 tensor count |
//   per tensor: u16 name length | name | u8 ndims | u32 dims[ndims] | f64 payload |
//   f64 eps | f64 momentum | u32 slot count |
//   per slot: u16 name length | name | u32 dim | u64 updates | f64 mean[dim] | f64 var[dim]
inline constexpr std::uint16_t kCheckpointVersion = 1;

using Metadata = std::vector<std::pair<std::string, std::string>>;

Bytes checkpoint_encode(const ModelParams& p, const Metadata& meta);
std::pair<ModelParams, Metadata> checkpoint_decode(std::span<const std::uint8_t> bytes);

}  // namespace mdocc::model
