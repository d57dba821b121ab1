// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace mdocc::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<bool> ignore)
    : classes_(classes), counts_(classes * classes, 0), ignore_(std::move(ignore)) {
  if (classes == 0) throw Error(ErrorCode::InvalidArgument, "confusion matrix needs classes");
  if (ignore_.empty()) ignore_.assign(classes, false);
  if (ignore_.size() != classes) throw Error(ErrorCode::InvalidArgument, "ignore mask length");
}

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t n) {
  if (gt >= classes_ || pred >= classes_)
    throw Error(ErrorCode::InvalidArgument, "label outside the confusion matrix");
  counts_[gt * classes_ + pred] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.classes_ != classes_) throw Error(ErrorCode::DimMismatch, "confusion matrix sizes differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  return *this;
}

namespace {

void check_pair(const ConfusionMatrix& cm, const OccupancyGrid& pred, const OccupancyGrid& gt) {
  if (!(pred.geometry() == gt.geometry()))
    throw Error(ErrorCode::GeometryMismatch, "prediction and ground truth grids differ");
  if (pred.num_classes() > cm.classes() || gt.num_classes() > cm.classes())
    throw Error(ErrorCode::InvalidArgument, "label space larger than the confusion matrix");
}

std::vector<char> axis_mask(std::size_t n, double origin, double size, double lo, double hi) {
  std::vector<char> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = origin + (double(i) + 0.5) * size;
    m[i] = lo <= c && c < hi;
  }
  return m;
}

}  // namespace

void accumulate_serial(ConfusionMatrix& cm, const OccupancyGrid& pred, const OccupancyGrid& gt,
                       const Range3D& range) {
  check_pair(cm, pred, gt);
  const auto& g = gt.geometry();
  for (std::size_t x = 0; x < g.dims.d; ++x)
    for (std::size_t y = 0; y < g.dims.h; ++y)
      for (std::size_t z = 0; z < g.dims.w; ++z)
        if (range.contains(g.center(x, y, z))) cm.add(gt.at(x, y, z), pred.at(x, y, z));
}

void accumulate(ConfusionMatrix& cm, const OccupancyGrid& pred, const OccupancyGrid& gt,
                const Range3D& range) {
  check_pair(cm, pred, gt);
  const auto& g = gt.geometry();
  const auto mx = axis_mask(g.dims.d, g.origin.x, g.voxel_size, range.x_min, range.x_max);
  const auto my = axis_mask(g.dims.h, g.origin.y, g.voxel_size, range.y_min, range.y_max);
  const auto mz = axis_mask(g.dims.w, g.origin.z, g.voxel_size, range.z_min, range.z_max);
  const std::size_t c = cm.classes();
  const std::size_t n = g.dims.count();
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::uint64_t> partial(chunks * c * c, 0);
  const auto pl = pred.labels();
  const auto gl = gt.labels();
#pragma omp parallel for schedule(static)
  for (long k = 0; k < long(chunks); ++k) {
    std::uint64_t* acc = &partial[std::size_t(k) * c * c];
    const std::size_t end = std::min(n, (std::size_t(k) + 1) * kChunk);
    for (std::size_t v = std::size_t(k) * kChunk; v < end; ++v) {
      const auto [x, y, z] = g.dims.coords(v);
      if (mx[x] && my[y] && mz[z]) ++acc[std::size_t(gl[v]) * c + pl[v]];
    }
  }
  for (std::size_t k = 0; k < chunks; ++k)
    for (std::size_t i = 0; i < c * c; ++i)
      if (partial[k * c * c + i]) cm.add(i / c, i % c, partial[k * c * c + i]);
}

std::optional<double> geometric_iou(const ConfusionMatrix& cm, std::size_t empty_id) {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t g = 0; g < cm.classes(); ++g)
    for (std::size_t p = 0; p < cm.classes(); ++p) {
      const bool go = g != empty_id, po = p != empty_id;
      if (go && po) tp += cm.at(g, p);
      if (!go && po) fp += cm.at(g, p);
      if (go && !po) fn += cm.at(g, p);
    }
  if (tp + fp + fn == 0) return std::nullopt;
  return double(tp) / double(tp + fp + fn);
}

std::optional<double> miou(const ConfusionMatrix& cm, std::size_t empty_id) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    if (c == empty_id || cm.ignored(c)) continue;
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.classes(); ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    if (tp + fp + fn == 0) continue;
    sum += double(tp) / double(tp + fp + fn);
    ++present;
  }
  if (present == 0) return std::nullopt;
  return sum / double(present);
}

std::string report_csv(std::span<const ReportRow> rows) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::string out = "setup,dataset,iou,miou\n";
  for (const auto& r : rows)
    out += r.setup + "," + r.dataset + "," + fmt(r.iou) + "," + fmt(r.miou) + "\n";
  return out;
}

ConfusionMatrix evaluate_cell(std::span<const OccupancyGrid> preds,
                              const std::vector<std::optional<Label>>& table,
                              std::span<const OccupancyGrid> gts, std::size_t gt_classes,
                              const Range3D& range) {
  if (preds.size() != gts.size())
    throw Error(ErrorCode::DimMismatch, "prediction and ground-truth scene counts differ");
  std::vector<bool> ignore(gt_classes + 1, false);
  ignore.back() = true;
  ConfusionMatrix cm(gt_classes + 1, ignore);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].num_classes() != table.size())
      throw Error(ErrorCode::DimMismatch, "translation table does not match the prediction");
    std::vector<Label> mapped(preds[s].labels().size());
    for (std::size_t i = 0; i < mapped.size(); ++i)
      mapped[i] = table[preds[s][i]].value_or(Label(gt_classes));
    accumulate(cm, OccupancyGrid(preds[s].geometry(), gt_classes + 1, std::move(mapped)), gts[s],
               range);
  }
  return cm;
}

std::vector<ReportRow> cross_eval(std::span<const Prediction> predictions,
                                  std::span<const Target> targets,
                                  const labels::UnifiedSpace* unified, const Range3D& range) {
  std::vector<ReportRow> rows;
  for (const auto& p : predictions) {
    if (p.grids.empty()) throw Error(ErrorCode::InvalidArgument, "prediction without scenes");
    const std::size_t src_classes = p.grids[0].num_classes();
    for (const auto& t : targets) {
      std::vector<std::optional<Label>> table;
      if (auto it = p.translations.find(t.dataset); it != p.translations.end()) {
        table = it->second;
      } else if (p.source == t.dataset) {
        for (std::size_t c = 0; c < src_classes; ++c) table.push_back(Label(c));
      } else {
        if (!unified)
          throw Error(ErrorCode::MissingTransform,
                      "no label mapping from " + p.source + " to " + t.dataset);
        std::size_t from = 0, to = 0;
        try {
          from = unified->dataset_index(p.source);
          to = unified->dataset_index(t.dataset);
        } catch (const Error&) {
          throw Error(ErrorCode::MissingTransform,
                      "unified space lacks " + p.source + " or " + t.dataset);
        }
        table = labels::translation(unified->transforms[from], &unified->transforms[to]);
        // Empty stays empty even when the two empty classes were not merged.
        const Label src_empty = unified->dataset_spaces[from].empty_id();
        if (src_empty < table.size() && !table[src_empty]) table[src_empty] = t.space.empty_id();
      }
      const auto cm = evaluate_cell(p.grids, table, t.gts, t.space.size(), range);
      rows.push_back({p.setup, t.dataset, geometric_iou(cm, t.space.empty_id()),
                      miou(cm, t.space.empty_id())});
    }
  }
  return rows;
}

}  // namespace mdocc::metrics
