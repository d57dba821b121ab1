// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "mdocc/c2f.hpp"
#include "mdocc/codec.hpp"
#include "mdocc/geom.hpp"
#include "mdocc/ini.hpp"

namespace mdocc::app {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config.

namespace {

std::string join_u64(const std::vector<std::uint64_t>& v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(std::to_string(x));
  return join(parts, ',');
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw Error(ErrorCode::ConfigError, "expected true or false, got '" + s + "'");
}

const std::set<std::string> kSetups{"single-A", "single-B", "direct_merge", "mdt",
                                    "pretrain_finetune"};

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (out.empty()) fail("[experiment] out must not be empty");
  if (presets.empty()) fail("[data] presets must not be empty");
  for (const auto& p : presets)
    if (p != "A" && p != "B") fail("[data] unknown preset '" + p + "'");
  if (taxonomy != "split" && taxonomy != "twin") fail("[data] taxonomy must be split or twin");
  if (datasets.empty()) fail("[train] datasets must not be empty");
  for (const auto& d : datasets)
    if (std::find(presets.begin(), presets.end(), d) == presets.end())
      fail("[train] dataset '" + d + "' is not a synthesized preset");
  if (epochs == 0) fail("[train] epochs must be >= 1");
  if (batch_size == 0) fail("[train] batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    fail("[train] learning_rate must be positive");
  if (hidden == 0) fail("[train] hidden must be >= 1");
  if (!cyl_radius_bins || !cyl_angle_bins || !cyl_height_bins) fail("[train] cylinder bins must be >= 1");
  if (stride == 0) fail("[train] stride must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("[labels] lambda must be >= 0");
  if (!(tau >= 0.0)) fail("[labels] tau must be >= 0");
  if (eta == 0) fail("[eval] eta must be >= 1");
  for (const auto& s : setups)
    if (!kSetups.count(s)) fail("[eval] unknown setup '" + s + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  const IniDoc doc = parse_ini(text);
  ExperimentConfig c;
  const std::set<std::string> sections{"experiment", "data", "train", "labels", "eval"};
  for (const auto& s : doc.sections) {
    if (!sections.count(s.name)) throw Error(ErrorCode::ConfigError, "unknown section [" + s.name + "]");
    for (const auto& [k, v] : s.entries) {
      const std::string key = s.name + "." + k;
      if (key == "experiment.seed") c.seed = parse_u64(v);
      else if (key == "experiment.out") c.out = v;
      else if (key == "data.presets") c.presets = split(v, ',');
      else if (key == "data.taxonomy") c.taxonomy = v;
      else if (key == "data.train_scenes") c.train_scenes = parse_u64(v);
      else if (key == "data.test_scenes") c.test_scenes = parse_u64(v);
      else if (key == "train.regime") c.regime = model::parse_regime(v);
      else if (key == "train.datasets") c.datasets = split(v, ',');
      else if (key == "train.epochs") c.epochs = parse_u64(v);
      else if (key == "train.batch_size") c.batch_size = parse_u64(v);
      else if (key == "train.learning_rate") c.learning_rate = parse_double(v);
      else if (key == "train.hidden") c.hidden = parse_u64(v);
      else if (key == "train.class_weighting") c.class_weighting = model::parse_weighting(v);
      else if (key == "train.cyl_radius_bins") c.cyl_radius_bins = parse_u64(v);
      else if (key == "train.cyl_angle_bins") c.cyl_angle_bins = parse_u64(v);
      else if (key == "train.cyl_height_bins") c.cyl_height_bins = parse_u64(v);
      else if (key == "train.stride") c.stride = parse_u64(v);
      else if (key == "labels.lambda") c.lambda = parse_double(v);
      else if (key == "labels.tau") c.tau = v == "inf" ? labels::kNoPruning : parse_double(v);
      else if (key == "eval.eta") c.eta = parse_u64(v);
      else if (key == "eval.setups") c.setups = split(v, ',');
      else if (key == "eval.cross_domain") c.cross_domain = parse_bool(v);
      else if (key == "eval.seeds") {
        c.seeds.clear();
        for (const auto& s2 : split(v, ',')) c.seeds.push_back(parse_u64(s2));
      } else {
        throw Error(ErrorCode::ConfigError, "unknown key '" + k + "' in [" + s.name + "]");
      }
    }
  }
  c.validate();
  return c;
}

std::string to_text(const ExperimentConfig& c) {
  IniDoc doc;
  auto& e = doc.add("experiment");
  e.set("seed", std::to_string(c.seed));
  e.set("out", c.out);
  auto& d = doc.add("data");
  d.set("presets", join(c.presets, ','));
  d.set("taxonomy", c.taxonomy);
  d.set("train_scenes", std::to_string(c.train_scenes));
  d.set("test_scenes", std::to_string(c.test_scenes));
  auto& t = doc.add("train");
  t.set("regime", model::to_string(c.regime));
  t.set("datasets", join(c.datasets, ','));
  t.set("epochs", std::to_string(c.epochs));
  t.set("batch_size", std::to_string(c.batch_size));
  t.set("learning_rate", format_double(c.learning_rate));
  t.set("hidden", std::to_string(c.hidden));
  t.set("class_weighting", model::to_string(c.class_weighting));
  t.set("cyl_radius_bins", std::to_string(c.cyl_radius_bins));
  t.set("cyl_angle_bins", std::to_string(c.cyl_angle_bins));
  t.set("cyl_height_bins", std::to_string(c.cyl_height_bins));
  t.set("stride", std::to_string(c.stride));
  auto& l = doc.add("labels");
  l.set("lambda", format_double(c.lambda));
  l.set("tau", std::isinf(c.tau) ? "inf" : format_double(c.tau));
  auto& v = doc.add("eval");
  v.set("eta", std::to_string(c.eta));
  v.set("setups", join(c.setups, ','));
  v.set("cross_domain", c.cross_domain ? "true" : "false");
  v.set("seeds", join_u64(c.seeds));
  return format_ini(doc);
}

synth::TaxonomyMap taxonomy_by_name(const std::string& name) {
  if (name == "split") return synth::split_taxonomy();
  if (name == "twin") return synth::twin_taxonomy();
  throw Error(ErrorCode::ConfigError, "unknown taxonomy '" + name + "'");
}

DatasetSpec preset_by_name(const std::string& name, const synth::TaxonomyMap& tax) {
  const LabelSpace& space = tax.for_dataset(name).space;
  if (name == "A") return synth::preset_a(space);
  if (name == "B") return synth::preset_b(space);
  throw Error(ErrorCode::UnknownDataset, "unknown preset " + name);
}

// ---------------------------------------------------------------------------
// Pipeline pieces.

Preprocess own_preprocess(const DatasetSpec& d, const ExperimentConfig& c) {
  return {d.point_range, d.gt_geometry(), c.stride, c.cyl_radius_bins, c.cyl_angle_bins,
          c.cyl_height_bins};
}

Preprocess aligned_preprocess(const std::vector<DatasetSpec>& ds, const ExperimentConfig& c) {
  std::vector<Range3D> ranges;
  for (const auto& d : ds) ranges.push_back(d.gt_range);
  const Range3D r = geom::intersect_ranges(ranges);
  return {r, geometry_for(r, ds.front().voxel_size()), c.stride, c.cyl_radius_bins,
          c.cyl_angle_bins, c.cyl_height_bins};
}

model::Sample prepare_sample(const std::string& dataset, const PointCloud& cloud,
                             const OccupancyGrid* gt, Label empty_id, const Preprocess& pre) {
  const PointCloud cropped = geom::crop_points(cloud, pre.point_range);
  const auto spec = geom::CylGridSpec::covering(pre.point_range, pre.radius_bins, pre.angle_bins,
                                                pre.height_bins);
  const auto vol = geom::cylindrical_voxelize(cropped, spec);
  const GridGeometry cg = model::coarse_geometry(pre.gt, pre.stride);
  model::Sample s{dataset, cg.dims, model::gather_features(vol, cg), {}};
  if (gt) {
    const OccupancyGrid fine = resample(*gt, pre.gt, empty_id);
    const OccupancyGrid coarse = model::coarsen_labels(fine, pre.stride, empty_id);
    s.y.assign(coarse.labels().begin(), coarse.labels().end());
  }
  return s;
}

namespace {

std::string scene_stem(const std::string& split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", split.c_str(), i);
  return buf;
}

}  // namespace

std::vector<SceneData> load_split(const fs::path& out, const std::string& dataset,
                                  const std::string& split, std::size_t count) {
  std::vector<SceneData> scenes;
  for (std::size_t i = 0; i < count; ++i) {
    const fs::path base = out / "data" / dataset / scene_stem(split, i);
    fs::path cloud = base, grid = base;
    cloud += ".mply";
    grid += ".mocc";
    scenes.push_back({cloud_decode(read_file(cloud)), grid_decode(read_file(grid))});
  }
  return scenes;
}

OccupancyGrid eval_ground_truth(const OccupancyGrid& gt, const Range3D& range, double fine_voxel,
                                std::size_t stride, std::size_t eta, Label empty_id) {
  const OccupancyGrid fine = resample(gt, geometry_for(range, fine_voxel), empty_id);
  if (eta == stride) return fine;
  if (eta < stride && stride % eta == 0) return model::coarsen_labels(fine, stride / eta, empty_id);
  const double v = fine_voxel * double(stride) / double(eta);
  return resample(fine, geometry_for(range, v), empty_id);
}

// ---------------------------------------------------------------------------
// synth

namespace {

struct DataInfo {
  synth::TaxonomyMap taxonomy;
  std::vector<DatasetSpec> specs;  // presets, config order
  std::size_t train_scenes = 0, test_scenes = 0;

  const DatasetSpec& spec(const std::string& name) const {
    for (const auto& s : specs)
      if (s.name == name) return s;
    throw Error(ErrorCode::UnknownDataset, "dataset " + name + " was not synthesized");
  }
};

std::string range_text(const Range3D& r) {
  return join({format_double(r.x_min), format_double(r.x_max), format_double(r.y_min),
               format_double(r.y_max), format_double(r.z_min), format_double(r.z_max)},
              ',');
}

std::string labels_text(const std::vector<Label>& v) {
  std::vector<std::string> parts;
  for (auto l : v) parts.push_back(std::to_string(l));
  return join(parts, ',');
}

DataInfo read_manifest(const fs::path& out) {
  const IniDoc doc = parse_ini(read_text(out / "data" / "manifest.ini"));
  const auto& d = doc.get("data");
  if (d.get("version") != "1")
    throw Error(ErrorCode::VersionUnsupported, "manifest version " + d.get("version"));
  DataInfo info;
  info.taxonomy = taxonomy_by_name(d.get("taxonomy"));
  info.train_scenes = parse_u64(d.get("train_scenes"));
  info.test_scenes = parse_u64(d.get("test_scenes"));
  for (const auto& p : split(d.get("presets"), ','))
    info.specs.push_back(preset_by_name(p, info.taxonomy));
  return info;
}

}  // namespace

void cmd_synth(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out);
  const auto tax = taxonomy_by_name(cfg.taxonomy);
  std::vector<DatasetSpec> specs;
  for (const auto& p : cfg.presets) specs.push_back(preset_by_name(p, tax));

  IniDoc doc;
  auto& d = doc.add("data");
  d.set("version", "1");
  d.set("seed", std::to_string(cfg.seed));
  d.set("taxonomy", cfg.taxonomy);
  d.set("presets", join(cfg.presets, ','));
  d.set("train_scenes", std::to_string(cfg.train_scenes));
  d.set("test_scenes", std::to_string(cfg.test_scenes));
  auto& f = doc.add("fine");
  f.set("labels", join(tax.fine_space.names(), ','));
  f.set("empty", std::to_string(tax.fine_space.empty_id()));
  for (const auto& s : specs) {
    auto& sec = doc.add("dataset." + s.name);
    sec.set("beams", std::to_string(s.lidar.beam_count));
    sec.set("vfov_deg", format_double(s.lidar.vfov_min_deg) + "," + format_double(s.lidar.vfov_max_deg));
    sec.set("har_deg", format_double(s.lidar.horiz_angular_res_deg));
    sec.set("max_range_m", format_double(s.lidar.max_range_m));
    sec.set("point_range", range_text(s.point_range));
    sec.set("gt_range", range_text(s.gt_range));
    sec.set("grid_dims", std::to_string(s.grid_dims.d) + "," + std::to_string(s.grid_dims.h) + "," +
                             std::to_string(s.grid_dims.w));
    const auto& t = tax.for_dataset(s.name);
    sec.set("labels", join(t.space.names(), ','));
    sec.set("empty", std::to_string(t.space.empty_id()));
    sec.set("projection", labels_text(t.projection));
  }
  fs::create_directories(out / "data");
  for (const auto& s : specs) fs::create_directories(out / "data" / s.name);

  Rng rng(cfg.seed, "synth");
  for (const std::string split : {"train", "test"}) {
    const std::size_t n = split == "train" ? cfg.train_scenes : cfg.test_scenes;
    for (std::size_t i = 0; i < n; ++i) {
      const OccupancyGrid scene = synth::gen_scene(synth::default_scene_spec(rng.next_u64()));
      for (const auto& s : specs) {
        const auto view = synth::derive_dataset_view(scene, tax, s);
        const fs::path base = out / "data" / s.name / scene_stem(split, i);
        fs::path cloud = base, grid = base;
        cloud += ".mply";
        grid += ".mocc";
        write_file(cloud, cloud_encode(view.cloud));
        write_file(grid, grid_encode(view.gt));
      }
    }
  }
  write_text(out / "data" / "manifest.ini", format_ini(doc));
}

// ---------------------------------------------------------------------------
// train

namespace {

enum class RangeMode { Own, Aligned };

/// Routing of one trained model, recorded in the checkpoint metadata.
struct Routing {
  model::Regime regime = model::Regime::Mdt;
  std::vector<std::string> datasets;
  RangeMode range = RangeMode::Own;
  std::vector<std::string> head_dataset;  // per head: dataset whose taxonomy it predicts ("" = union)
  std::vector<std::pair<std::string, std::string>> slot_of;  // dataset -> norm slot
  std::vector<std::pair<std::string, std::size_t>> head_of;  // dataset -> head index
  std::vector<std::pair<std::string, Label>> offset_of;      // dataset -> label offset

  template <class T>
  static const T* lookup(const std::vector<std::pair<std::string, T>>& v, const std::string& k) {
    for (const auto& [a, b] : v)
      if (a == k) return &b;
    return nullptr;
  }
};

model::Metadata routing_meta(const Routing& r, const ExperimentConfig& c) {
  model::Metadata m;
  m.emplace_back("regime", model::to_string(r.regime));
  m.emplace_back("datasets", join(r.datasets, ','));
  m.emplace_back("range", r.range == RangeMode::Own ? "own" : "aligned");
  m.emplace_back("head_datasets", join(r.head_dataset, ','));
  for (const auto& [d, s] : r.slot_of) m.emplace_back("slot." + d, s);
  for (const auto& [d, h] : r.head_of) m.emplace_back("head." + d, std::to_string(h));
  for (const auto& [d, o] : r.offset_of) m.emplace_back("offset." + d, std::to_string(o));
  m.emplace_back("seed", std::to_string(c.seed));
  m.emplace_back("epochs", std::to_string(c.epochs));
  m.emplace_back("batch_size", std::to_string(c.batch_size));
  m.emplace_back("learning_rate", format_double(c.learning_rate));
  m.emplace_back("class_weighting", model::to_string(c.class_weighting));
  m.emplace_back("stride", std::to_string(c.stride));
  m.emplace_back("cyl_bins", std::to_string(c.cyl_radius_bins) + "," +
                                 std::to_string(c.cyl_angle_bins) + "," +
                                 std::to_string(c.cyl_height_bins));
  return m;
}

const std::string& meta_get(const model::Metadata& m, const std::string& k) {
  for (const auto& [a, b] : m)
    if (a == k) return b;
  throw Error(ErrorCode::ConfigError, "checkpoint metadata lacks '" + k + "'");
}

Routing routing_from_meta(const model::Metadata& m) {
  Routing r;
  r.regime = model::parse_regime(meta_get(m, "regime"));
  r.datasets = split(meta_get(m, "datasets"), ',');
  r.range = meta_get(m, "range") == "own" ? RangeMode::Own : RangeMode::Aligned;
  r.head_dataset = split(meta_get(m, "head_datasets"), ',');
  if (r.head_dataset.empty()) r.head_dataset.push_back("");
  for (const auto& [k, v] : m) {
    if (k.rfind("slot.", 0) == 0) r.slot_of.emplace_back(k.substr(5), v);
    if (k.rfind("head.", 0) == 0) r.head_of.emplace_back(k.substr(5), parse_u64(v));
    if (k.rfind("offset.", 0) == 0) r.offset_of.emplace_back(k.substr(7), Label(parse_u64(v)));
  }
  return r;
}

std::string setup_dir_name(model::Regime regime, const std::vector<std::string>& datasets) {
  if (regime == model::Regime::Single) return "single-" + datasets.at(0);
  return model::to_string(regime);
}

struct Loaded {
  std::vector<SceneData> train, test;
};

void train_one(const ExperimentConfig& cfg, const DataInfo& info,
               const std::vector<std::string>& datasets, model::Regime regime) {
  const fs::path out(cfg.out);
  std::vector<DatasetSpec> specs;
  std::vector<Loaded> data;
  for (const auto& d : datasets) {
    specs.push_back(info.spec(d));
    data.push_back({load_split(out, d, "train", info.train_scenes),
                    load_split(out, d, "test", info.test_scenes)});
  }
  Routing r;
  r.regime = regime;
  r.datasets = datasets;
  r.range = regime == model::Regime::Mdt ? RangeMode::Aligned : RangeMode::Own;
  std::vector<std::pair<std::string, std::size_t>> heads;
  std::vector<std::string> slots;
  if (regime == model::Regime::DirectMerge) {
    std::size_t total = 0;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      r.offset_of.emplace_back(datasets[k], Label(total));
      r.head_of.emplace_back(datasets[k], 0);
      r.slot_of.emplace_back(datasets[k], "shared");
      total += specs[k].label_space.size();
    }
    heads.emplace_back("union", total);
    r.head_dataset.push_back("");
    slots.push_back("shared");
  } else {
    for (std::size_t k = 0; k < specs.size(); ++k) {
      heads.emplace_back(datasets[k], specs[k].label_space.size());
      r.head_dataset.push_back(datasets[k]);
      r.head_of.emplace_back(datasets[k], k);
      r.offset_of.emplace_back(datasets[k], 0);
      const std::string slot = regime == model::Regime::PretrainFinetune ? "shared" : datasets[k];
      r.slot_of.emplace_back(datasets[k], slot);
      if (std::find(slots.begin(), slots.end(), slot) == slots.end()) slots.push_back(slot);
    }
  }
  model::ModelParams params = model::ModelParams::init(cfg.hidden, heads, slots, cfg.seed);

  const Preprocess aligned = r.range == RangeMode::Aligned ? aligned_preprocess(specs, cfg)
                                                           : Preprocess{};
  std::vector<model::Stream> streams;
  std::size_t union_classes = heads.size() == 1 ? heads[0].second : 0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& sp = specs[k];
    const Preprocess pre = r.range == RangeMode::Aligned ? aligned : own_preprocess(sp, cfg);
    model::Stream s;
    s.name = sp.name;
    s.head = *Routing::lookup(r.head_of, sp.name);
    s.slot = params.norm.slot(*Routing::lookup(r.slot_of, sp.name));
    s.offset = *Routing::lookup(r.offset_of, sp.name);
    s.space = sp.label_space;
    const Label e = sp.label_space.empty_id();
    for (const auto& sc : data[k].train) s.train.push_back(prepare_sample(sp.name, sc.cloud, &sc.gt, e, pre));
    for (const auto& sc : data[k].test) s.test.push_back(prepare_sample(sp.name, sc.cloud, &sc.gt, e, pre));
    const std::size_t hc = regime == model::Regime::DirectMerge ? union_classes : sp.label_space.size();
    s.head_to_dataset.assign(hc, std::nullopt);
    for (std::size_t l = 0; l < sp.label_space.size(); ++l) s.head_to_dataset[l + s.offset] = Label(l);
    streams.push_back(std::move(s));
  }

  model::TrainConfig tc;
  tc.regime = regime;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.seed = cfg.seed;
  tc.weighting = cfg.class_weighting;
  const model::TrainResult res = model::train(tc, streams, std::move(params));
  const fs::path dir = out / "train" / setup_dir_name(regime, datasets);
  write_file(dir / "model.mckpt", model::checkpoint_encode(res.params, routing_meta(r, cfg)));
  write_text(dir / "metrics.csv", model::metric_log_csv(res.log));
}

}  // namespace

std::vector<std::string> cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const DataInfo info = read_manifest(fs::path(cfg.out));
  std::vector<std::string> done;
  if (cfg.regime == model::Regime::Single) {
    for (const auto& d : cfg.datasets) {
      train_one(cfg, info, {d}, cfg.regime);
      done.push_back("single-" + d);
    }
  } else {
    train_one(cfg, info, cfg.datasets, cfg.regime);
    done.push_back(model::to_string(cfg.regime));
  }
  return done;
}

// ---------------------------------------------------------------------------
// learn-labels

namespace {

struct LoadedModel {
  model::ModelParams params;
  Routing routing;
};

/// Preprocessing a model applies to a dataset's data.
Preprocess model_preprocess(const LoadedModel& m, const DataInfo& info, const std::string& data,
                            std::size_t head, const ExperimentConfig& cfg) {
  std::vector<DatasetSpec> specs;
  for (const auto& d : m.routing.datasets) specs.push_back(info.spec(d));
  if (m.routing.range == RangeMode::Aligned) return aligned_preprocess(specs, cfg);
  const bool trained_on = std::find(m.routing.datasets.begin(), m.routing.datasets.end(), data) !=
                          m.routing.datasets.end();
  if (trained_on) return own_preprocess(info.spec(data), cfg);
  const std::string& hd = m.routing.head_dataset.at(head);
  return own_preprocess(info.spec(hd.empty() ? m.routing.datasets.front() : hd), cfg);
}

std::size_t model_slot(const LoadedModel& m, const std::string& data, std::size_t head) {
  if (const auto* s = Routing::lookup(m.routing.slot_of, data)) return m.params.norm.slot(*s);
  const std::string& hd = m.routing.head_dataset.at(head);
  return m.params.norm.slot(*Routing::lookup(m.routing.slot_of, hd.empty() ? m.routing.datasets.front() : hd));
}

ExperimentConfig with_model_shape(ExperimentConfig cfg, const model::Metadata& meta) {
  cfg.stride = parse_u64(meta_get(meta, "stride"));
  const auto bins = split(meta_get(meta, "cyl_bins"), ',');
  if (bins.size() != 3) throw Error(ErrorCode::ConfigError, "malformed cyl_bins metadata");
  cfg.cyl_radius_bins = parse_u64(bins[0]);
  cfg.cyl_angle_bins = parse_u64(bins[1]);
  cfg.cyl_height_bins = parse_u64(bins[2]);
  return cfg;
}

}  // namespace

labels::UnifiedSpace cmd_learn_labels(const ExperimentConfig& cfg0) {
  cfg0.validate();
  const fs::path out(cfg0.out);
  const DataInfo info = read_manifest(out);
  const fs::path ckpt = out / "train" / "mdt" / "model.mckpt";
  auto [params, meta] = model::checkpoint_decode(read_file(ckpt));
  const ExperimentConfig cfg = with_model_shape(cfg0, meta);
  LoadedModel m{std::move(params), routing_from_meta(meta)};
  if (m.routing.regime != model::Regime::Mdt)
    throw Error(ErrorCode::ConfigError, "learn-labels needs an mdt checkpoint");
  labels::Corpus corpus;
  std::vector<LabelSpace> spaces;
  for (const auto& d : m.routing.datasets) {
    const std::size_t head = *Routing::lookup(m.routing.head_of, d);
    const Preprocess pre = model_preprocess(m, info, d, head, cfg);
    std::vector<ScoreGrid> grids;
    for (const auto& sc : load_split(out, d, "train", info.train_scenes)) {
      const model::Sample s = prepare_sample(d, sc.cloud, nullptr, 0, pre);
      grids.push_back(labels::softmax(
          model::forward(m.params, s, model_slot(m, d, head), head, geom::NormMode::Eval)));
    }
    corpus.grids.push_back(std::move(grids));
    spaces.push_back(info.spec(d).label_space);
  }
  auto u = labels::learn_unified(corpus, m.routing.datasets, spaces, cfg.lambda, cfg.tau);
  write_text(out / "labels" / "unified.ini", labels::to_document(u));
  return u;
}

// ---------------------------------------------------------------------------
// eval

std::vector<metrics::ReportRow> cmd_eval(const ExperimentConfig& cfg0) {
  cfg0.validate();
  const fs::path out(cfg0.out);
  const DataInfo info = read_manifest(out);
  std::optional<labels::UnifiedSpace> unified;
  if (fs::exists(out / "labels" / "unified.ini"))
    unified = labels::from_document(read_text(out / "labels" / "unified.ini"));

  std::vector<DatasetSpec> all_specs = info.specs;
  std::vector<Range3D> ranges;
  for (const auto& s : all_specs) ranges.push_back(s.gt_range);
  const Range3D eval_range = geom::intersect_ranges(ranges);

  std::map<std::string, std::vector<SceneData>> test;
  for (const auto& s : all_specs) test[s.name] = load_split(out, s.name, "test", info.test_scenes);

  std::vector<metrics::ReportRow> rows;
  for (const auto& setup : cfg0.setups) {
    auto [params, meta] = model::checkpoint_decode(read_file(out / "train" / setup / "model.mckpt"));
    const ExperimentConfig cfg = with_model_shape(cfg0, meta);
    LoadedModel m{std::move(params), routing_from_meta(meta)};
    for (std::size_t head = 0; head < m.params.heads.size(); ++head) {
      const std::string& hd = m.routing.head_dataset.at(head);
      const bool multi = m.params.heads.size() > 1;
      const std::string row_setup = multi ? setup + ":" + hd : setup;
      for (const auto& target : all_specs) {
        const std::string& td = target.name;
        const bool union_head = hd.empty();
        const bool in_domain = union_head || hd == td;
        if (!in_domain && !cfg.cross_domain) continue;
        if (union_head && !Routing::lookup(m.routing.offset_of, td)) continue;
        const Preprocess pre = model_preprocess(m, info, td, head, cfg);
        const std::size_t slot = model_slot(m, td, head);
        Label head_empty = 0;
        if (union_head) {
          head_empty = Label(*Routing::lookup(m.routing.offset_of, td) + target.label_space.empty_id());
        } else {
          head_empty = info.spec(hd).label_space.empty_id();
        }
        metrics::Prediction pred{row_setup, union_head ? td : hd, {}, {}};
        metrics::Target tgt{td, target.label_space, {}};
        std::size_t idx = 0;
        for (const auto& sc : test.at(td)) {
          const model::Sample s = prepare_sample(td, sc.cloud, nullptr, 0, pre);
          const ScoreGrid scores = model::forward(m.params, s, slot, head, geom::NormMode::Eval);
          const OccupancyGrid coarse(model::coarse_geometry(pre.gt, pre.stride), scores.num_classes(),
                                     scores.argmax());
          const OccupancyGrid refined = c2f::refine(m.params, s, slot, head, coarse, head_empty, cfg.eta);
          OccupancyGrid gt = eval_ground_truth(sc.gt, eval_range, target.voxel_size(), pre.stride,
                                               cfg.eta, target.label_space.empty_id());
          OccupancyGrid p = resample(refined, gt.geometry(), head_empty);
          char name[64];
          std::snprintf(name, sizeof name, "%s_on_%s_%04zu.mocc", row_setup.c_str(), td.c_str(), idx++);
          write_file(out / "eval" / "grids" / name, grid_encode(p));
          pred.grids.push_back(std::move(p));
          tgt.gts.push_back(std::move(gt));
        }
        if (union_head) {
          const Label off = *Routing::lookup(m.routing.offset_of, td);
          std::vector<std::optional<Label>> table(m.params.heads[head].classes);
          for (std::size_t l = 0; l < target.label_space.size(); ++l) table[off + l] = Label(l);
          pred.translations[td] = table;
        }
        const auto cell = metrics::cross_eval(std::span(&pred, 1), std::span(&tgt, 1),
                                              unified ? &*unified : nullptr, eval_range);
        rows.insert(rows.end(), cell.begin(), cell.end());
      }
    }
  }
  write_text(out / "eval" / "report.csv", metrics::report_csv(rows));
  return rows;
}

// ---------------------------------------------------------------------------
// report

namespace {

std::optional<double> find_iou(const std::vector<metrics::ReportRow>& rows,
                               const std::string& setup, const std::string& dataset) {
  for (const auto& r : rows)
    if (r.setup == setup && r.dataset == dataset) return r.iou;
  throw Error(ErrorCode::InvalidArgument, "report lacks row " + setup + "," + dataset);
}

std::vector<metrics::ReportRow> read_report(const fs::path& path) {
  std::vector<metrics::ReportRow> rows;
  const auto lines = split(read_text(path), '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 4) throw Error(ErrorCode::IoFailure, "malformed report line");
    auto num = [](const std::string& s) -> std::optional<double> {
      if (s == "nan") return std::nullopt;
      return parse_double(s);
    };
    rows.push_back({f[0], f[1], num(f[2]), num(f[3])});
  }
  return rows;
}

}  // namespace

std::vector<Trend> seed_trends(const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path out(cfg.out);
  const auto rows = read_report(out / "eval" / "report.csv");
  std::vector<Trend> t;
  auto cmp = [&](const std::string& check, std::optional<double> lhs, std::optional<double> rhs) {
    Trend tr{seed, check, lhs.value_or(std::nan("")), rhs.value_or(std::nan("")), false};
    tr.holds = lhs && rhs && *lhs >= *rhs;
    t.push_back(tr);
  };
  cmp("cross_iou_A_on_B_mdt_ge_single", find_iou(rows, "mdt:A", "B"), find_iou(rows, "single-A", "B"));
  cmp("cross_iou_B_on_A_mdt_ge_single", find_iou(rows, "mdt:B", "A"), find_iou(rows, "single-B", "A"));
  cmp("in_domain_iou_A_mdt_ge_direct_merge", find_iou(rows, "mdt:A", "A"),
      find_iou(rows, "direct_merge", "A"));
  cmp("in_domain_iou_B_mdt_ge_direct_merge", find_iou(rows, "mdt:B", "B"),
      find_iou(rows, "direct_merge", "B"));

  // Forgetting: dataset A's logged IoU after finetuning vs its best during pretraining.
  const auto lines = split(read_text(out / "train" / "pretrain_finetune" / "metrics.csv"), '\n');
  double peak = -1.0, last = std::nan("");
  std::size_t max_epoch = 0;
  std::vector<std::pair<std::size_t, double>> a_iou;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 5 || f[1] != cfg.datasets.at(0) || f[3] == "nan") continue;
    a_iou.emplace_back(parse_u64(f[0]), parse_double(f[3]));
    max_epoch = std::max<std::size_t>(max_epoch, parse_u64(f[0]));
  }
  for (const auto& [e, v] : a_iou) {
    if (e <= cfg.epochs) peak = std::max(peak, v);
    if (e == max_epoch) last = v;
  }
  Trend f{seed, "forgetting_A_final_lt_pretrain_peak", last, peak, last < peak};
  t.push_back(f);
  return t;
}

std::string trends_csv(const std::vector<Trend>& trends) {
  std::string out = "seed,check,lhs,rhs,holds\n";
  char buf[64];
  for (const auto& t : trends) {
    out += std::to_string(t.seed) + "," + t.check + ",";
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,", t.lhs, t.rhs);
    out += buf;
    out += t.holds ? "1\n" : "0\n";
  }
  return out;
}

std::vector<Trend> cmd_report(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Trend> all;
  for (std::uint64_t seed : cfg.seeds) {
    ExperimentConfig c = cfg;
    c.seed = seed;
    c.out = (fs::path(cfg.out) / ("seed_" + std::to_string(seed))).string();
    c.datasets = {"A", "B"};
    c.presets = {"A", "B"};
    cmd_synth(c);
    for (auto regime : {model::Regime::Single, model::Regime::Mdt, model::Regime::DirectMerge,
                        model::Regime::PretrainFinetune}) {
      c.regime = regime;
      cmd_train(c);
    }
    cmd_learn_labels(c);
    c.setups = {"single-A", "single-B", "direct_merge", "mdt"};
    cmd_eval(c);
    const auto t = seed_trends(c, seed);
    all.insert(all.end(), t.begin(), t.end());
  }
  write_text(fs::path(cfg.out) / "trends.csv", trends_csv(all));
  return all;
}

}  // namespace mdocc::app
