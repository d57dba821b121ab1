// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one "criterion N: PASS|FAIL ..." line per criterion run;
// exits non-zero when any of them fails.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gradcheck.hpp"
#include "mdocc/app.hpp"
#include "mdocc/c2f.hpp"
#include "mdocc/codec.hpp"
#include "mdocc/geom.hpp"
#include "mdocc/labels.hpp"
#include "mdocc/metrics.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mdocc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::current_path() / "acceptance_work" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome range_alignment() {
  const std::vector<Range3D> rs{Range3D::checked(-51.2, 51.2, -51.2, 51.2, -5.0, 3.0),
                                Range3D::checked(0.0, 51.2, -25.6, 25.6, -3.4, 3.0)};
  const Range3D r = geom::intersect_ranges(rs);
  const bool ok = r.x_min == 0.0 && r.x_max == 51.2 && r.y_min == -25.6 && r.y_max == 25.6 &&
                  r.z_min == -3.4 && r.z_max == 3.0;
  return {ok, fmt("L=[%g,%g] W=[%g,%g] H=[%g,%g]", r.x_min, r.x_max, r.y_min, r.y_max, r.z_min,
                  r.z_max)};
}

Outcome metric_oracle() {
  Rng rng(2026, "acceptance-metrics");
  const GridGeometry g{{16, 16, 16}, 0.2, {0, 0, 0}};
  std::size_t bad = 0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t classes = 2 + rng.below(10);
    // Skewed draws so that empty dominates as in real grids.
    auto draw = [&] {
      std::vector<Label> v(g.dims.count());
      for (auto& l : v) l = rng.bernoulli(0.6) ? 0 : Label(rng.below(classes));
      return v;
    };
    const auto p = draw(), t = draw();
    metrics::ConfusionMatrix cm(classes);
    metrics::accumulate(cm, OccupancyGrid(g, classes, p), OccupancyGrid(g, classes, t),
                        g.extent());
    const auto o = oracle::tally(p, t, classes);
    for (std::size_t c = 0; c < classes; ++c) {
      std::uint64_t fp = 0, fn = 0;
      for (std::size_t k = 0; k < classes; ++k)
        if (k != c) {
          fp += cm.at(k, c);
          fn += cm.at(c, k);
        }
      bad += cm.at(c, c) != o.tp[c] || fp != o.fp[c] || fn != o.fn[c];
    }
    const auto gi = metrics::geometric_iou(cm, 0), go = oracle::geometric_iou(p, t, 0);
    const auto mi = metrics::miou(cm, 0), mo = oracle::miou(p, t, classes, 0);
    bad += gi.has_value() != go.has_value() || (gi && std::abs(*gi - *go) > 1e-12);
    bad += mi.has_value() != mo.has_value() || (mi && std::abs(*mi - *mo) > 1e-12);
  }
  return {bad == 0, fmt("100 pairs, %zu mismatches", bad)};
}

Outcome dsnorm_exactness() {
  Rng rng(3, "acceptance-dsnorm");
  double worst = 0.0;
  for (int it = 0; it < 20; ++it) {
    const std::size_t f = 1 + rng.below(6), n = 1 + rng.below(40);
    geom::NormState st(f);
    st.register_dataset("A");
    for (auto& v : st.gamma) v = rng.uniform(-2, 2);
    for (auto& v : st.beta) v = rng.uniform(-2, 2);
    std::vector<double> x(n * f);
    for (auto& v : x) v = rng.uniform(-10, 10);
    const auto y = geom::dsnorm_forward(x, n, 0, st, geom::NormMode::Train);
    for (std::size_t j = 0; j < f; ++j) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < n; ++i) mean += x[i * f + j];
      mean /= double(n);
      for (std::size_t i = 0; i < n; ++i) var += (x[i * f + j] - mean) * (x[i * f + j] - mean);
      var /= double(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double want = st.gamma[j] * (x[i * f + j] - mean) / std::sqrt(var + st.eps) +
                            st.beta[j];
        worst = std::max(worst, std::abs(y[i * f + j] - want));
      }
    }
  }

  // Two stationary streams with distinct per-feature statistics.
  const std::vector<double> mu_a{5.0, -3.0, 1.5}, sd_a{2.0, 0.5, 1.0};
  const std::vector<double> mu_b{-4.0, 8.0, 0.7}, sd_b{0.3, 3.0, 0.2};
  geom::NormState st(3);
  st.register_dataset("A");
  st.register_dataset("B");
  const std::size_t n = 8192;
  bool isolated = true;
  std::vector<double> x(n * 3);
  for (int b = 0; b < 1000; ++b) {
    for (int d = 0; d < 2; ++d) {
      const auto& mu = d ? mu_b : mu_a;
      const auto& sd = d ? sd_b : sd_a;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 3; ++j) x[i * 3 + j] = mu[j] + sd[j] * rng.normal();
      const geom::NormStats other = st.stats(1 - d);
      geom::dsnorm_forward(x, n, std::size_t(d), st, geom::NormMode::Train);
      const auto& now = st.stats(1 - d);
      isolated &= now.running_mean == other.running_mean &&
                  now.running_var == other.running_var && now.updates == other.updates;
    }
  }
  double rel = 0.0;
  for (int d = 0; d < 2; ++d)
    for (std::size_t j = 0; j < 3; ++j) {
      const double mu = d ? mu_b[j] : mu_a[j], var = std::pow(d ? sd_b[j] : sd_a[j], 2);
      rel = std::max(rel, std::abs(st.stats(d).running_mean[j] - mu) / std::abs(mu));
      rel = std::max(rel, std::abs(st.stats(d).running_var[j] - var) / var);
    }
  return {worst <= 1e-12 && rel < 0.02 && isolated,
          fmt("closed-form max err %.2e, running-stat max rel err %.4f, isolation %s", worst,
              rel, isolated ? "bit-identical" : "VIOLATED")};
}

Outcome gradient_check() {
  std::size_t coords = 0, within = 0;
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto in = oracle::grad_instance(100 + s, {4, 4, 4}, 8, 2);
    const auto r = oracle::grad_check(in.params, in.batch(), in.weights, model::Reduction::Mean,
                                      1e-5, 1e-4);
    coords += r.coords;
    within += r.within;
    worst = std::max(worst, r.worst);
  }
  const double frac = double(within) / double(coords);
  return {frac >= 0.99,
          fmt("%zu/%zu coordinates within 1e-4 (%.4f), worst %.2e", within, coords, frac, worst)};
}

// Random solver instances shared by criteria 5 and 7. Pair costs in [0, 0.2); triple
// costs below twice the largest pair cost, so tau = max pair cost keeps every triple.
struct Instance {
  std::vector<std::size_t> counts;
  std::vector<labels::MergeCandidate> table;  // every allowed group with its cost
  double max_pair = 0.0;
};

std::vector<Instance> solver_instances() {
  Rng rng(5, "acceptance-ilp");
  std::vector<Instance> out;
  for (int i = 0; i < 50; ++i) {
    Instance in;
    const std::size_t a = 1 + rng.below(9);
    in.counts = {a, 1 + rng.below(10 - a)};
    in.table = oracle::random_candidates(in.counts, rng, 0.2, 0.0);
    out.push_back(std::move(in));
  }
  for (int i = 0; i < 10; ++i) {
    Instance in;
    in.counts = {1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    in.table = oracle::random_candidates(in.counts, rng, 0.2, 0.4);
    out.push_back(std::move(in));
  }
  for (auto& in : out) {
    for (const auto& c : in.table)
      if (c.size() == 2) in.max_pair = std::max(in.max_pair, c.cost);
    // Rescale triples onto [0, 2 * max pair).
    for (auto& c : in.table)
      if (c.size() == 3) c.cost *= 2.0 * in.max_pair / 0.4;
  }
  return out;
}

labels::CostFn table_cost(const Instance& in) {
  auto lookup = oracle::cost_lookup(in.table);
  return [lookup](const labels::MergeCandidate& c) { return lookup(c.members).value_or(1e9); };
}

Outcome solver_exactness() {
  const double lambda = 0.07;
  std::size_t equal = 0, n2 = 0, n3 = 0;
  for (const auto& in : solver_instances()) {
    const auto cands = labels::enumerate_candidates(in.counts, table_cost(in), labels::kNoPruning);
    const auto sel = labels::solve_selection(in.counts, cands, lambda);
    const auto ex = oracle::exhaustive_cover(in.counts, lambda, oracle::cost_lookup(in.table));
    equal += ex.found && sel.objective == ex.objective;
    (in.counts.size() == 2 ? n2 : n3)++;
  }
  return {equal == n2 + n3, fmt("%zu/%zu instances (%zu two-dataset, %zu three-dataset) equal",
                                equal, n2 + n3, n2, n3)};
}

Outcome label_recovery() {
  const auto tax = synth::twin_taxonomy();
  const auto& ta = tax.for_dataset("A");
  const auto& tb = tax.for_dataset("B");
  const DatasetSpec sa = synth::preset_a(ta.space), sb = synth::preset_b(tb.space);
  const std::vector<Range3D> ranges{sa.gt_range, sb.gt_range};
  const GridGeometry common = geometry_for(geom::intersect_ranges(ranges), 0.2);
  const auto corr = tax.correspondence("A", "B");
  const double noise = 0.05;
  std::size_t recovered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed, "acceptance-twin");
    labels::Corpus corpus{{{}, {}}};
    for (int s = 0; s < 8; ++s) {  // rare classes need a few scenes to rise above the noise
      const auto scene = synth::gen_scene(synth::default_scene_spec(rng.next_u64()));
      const OccupancyGrid gts[2] = {
          resample(synth::derive_dataset_view(scene, tax, sa).gt, common, ta.space.empty_id()),
          resample(synth::derive_dataset_view(scene, tax, sb).gt, common, tb.space.empty_id())};
      for (int d = 0; d < 2; ++d) {
        const std::size_t c = gts[d].num_classes();
        std::vector<double> onehot(common.dims.count() * c, 0.0);
        for (std::size_t v = 0; v < common.dims.count(); ++v) {
          const Label l = rng.bernoulli(noise) ? Label(rng.below(c)) : gts[d][v];
          onehot[v * c + l] = 1.0;
        }
        corpus.grids[d].emplace_back(common.dims, c, std::move(onehot));
      }
    }
    const auto u = labels::learn_unified(corpus, {"A", "B"}, {ta.space, tb.space}, 0.05, 0.1);
    bool ok = u.space.size() == ta.space.size() && u.space.size() == tb.space.size();
    for (const auto& [a, b] : corr) ok &= u.transforms[0].target(a) == u.transforms[1].target(b);
    recovered += ok;
    if (!ok) {
      std::fprintf(stderr, "seed %llu unified:", (unsigned long long)seed);
      for (std::size_t c = 0; c < u.space.size(); ++c)
        std::fprintf(stderr, " %s", u.space.name(Label(c)).c_str());
      std::fprintf(stderr, "\n");
    }
  }
  return {recovered == 10, fmt("%zu/10 seeds recover the taxonomy map at %.0f%% noise",
                               recovered, noise * 100)};
}

Outcome pruning_soundness() {
  const double lambda = 0.07;
  std::size_t same = 0, total = 0;
  for (const auto& in : solver_instances()) {
    const auto cost = table_cost(in);
    const auto full = labels::enumerate_candidates(in.counts, cost, labels::kNoPruning);
    const auto pruned = labels::enumerate_candidates(in.counts, cost, in.max_pair);
    const auto a = labels::solve_selection(in.counts, full, lambda);
    const auto b = labels::solve_selection(in.counts, pruned, lambda);
    std::vector<std::vector<labels::LabelRef>> ga, gb;
    for (auto t : a.chosen) ga.push_back(full[t].members);
    for (auto t : b.chosen) gb.push_back(pruned[t].members);
    std::sort(ga.begin(), ga.end());
    std::sort(gb.begin(), gb.end());
    same += ga == gb;
    ++total;
  }
  return {same == total, fmt("%zu/%zu instances select the same mapping", same, total)};
}

Outcome coarse_to_fine() {
  const auto in = oracle::grad_instance(8, {32, 32, 32}, 8, 1);
  const auto& s = in.samples[0];
  const std::size_t classes = in.params.heads[in.head].classes;
  const auto pred = model::forward(in.params, s, in.slot, in.head, geom::NormMode::Eval).argmax();
  const OccupancyGrid coarse({s.dims, 0.4, {}}, classes, pred);
  const auto occ = c2f::occupied_voxels(coarse, 0);
  bool ok = !occ.empty() && occ.size() < s.dims.count();
  std::string detail = fmt("N_o=%zu;", occ.size());
  for (std::size_t eta : {1u, 2u, 4u}) {
    const auto q = c2f::split_voxels(occ, s.dims, eta);
    const auto fine = c2f::refine(in.params, s, in.slot, in.head, coarse, 0, eta);
    std::vector<char> queried(fine.dims().count(), 0);
    for (const auto& c : q.coords) queried[fine.dims().index(c[0], c[1], c[2])] = 1;
    std::size_t stray = 0;
    for (std::size_t i = 0; i < queried.size(); ++i) stray += !queried[i] && fine[i] != 0;
    const bool count_ok = q.coords.size() == occ.size() * eta * eta * eta;
    ok &= count_ok && stray == 0;
    detail += fmt(" eta=%zu |Q|=%zu stray=%zu;", eta, q.coords.size(), stray);
  }
  // eta = 1 against the coarse prediction itself, scored on the sample's labels.
  const OccupancyGrid gt({s.dims, 0.4, {}}, classes, s.y);
  const auto refined = c2f::refine(in.params, s, in.slot, in.head, coarse, 0, 1);
  metrics::ConfusionMatrix a(classes), b(classes);
  metrics::accumulate(a, coarse, gt, gt.geometry().extent());
  metrics::accumulate(b, refined, gt, gt.geometry().extent());
  const bool same = a == b && metrics::geometric_iou(a, 0) == metrics::geometric_iou(b, 0) &&
                    metrics::miou(a, 0) == metrics::miou(b, 0);
  ok &= same;
  detail += same ? " eta=1 metric-identical" : " eta=1 metrics differ";
  return {ok, detail};
}

app::ExperimentConfig report_config(const fs::path& out) {
  app::ExperimentConfig cfg;
  cfg.out = out.string();
  return cfg;
}

Outcome mdt_trend() {
  const auto trends = app::cmd_report(report_config(work_dir("criterion_9")));
  std::map<std::string, std::size_t> holds;
  for (const auto& t : trends)
    if (t.check.rfind("forgetting", 0) != 0) holds[t.check] += t.holds;
  bool ok = holds.size() == 4;
  std::string detail;
  for (const auto& [check, n] : holds) {
    ok &= n >= 4;
    detail += fmt("%s %zu/5; ", check.c_str(), n);
  }
  return {ok, detail};
}

Outcome forgetting() {
  const auto trends = app::cmd_report(report_config(work_dir("criterion_10")));
  std::size_t n = 0;
  std::string detail;
  for (const auto& t : trends)
    if (t.check.rfind("forgetting", 0) == 0) {
      n += t.holds;
      detail += fmt("seed %llu final %.4f peak %.4f; ", (unsigned long long)t.seed, t.lhs, t.rhs);
    }
  return {n >= 4, fmt("%zu/5 seeds drop below the pretrain peak: ", n) + detail};
}

int run(const std::string& cmd) {
  const int st = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

// synth, train (every regime the eval needs), learn-labels, eval through the CLI.
bool pipeline(const fs::path& dir) {
  const std::string cli = MDOCC_CLI_PATH;
  const std::string base = " --seed 42 --out " + (dir / "out").string();
  if (run(cli + " synth" + base)) return false;
  for (const char* regime : {"single", "mdt", "direct_merge"}) {
    const fs::path cfg = dir / (std::string(regime) + ".ini");
    std::ofstream(cfg) << "[train]\nregime = " << regime << "\n";
    if (run(cli + " train --config " + cfg.string() + base)) return false;
  }
  return run(cli + " learn-labels" + base) == 0 && run(cli + " eval" + base) == 0;
}

Outcome determinism() {
  const fs::path a = work_dir("criterion_11_a"), b = work_dir("criterion_11_b");
  if (!pipeline(a) || !pipeline(b)) return {false, "pipeline failed"};
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "out")) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / "out" / fs::relative(e.path(), a / "out");
    ++files;
    differ += !fs::exists(other) || read_file(e.path()) != read_file(other);
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b / "out")) files_b += e.is_regular_file();
  return {files > 0 && differ == 0 && files == files_b,
          fmt("%zu artifacts, %zu differ", files, differ + (files_b != files))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"mdocc acceptance checks"};
  std::vector<int> only;
  cli.add_option("--only", only, "criterion numbers to run (default: all)")
      ->check(CLI::Range(1, 11));
  CLI11_PARSE(cli, argc, argv);

  const std::vector<std::function<Outcome()>> checks{
      range_alignment, metric_oracle,    dsnorm_exactness, gradient_check,
      solver_exactness, label_recovery, pruning_soundness, coarse_to_fine,
      mdt_trend,        forgetting,     determinism};
  if (only.empty())
    for (int i = 1; i <= 11; ++i) only.push_back(i);
  int failed = 0;
  for (int id : only) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[std::size_t(id - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s (%.1fs) %s\n", id, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
