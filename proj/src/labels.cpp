// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/labels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mdocc/assignment.hpp"
#include "mdocc/ini.hpp"

namespace mdocc::labels {

MappingMatrix::MappingMatrix(std::size_t cols, std::vector<std::size_t> target)
    : cols_(cols), target_(std::move(target)) {
  std::vector<char> seen(cols_, 0);
  for (std::size_t t : target_) {
    if (t >= cols_) throw Error(ErrorCode::InvalidArgument, "mapping target out of range");
    if (seen[t]) throw Error(ErrorCode::InvalidArgument, "two labels map onto one unified column");
    seen[t] = 1;
  }
}

MappingMatrix MappingMatrix::many_to_one(std::size_t cols, std::vector<std::size_t> target) {
  for (std::size_t t : target)
    if (t >= cols) throw Error(ErrorCode::InvalidArgument, "mapping target out of range");
  MappingMatrix m;
  m.cols_ = cols;
  m.target_ = std::move(target);
  return m;
}

MappingMatrix MappingMatrix::identity(std::size_t n) {
  std::vector<std::size_t> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = i;
  return MappingMatrix(n, std::move(t));
}

std::optional<std::size_t> MappingMatrix::preimage(std::size_t c) const {
  for (std::size_t r = 0; r < target_.size(); ++r)
    if (target_[r] == c) return r;
  return std::nullopt;
}

MappingMatrix MappingMatrix::then(const MappingMatrix& next) const {
  if (next.rows() != cols_) throw Error(ErrorCode::DimMismatch, "mapping composition shape");
  std::vector<std::size_t> t(target_.size());
  for (std::size_t r = 0; r < t.size(); ++r) t[r] = next.target(target_[r]);
  return MappingMatrix(next.cols(), std::move(t));
}

ScoreGrid softmax(const ScoreGrid& logits) {
  const std::size_t c = logits.num_classes();
  std::vector<double> out(logits.scores().begin(), logits.scores().end());
  for (std::size_t v = 0; v < logits.voxels(); ++v) {
    double* s = &out[v * c];
    const double m = *std::max_element(s, s + c);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += (s[k] = std::exp(s[k] - m));
    for (std::size_t k = 0; k < c; ++k) s[k] /= z;
  }
  return ScoreGrid(logits.dims(), c, std::move(out));
}

MergedScores merged_score(std::span<const ScoreGrid> outputs,
                          std::span<const MappingMatrix> transforms) {
  if (outputs.empty() || outputs.size() != transforms.size())
    throw Error(ErrorCode::DimMismatch, "one transform per output required");
  const Dims dims = outputs[0].dims();
  const std::size_t u = transforms[0].cols();
  std::vector<double> denom(u, 0.0);
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k].dims() != dims) throw Error(ErrorCode::DimMismatch, "outputs differ in dims");
    if (transforms[k].cols() != u || transforms[k].rows() != outputs[k].num_classes())
      throw Error(ErrorCode::DimMismatch, "transform shape does not match output");
    for (std::size_t r = 0; r < transforms[k].rows(); ++r) denom[transforms[k].target(r)] += 1.0;
  }
  std::vector<double> d(dims.count() * u, 0.0);
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const auto& t = transforms[k];
    for (std::size_t v = 0; v < dims.count(); ++v)
      for (std::size_t r = 0; r < t.rows(); ++r) d[v * u + t.target(r)] += outputs[k].at(v, r);
  }
  MergedScores out;
  out.backed.resize(u);
  for (std::size_t c = 0; c < u; ++c) out.backed[c] = denom[c] > 0.0;
  for (std::size_t v = 0; v < dims.count(); ++v)
    for (std::size_t c = 0; c < u; ++c)
      if (denom[c] > 0.0) d[v * u + c] /= denom[c];
  out.scores = ScoreGrid(dims, u, std::move(d));
  return out;
}

ScoreGrid reproject(const ScoreGrid& unified, const MappingMatrix& t) {
  if (unified.num_classes() != t.cols()) throw Error(ErrorCode::DimMismatch, "reproject shape");
  std::vector<double> o(unified.voxels() * t.rows());
  for (std::size_t v = 0; v < unified.voxels(); ++v)
    for (std::size_t r = 0; r < t.rows(); ++r) o[v * t.rows() + r] = unified.at(v, t.target(r));
  return ScoreGrid(unified.dims(), t.rows(), std::move(o));
}

bool MergeCandidate::contains(LabelRef r) const {
  return std::find(members.begin(), members.end(), r) != members.end();
}

void Corpus::validate() const {
  if (grids.empty()) throw Error(ErrorCode::MisalignedCorpus, "corpus has no datasets");
  const std::size_t scenes = grids[0].size();
  for (const auto& g : grids) {
    if (g.size() != scenes) throw Error(ErrorCode::MisalignedCorpus, "scene counts differ");
    for (std::size_t s = 0; s < scenes; ++s) {
      if (g[s].dims() != grids[0][s].dims())
        throw Error(ErrorCode::MisalignedCorpus, "scene " + std::to_string(s) + " dims differ");
      if (g[s].num_classes() != g[0].num_classes())
        throw Error(ErrorCode::MisalignedCorpus, "class count changes between scenes");
    }
  }
}

std::size_t Corpus::classes(std::size_t dataset) const {
  const auto& g = grids.at(dataset);
  if (g.empty()) throw Error(ErrorCode::MisalignedCorpus, "dataset without scenes");
  return g[0].num_classes();
}

double merge_cost(const MergeCandidate& cand, const Corpus& corpus) {
  corpus.validate();
  const std::size_t n = cand.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty candidate");
  for (const auto& m : cand.members)
    if (m.dataset >= corpus.datasets() || m.label >= corpus.classes(m.dataset))
      throw Error(ErrorCode::MisalignedCorpus, "candidate member outside the corpus");
  if (n == 1) return 0.0;
  double total = 0.0;
  std::size_t voxels = 0;
  std::vector<double> o(n);
  for (std::size_t s = 0; s < corpus.grids[0].size(); ++s) {
    const std::size_t nv = corpus.grids[0][s].voxels();
    voxels += nv;
    for (std::size_t v = 0; v < nv; ++v) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        o[i] = corpus.grids[cand.members[i].dataset][s].at(v, cand.members[i].label);
        mean += o[i];
      }
      mean /= double(n);
      for (std::size_t i = 0; i < n; ++i) total += std::abs(o[i] - mean);
    }
  }
  if (voxels == 0) return 0.0;
  return total / (double(voxels) * double(n));
}

namespace {

bool member_less(const MergeCandidate& a, const MergeCandidate& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a.members < b.members;
}

}  // namespace

std::vector<MergeCandidate> enumerate_candidates(std::span<const std::size_t> counts,
                                                 const CostFn& cost, double tau) {
  if (!(tau >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be >= 0");
  std::vector<MergeCandidate> all;
  std::vector<MergeCandidate> level;
  for (std::size_t d = 0; d < counts.size(); ++d)
    for (std::size_t l = 0; l < counts[d]; ++l) level.push_back({{{d, l}}, 0.0});
  all = level;
  for (std::size_t n = 2; n <= counts.size() && !level.empty(); ++n) {
    std::set<std::vector<LabelRef>> grown;
    for (const auto& c : level) {
      std::vector<char> used(counts.size(), 0);
      for (const auto& m : c.members) used[m.dataset] = 1;
      for (std::size_t d = 0; d < counts.size(); ++d) {
        if (used[d]) continue;
        for (std::size_t l = 0; l < counts[d]; ++l) {
          auto members = c.members;
          members.push_back({d, l});
          std::sort(members.begin(), members.end());
          grown.insert(std::move(members));
        }
      }
    }
    std::vector<MergeCandidate> next;
    next.reserve(grown.size());
    for (const auto& m : grown) next.push_back({m, 0.0});
    const long count = long(next.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) next[std::size_t(i)].cost = cost(next[std::size_t(i)]);
    level.clear();
    for (auto& c : next)
      if (c.cost / double(n - 1) <= tau) level.push_back(std::move(c));
    all.insert(all.end(), level.begin(), level.end());
  }
  std::sort(all.begin(), all.end(), member_less);
  return all;
}

std::vector<MergeCandidate> enumerate_candidates(const Corpus& corpus, double tau) {
  corpus.validate();
  std::vector<std::size_t> counts(corpus.datasets());
  for (std::size_t d = 0; d < counts.size(); ++d) counts[d] = corpus.classes(d);
  return enumerate_candidates(
      counts, [&](const MergeCandidate& c) { return merge_cost(c, corpus); }, tau);
}

namespace {

struct Problem {
  std::vector<std::size_t> offset;  // global label index = offset[dataset] + label
  std::size_t labels = 0;
  std::vector<std::vector<std::size_t>> covering;  // candidates per global label, ascending

  Problem(std::span<const std::size_t> counts, std::span<const MergeCandidate> cands) {
    for (std::size_t c : counts) {
      offset.push_back(labels);
      labels += c;
    }
    covering.resize(labels);
    for (std::size_t t = 0; t < cands.size(); ++t) {
      const auto& c = cands[t];
      if (c.members.empty()) throw Error(ErrorCode::InvalidArgument, "empty candidate");
      std::vector<char> used(counts.size(), 0);
      for (const auto& m : c.members) {
        if (m.dataset >= counts.size() || m.label >= counts[m.dataset])
          throw Error(ErrorCode::InvalidArgument, "candidate member outside the label sets");
        if (used[m.dataset])
          throw Error(ErrorCode::InvalidArgument, "candidate repeats a dataset");
        used[m.dataset] = 1;
        covering[offset[m.dataset] + m.label].push_back(t);
      }
    }
    for (std::size_t d = 0; d < counts.size(); ++d)
      for (std::size_t l = 0; l < counts[d]; ++l)
        if (covering[offset[d] + l].empty())
          throw Error(ErrorCode::InfeasibleCover, "label " + std::to_string(l) + " of dataset " +
                                                      std::to_string(d) + " has no candidate");
  }
  std::size_t global(LabelRef r) const { return offset[r.dataset] + r.label; }
};

double canonical_objective(const std::vector<std::size_t>& chosen,
                           std::span<const MergeCandidate> cands, double lambda) {
  double j = 0.0;
  for (std::size_t t : chosen) j += cands[t].cost + lambda;
  return j;
}

bool better(double j, const std::vector<std::size_t>& chosen, double best_j,
            const std::vector<std::size_t>& best) {
  const double tol = 1e-12 * std::max(1.0, std::abs(best_j));
  if (j < best_j - tol) return true;
  if (j > best_j + tol) return false;
  if (chosen.size() != best.size()) return chosen.size() < best.size();
  return chosen < best;
}

class BranchAndBound {
 public:
  BranchAndBound(const Problem& p, std::span<const MergeCandidate> cands, double lambda)
      : p_(p), cands_(cands), lambda_(lambda), covered_(p.labels, 0), bound_(p.labels) {
    for (std::size_t g = 0; g < p.labels; ++g) {
      double lb = std::numeric_limits<double>::infinity();
      for (std::size_t t : p.covering[g])
        lb = std::min(lb, (cands[t].cost + lambda) / double(cands[t].size()));
      bound_[g] = lb;
      remaining_ += lb;
    }
  }

  Selection run() {
    dfs(0, 0.0);
    if (!found_) throw Error(ErrorCode::InfeasibleCover, "no exact cover of the labels exists");
    std::sort(best_.begin(), best_.end());
    return {best_, best_j_};
  }

 private:
  void dfs(std::size_t from, double cost) {
    std::size_t g = from;
    while (g < p_.labels && covered_[g]) ++g;
    if (g == p_.labels) {
      auto chosen = stack_;
      std::sort(chosen.begin(), chosen.end());
      const double j = canonical_objective(chosen, cands_, lambda_);
      if (!found_ || better(j, chosen, best_j_, best_)) {
        found_ = true;
        best_j_ = j;
        best_ = std::move(chosen);
      }
      return;
    }
    if (found_ && cost + remaining_ > best_j_ + 1e-9 * std::max(1.0, std::abs(best_j_))) return;
    for (std::size_t t : p_.covering[g]) {
      const auto& c = cands_[t];
      bool free = true;
      for (const auto& m : c.members) free = free && !covered_[p_.global(m)];
      if (!free) continue;
      for (const auto& m : c.members) {
        covered_[p_.global(m)] = 1;
        remaining_ -= bound_[p_.global(m)];
      }
      stack_.push_back(t);
      dfs(g + 1, cost + c.cost + lambda_);
      stack_.pop_back();
      for (const auto& m : c.members) {
        covered_[p_.global(m)] = 0;
        remaining_ += bound_[p_.global(m)];
      }
    }
  }

  const Problem& p_;
  std::span<const MergeCandidate> cands_;
  double lambda_;
  std::vector<char> covered_;
  std::vector<double> bound_;
  double remaining_ = 0.0;
  std::vector<std::size_t> stack_;
  bool found_ = false;
  double best_j_ = 0.0;
  std::vector<std::size_t> best_;
};

Selection solve_two(const Problem& p, std::span<const std::size_t> counts,
                    std::span<const MergeCandidate> cands, double lambda) {
  const std::size_t n1 = counts[0], n2 = counts[1], n = n1 + n2;
  // Rows: labels of dataset 0, then one slack row per label of dataset 1.
  // Columns: labels of dataset 1, then one slack column per label of dataset 0.
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::vector<std::size_t>> which(n, std::vector<std::size_t>(n, kNone));
  double finite_sum = 0.0;
  for (std::size_t t = 0; t < cands.size(); ++t) {
    const auto& c = cands[t];
    finite_sum += c.cost + lambda;
    if (c.size() == 2) {
      which[c.members[0].label][c.members[1].label] = t;
    } else if (c.members[0].dataset == 0) {
      which[c.members[0].label][n2 + c.members[0].label] = t;
    } else {
      which[n1 + c.members[0].label][c.members[0].label] = t;
    }
  }
  const double big = 2.0 * (finite_sum + 1.0);
  std::vector<std::vector<LexCost>> m(n, std::vector<LexCost>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      if (which[r][c] != kNone) {
        m[r][c] = {cands[which[r][c]].cost + lambda, 1};
      } else if (r >= n1 && c >= n2) {
        m[r][c] = {0.0, 0};
      } else {
        m[r][c] = {big, 0};
      }
    }
  const auto col = solve_assignment(m, LexCost{4.0 * big * double(n + 1), 0});
  std::vector<std::size_t> chosen;
  for (std::size_t r = 0; r < n; ++r) {
    if (r >= n1 && col[r] >= n2) continue;
    const std::size_t t = which[r][col[r]];
    if (t == kNone) throw Error(ErrorCode::InfeasibleCover, "no exact cover of the labels exists");
    chosen.push_back(t);
  }
  std::sort(chosen.begin(), chosen.end());
  (void)p;
  return {chosen, canonical_objective(chosen, cands, lambda)};
}

}  // namespace

Selection solve_selection_bnb(std::span<const std::size_t> counts,
                              std::span<const MergeCandidate> cands, double lambda) {
  Problem p(counts, cands);
  return BranchAndBound(p, cands, lambda).run();
}

Selection solve_selection(std::span<const std::size_t> counts,
                          std::span<const MergeCandidate> cands, double lambda) {
  Problem p(counts, cands);
  const bool pairs_only = std::all_of(cands.begin(), cands.end(),
                                      [](const MergeCandidate& c) { return c.size() <= 2; });
  if (counts.size() == 2 && pairs_only) return solve_two(p, counts, cands, lambda);
  return BranchAndBound(p, cands, lambda).run();
}

void UnifiedSpace::validate() const {
  if (datasets.size() != dataset_spaces.size() || datasets.size() != transforms.size())
    throw Error(ErrorCode::InvalidArgument, "unified space: per-dataset fields disagree");
  std::vector<char> backed(space.size(), 0);
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (transforms[k].rows() != dataset_spaces[k].size() || transforms[k].cols() != space.size())
      throw Error(ErrorCode::DimMismatch, "transform shape for dataset " + datasets[k]);
    for (std::size_t t : transforms[k].targets()) backed[t] = 1;
  }
  for (std::size_t c = 0; c < space.size(); ++c)
    if (!backed[c]) throw Error(ErrorCode::InvalidArgument, "unified class without members");
}

std::size_t UnifiedSpace::dataset_index(const std::string& name) const {
  for (std::size_t k = 0; k < datasets.size(); ++k)
    if (datasets[k] == name) return k;
  throw Error(ErrorCode::UnknownDataset, "dataset " + name + " not in the unified space");
}

namespace {

std::string qualified(const std::string& dataset, const std::string& label) {
  return dataset.empty() ? label : dataset + ":" + label;
}

}  // namespace

UnifiedSpace build_unified(std::vector<std::string> datasets, std::vector<LabelSpace> spaces,
                           std::vector<MergeCandidate> candidates, const Selection& sel,
                           double lambda, double tau) {
  if (datasets.size() != spaces.size())
    throw Error(ErrorCode::InvalidArgument, "dataset names and spaces disagree");
  std::vector<std::size_t> order = sel.chosen;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].members.front() < candidates[b].members.front();
  });
  std::vector<std::vector<std::size_t>> target(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (spaces[k].size() == 0) throw Error(ErrorCode::InvalidArgument, "empty label space");
    target[k].assign(spaces[k].size(), std::numeric_limits<std::size_t>::max());
  }
  std::vector<std::string> names;
  std::optional<Label> empty;
  for (std::size_t u = 0; u < order.size(); ++u) {
    std::vector<std::string> parts;
    for (const auto& m : candidates[order[u]].members) {
      if (target[m.dataset][m.label] != std::numeric_limits<std::size_t>::max())
        throw Error(ErrorCode::InvalidArgument, "label selected twice");
      target[m.dataset][m.label] = u;
      parts.push_back(qualified(datasets[m.dataset], spaces[m.dataset].name(Label(m.label))));
      if (m.dataset == 0 && m.label == spaces[0].empty_id()) empty = Label(u);
    }
    names.push_back(join(parts, '+'));
  }
  UnifiedSpace out;
  for (std::size_t k = 0; k < datasets.size(); ++k)
    for (std::size_t t : target[k])
      if (t == std::numeric_limits<std::size_t>::max())
        throw Error(ErrorCode::InfeasibleCover, "selection leaves a label uncovered");
  if (!empty) throw Error(ErrorCode::InvalidArgument, "selection misses the empty class");
  out.space = LabelSpace(names, *empty);
  for (std::size_t k = 0; k < datasets.size(); ++k)
    out.transforms.emplace_back(names.size(), std::move(target[k]));
  out.datasets = std::move(datasets);
  out.dataset_spaces = std::move(spaces);
  out.objective = sel.objective;
  out.lambda = lambda;
  out.tau = tau;
  out.candidates = std::move(candidates);
  out.chosen = sel.chosen;
  out.validate();
  return out;
}

UnifiedSpace learn_unified(const Corpus& corpus, std::vector<std::string> datasets,
                           std::vector<LabelSpace> spaces, double lambda, double tau) {
  corpus.validate();
  if (datasets.size() != corpus.datasets() || spaces.size() != corpus.datasets())
    throw Error(ErrorCode::MisalignedCorpus, "corpus and dataset list disagree");
  std::vector<std::size_t> counts;
  for (std::size_t k = 0; k < spaces.size(); ++k) {
    if (corpus.classes(k) != spaces[k].size())
      throw Error(ErrorCode::MisalignedCorpus, "score classes differ from the label space");
    counts.push_back(spaces[k].size());
  }
  auto cands = enumerate_candidates(corpus, tau);
  const auto sel = solve_selection(counts, cands, lambda);
  return build_unified(std::move(datasets), std::move(spaces), std::move(cands), sel, lambda,
                       tau);
}

UnifiedSpace sequential_add(const UnifiedSpace& existing,
                            const std::vector<ScoreGrid>& existing_scores,
                            const std::vector<ScoreGrid>& new_scores, const std::string& name,
                            const LabelSpace& space, double lambda, double tau) {
  existing.validate();
  for (const auto& d : existing.datasets)
    if (d == name) throw Error(ErrorCode::InvalidArgument, "dataset " + name + " already present");
  Corpus corpus{{existing_scores, new_scores}};
  UnifiedSpace pair = learn_unified(corpus, {"", name}, {existing.space, space}, lambda, tau);
  UnifiedSpace out;
  out.space = pair.space;
  out.datasets = existing.datasets;
  out.dataset_spaces = existing.dataset_spaces;
  for (const auto& t : existing.transforms) out.transforms.push_back(t.then(pair.transforms[0]));
  out.datasets.push_back(name);
  out.dataset_spaces.push_back(space);
  out.transforms.push_back(pair.transforms[1]);
  out.objective = pair.objective;
  out.lambda = lambda;
  out.tau = tau;
  out.candidates = std::move(pair.candidates);
  out.chosen = std::move(pair.chosen);
  out.validate();
  return out;
}

std::vector<std::optional<Label>> translation(const MappingMatrix& from, const MappingMatrix* to) {
  std::vector<std::optional<Label>> out(from.rows());
  if (to && to->cols() != from.cols())
    throw Error(ErrorCode::DimMismatch, "transforms target different unified spaces");
  for (std::size_t a = 0; a < from.rows(); ++a) {
    const std::size_t u = from.target(a);
    if (!to) {
      out[a] = Label(u);
    } else if (auto b = to->preimage(u)) {
      out[a] = Label(*b);
    }
  }
  return out;
}

OccupancyGrid transcode(const OccupancyGrid& grid, const MappingMatrix& from,
                        const MappingMatrix* to, std::size_t target_classes, Label fallback) {
  if (grid.num_classes() != from.rows())
    throw Error(ErrorCode::DimMismatch, "grid classes differ from the transform rows");
  const auto table = translation(from, to);
  std::vector<Label> labels(grid.labels().size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = table[grid[i]].value_or(fallback);
  return OccupancyGrid(grid.geometry(), target_classes, std::move(labels));
}

// Document layout:
//   [unified]   version, datasets, lambda, tau, objective, classes, empty
//   [classes]   <index> = <name>
//   [dataset.X] labels (comma list), empty, map (unified index per label)
//   [candidates] participants (dataset names, '*' for a pseudo-dataset), count,
//               <index> = <d.l+d.l...>;<cost>;<selected 0|1>
std::string to_document(const UnifiedSpace& u) {
  u.validate();
  IniDoc doc;
  auto& head = doc.add("unified");
  head.set("version", "1");
  head.set("datasets", join(u.datasets, ','));
  head.set("lambda", format_double(u.lambda));
  head.set("tau", format_double(u.tau));
  head.set("objective", format_double(u.objective));
  head.set("classes", std::to_string(u.space.size()));
  head.set("empty", std::to_string(u.space.empty_id()));
  auto& cls = doc.add("classes");
  for (std::size_t c = 0; c < u.space.size(); ++c) cls.set(std::to_string(c), u.space.name(Label(c)));
  for (std::size_t k = 0; k < u.datasets.size(); ++k) {
    auto& s = doc.add("dataset." + u.datasets[k]);
    s.set("labels", join(u.dataset_spaces[k].names(), ','));
    s.set("empty", std::to_string(u.dataset_spaces[k].empty_id()));
    std::vector<std::string> map;
    for (std::size_t t : u.transforms[k].targets()) map.push_back(std::to_string(t));
    s.set("map", join(map, ','));
  }
  auto& cs = doc.add("candidates");
  std::size_t participants = 0;
  for (const auto& c : u.candidates)
    for (const auto& m : c.members) participants = std::max(participants, m.dataset + 1);
  std::vector<std::string> names;
  if (participants == u.datasets.size()) {
    names = u.datasets;
  } else {
    names = {"*", u.datasets.back()};
  }
  cs.set("participants", join(names, ','));
  cs.set("count", std::to_string(u.candidates.size()));
  std::set<std::size_t> chosen(u.chosen.begin(), u.chosen.end());
  for (std::size_t t = 0; t < u.candidates.size(); ++t) {
    std::vector<std::string> ms;
    for (const auto& m : u.candidates[t].members)
      ms.push_back(std::to_string(m.dataset) + "." + std::to_string(m.label));
    cs.set(std::to_string(t), join(ms, '+') + ";" + format_double(u.candidates[t].cost) + ";" +
                                   (chosen.count(t) ? "1" : "0"));
  }
  return format_ini(doc);
}

UnifiedSpace from_document(const std::string& text) {
  const IniDoc doc = parse_ini(text);
  const auto& head = doc.get("unified");
  if (head.get("version") != "1")
    throw Error(ErrorCode::VersionUnsupported, "unified document version " + head.get("version"));
  UnifiedSpace u;
  u.datasets = split(head.get("datasets"), ',');
  u.lambda = parse_double(head.get("lambda"));
  u.tau = parse_double(head.get("tau"));
  u.objective = parse_double(head.get("objective"));
  const std::size_t n = parse_u64(head.get("classes"));
  std::vector<std::string> names;
  const auto& cls = doc.get("classes");
  for (std::size_t c = 0; c < n; ++c) names.push_back(cls.get(std::to_string(c)));
  u.space = LabelSpace(names, Label(parse_u64(head.get("empty"))));
  for (const auto& d : u.datasets) {
    const auto& s = doc.get("dataset." + d);
    u.dataset_spaces.emplace_back(split(s.get("labels"), ','), Label(parse_u64(s.get("empty"))));
    std::vector<std::size_t> map;
    for (const auto& t : split(s.get("map"), ',')) map.push_back(parse_u64(t));
    u.transforms.emplace_back(n, std::move(map));
  }
  const auto& cs = doc.get("candidates");
  const std::size_t count = parse_u64(cs.get("count"));
  for (std::size_t t = 0; t < count; ++t) {
    const auto fields = split(cs.get(std::to_string(t)), ';');
    if (fields.size() != 3) throw Error(ErrorCode::ConfigError, "malformed candidate line");
    MergeCandidate c;
    for (const auto& m : split(fields[0], '+')) {
      const auto dl = split(m, '.');
      if (dl.size() != 2) throw Error(ErrorCode::ConfigError, "malformed candidate member");
      c.members.push_back({std::size_t(parse_u64(dl[0])), std::size_t(parse_u64(dl[1]))});
    }
    c.cost = parse_double(fields[1]);
    if (fields[2] == "1") u.chosen.push_back(t);
    u.candidates.push_back(std::move(c));
  }
  u.validate();
  return u;
}

}  // namespace mdocc::labels
