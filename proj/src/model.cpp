// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mdocc::model {

GridGeometry coarse_geometry(const GridGeometry& fine, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
  const Dims& d = fine.dims;
  if (d.d % stride || d.h % stride || d.w % stride)
    throw Error(ErrorCode::DimMismatch, "grid dims not divisible by the stride");
  const auto s = std::uint32_t(stride);
  return {{d.d / s, d.h / s, d.w / s}, fine.voxel_size * double(stride), fine.origin};
}

OccupancyGrid coarsen_labels(const OccupancyGrid& fine, std::size_t stride, Label empty_id) {
  const GridGeometry cg = coarse_geometry(fine.geometry(), stride);
  const std::size_t c = fine.num_classes();
  std::vector<Label> out(cg.dims.count(), empty_id);
  std::vector<std::uint32_t> counts(c);
  for (std::size_t x = 0; x < cg.dims.d; ++x)
    for (std::size_t y = 0; y < cg.dims.h; ++y)
      for (std::size_t z = 0; z < cg.dims.w; ++z) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < stride; ++i)
          for (std::size_t j = 0; j < stride; ++j)
            for (std::size_t k = 0; k < stride; ++k)
              ++counts[fine.at(x * stride + i, y * stride + j, z * stride + k)];
        std::uint32_t best = 0;
        for (std::size_t l = 0; l < c; ++l)
          if (l != empty_id && counts[l] > best) {
            best = counts[l];
            out[cg.dims.index(x, y, z)] = Label(l);
          }
      }
  return OccupancyGrid(cg, c, std::move(out));
}

std::vector<double> gather_features(const geom::CylFeatureVolume& vol, const GridGeometry& cg) {
  const std::size_t f = geom::kCylFeatures;
  std::vector<double> x(cg.dims.count() * f, 0.0);
  for (std::size_t v = 0; v < cg.dims.count(); ++v) {
    const auto [i, j, k] = cg.dims.coords(v);
    std::size_t r, a, h;
    if (!geom::cyl_bin(vol.spec, cg.center(i, j, k), r, a, h)) continue;
    const auto bin = vol.bin(vol.spec.index(r, a, h));
    std::copy(bin.begin(), bin.end(), x.begin() + std::ptrdiff_t(v * f));
    x[v * f] = std::log1p(bin[0]);
  }
  return x;
}

ModelParams ModelParams::init(std::size_t hidden,
                              const std::vector<std::pair<std::string, std::size_t>>& heads,
                              const std::vector<std::string>& norm_slots, std::uint64_t seed) {
  if (hidden == 0) throw Error(ErrorCode::InvalidArgument, "hidden width must be >= 1");
  if (heads.empty()) throw Error(ErrorCode::InvalidArgument, "model needs at least one head");
  ModelParams p;
  p.hidden = hidden;
  Rng rng(seed, "model-init");
  const double he = std::sqrt(2.0 / double(p.input));
  const double sd = std::sqrt(1.0 / double(hidden));
  p.w1.resize(hidden * p.input);
  for (auto& w : p.w1) w = he * rng.normal();
  p.w2.resize(hidden * hidden);
  for (auto& w : p.w2) w = sd * rng.normal();
  p.b2.assign(hidden, 0.0);
  for (const auto& [name, classes] : heads) {
    if (classes == 0) throw Error(ErrorCode::InvalidArgument, "head without classes");
    Head h{name, classes, std::vector<double>(classes * hidden), std::vector<double>(classes, 0.0)};
    for (auto& w : h.w) w = sd * rng.normal();
    p.heads.push_back(std::move(h));
  }
  p.norm = geom::NormState(hidden);
  for (const auto& s : norm_slots) p.norm.register_dataset(s);
  return p;
}

std::size_t ModelParams::head(const std::string& name) const {
  for (std::size_t i = 0; i < heads.size(); ++i)
    if (heads[i].name == name) return i;
  throw Error(ErrorCode::UnknownDataset, "no head for dataset " + name);
}

void ModelParams::validate() const {
  if (w1.size() != hidden * input || w2.size() != hidden * hidden || b2.size() != hidden)
    throw Error(ErrorCode::DimMismatch, "backbone tensor shapes");
  if (norm.features() != hidden) throw Error(ErrorCode::DimMismatch, "norm width != hidden");
  for (const auto& h : heads)
    if (h.w.size() != h.classes * hidden || h.b.size() != h.classes)
      throw Error(ErrorCode::DimMismatch, "head " + h.name + " tensor shapes");
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  Gradients g;
  g.w1.assign(p.w1.size(), 0.0);
  g.w2.assign(p.w2.size(), 0.0);
  g.b2.assign(p.b2.size(), 0.0);
  g.gamma.assign(p.hidden, 0.0);
  g.beta.assign(p.hidden, 0.0);
  for (const auto& h : p.heads) {
    g.head_w.emplace_back(h.w.size(), 0.0);
    g.head_b.emplace_back(h.b.size(), 0.0);
  }
  return g;
}

namespace {

void add_into(std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "gradient shapes differ");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

Gradients& Gradients::operator+=(const Gradients& o) {
  add_into(w1, o.w1);
  add_into(w2, o.w2);
  add_into(b2, o.b2);
  add_into(gamma, o.gamma);
  add_into(beta, o.beta);
  if (head_w.size() != o.head_w.size()) throw Error(ErrorCode::DimMismatch, "head counts differ");
  for (std::size_t h = 0; h < head_w.size(); ++h) {
    add_into(head_w[h], o.head_w[h]);
    add_into(head_b[h], o.head_b[h]);
  }
  return *this;
}

std::vector<double*> parameter_pointers(ModelParams& p) {
  std::vector<double*> out;
  auto push = [&](std::vector<double>& v) {
    for (auto& x : v) out.push_back(&x);
  };
  push(p.w1);
  push(p.w2);
  push(p.b2);
  push(p.norm.gamma);
  push(p.norm.beta);
  for (auto& h : p.heads) {
    push(h.w);
    push(h.b);
  }
  return out;
}

std::vector<const double*> gradient_pointers(const Gradients& g) {
  std::vector<const double*> out;
  auto push = [&](const std::vector<double>& v) {
    for (const auto& x : v) out.push_back(&x);
  };
  push(g.w1);
  push(g.w2);
  push(g.b2);
  push(g.gamma);
  push(g.beta);
  for (std::size_t h = 0; h < g.head_w.size(); ++h) {
    push(g.head_w[h]);
    push(g.head_b[h]);
  }
  return out;
}

namespace {

constexpr std::size_t kChunk = 1024;

/// Visits v itself and its in-bounds face neighbors.
template <class F>
void for_each_neighbor(const Dims& d, std::size_t v, F&& f) {
  const auto [x, y, z] = d.coords(v);
  f(v);
  if (x > 0) f(d.index(x - 1, y, z));
  if (x + 1 < d.d) f(d.index(x + 1, y, z));
  if (y > 0) f(d.index(x, y - 1, z));
  if (y + 1 < d.h) f(d.index(x, y + 1, z));
  if (z > 0) f(d.index(x, y, z - 1));
  if (z + 1 < d.w) f(d.index(x, y, z + 1));
}

std::size_t neighbor_count(const Dims& d, std::size_t v) {
  std::size_t n = 0;
  for_each_neighbor(d, v, [&](std::size_t) { ++n; });
  return n;
}

/// Chunked deterministic reduction: body(begin, end, acc) accumulates rows into acc.
template <class Body>
void reduce_chunks(std::size_t n, std::size_t width, double* out, Body&& body) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks * width, 0.0);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < long(chunks); ++c) {
    const std::size_t b = std::size_t(c) * kChunk;
    body(b, std::min(n, b + kChunk), &partial[std::size_t(c) * width]);
  }
  for (std::size_t c = 0; c < chunks; ++c)
    for (std::size_t j = 0; j < width; ++j) out[j] += partial[c * width + j];
}

struct Layout {
  std::vector<std::size_t> start;   // first stacked row of each sample
  std::vector<std::size_t> sample;  // owning sample of each row
  std::size_t n = 0;
};

Layout layout_of(const ModelParams& p, std::span<const Sample* const> samples, bool need_labels) {
  Layout l;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Sample& smp = *samples[s];
    if (smp.x.size() != smp.dims.count() * p.input)
      throw Error(ErrorCode::DimMismatch, "sample features do not match its dims");
    if (need_labels && smp.y.size() != smp.dims.count())
      throw Error(ErrorCode::DimMismatch, "sample labels do not match its dims");
    l.start.push_back(l.n);
    l.n += smp.dims.count();
  }
  l.sample.resize(l.n);
  for (std::size_t s = 0; s < samples.size(); ++s)
    std::fill_n(l.sample.begin() + std::ptrdiff_t(l.start[s]), samples[s]->dims.count(), s);
  return l;
}

const double* row_x(std::span<const Sample* const> ss, const Layout& l, std::size_t i,
                    std::size_t input) {
  const std::size_t s = l.sample[i];
  return &ss[s]->x[(i - l.start[s]) * input];
}

void check_route(const ModelParams& p, std::size_t slot, std::size_t head) {
  if (head >= p.heads.size()) throw Error(ErrorCode::UnknownDataset, "head index out of range");
  (void)p.norm.stats(slot);
}

// ---------------------------------------------------------------------------
// Reference path: plain loops in row order.

struct Trace {
  Layout l;
  std::vector<double> z1, a, m, z2, s;
  geom::NormForward nf;
};

Trace trace_serial(const ModelParams& p, std::span<const Sample* const> ss, std::size_t slot,
                   std::size_t head, geom::NormMode mode, bool need_labels) {
  check_route(p, slot, head);
  Trace t;
  t.l = layout_of(p, ss, need_labels);
  const std::size_t n = t.l.n, h = p.hidden, in = p.input;
  const Head& hd = p.heads[head];
  t.z1.assign(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = row_x(ss, t.l, i, in);
    for (std::size_t j = 0; j < h; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += p.w1[j * in + k] * x[k];
      t.z1[i * h + j] = acc;
    }
  }
  t.nf = geom::dsnorm_apply(t.z1, n, slot, p.norm, mode);
  t.a.resize(n * h);
  for (std::size_t i = 0; i < n * h; ++i) t.a[i] = std::max(0.0, t.nf.y[i]);
  t.m.assign(n * h, 0.0);
  for (std::size_t s = 0; s < ss.size(); ++s) {
    const Dims& d = ss[s]->dims;
    const std::size_t base = t.l.start[s];
    for (std::size_t v = 0; v < d.count(); ++v) {
      double* mv = &t.m[(base + v) * h];
      const double inv = 1.0 / double(neighbor_count(d, v));
      for_each_neighbor(d, v, [&](std::size_t u) {
        for (std::size_t j = 0; j < h; ++j) mv[j] += t.a[(base + u) * h + j];
      });
      for (std::size_t j = 0; j < h; ++j) mv[j] *= inv;
    }
  }
  t.z2.resize(n * h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      double acc = p.b2[j];
      for (std::size_t k = 0; k < h; ++k) acc += p.w2[j * h + k] * t.m[i * h + k];
      t.z2[i * h + j] = acc;
    }
  const std::size_t c = hd.classes;
  t.s.resize(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      double acc = hd.b[k];
      for (std::size_t j = 0; j < h; ++j) acc += hd.w[k * h + j] * t.z2[i * h + j];
      t.s[i * c + k] = acc;
    }
  return t;
}

Label target_of(const Batch& b, std::size_t s, Label y, std::size_t classes) {
  const std::size_t t = std::size_t(y) + (b.offsets.empty() ? 0 : b.offsets.at(s));
  if (t >= classes) throw Error(ErrorCode::InvalidArgument, "label outside the head's classes");
  return Label(t);
}

/// Per-row weighted CE and its score gradient (scaled by the reduction).
double row_ce(const double* s, std::size_t c, Label t, double w, double scale, double* ds) {
  const double mx = *std::max_element(s, s + c);
  double z = 0.0;
  for (std::size_t k = 0; k < c; ++k) z += std::exp(s[k] - mx);
  const double lse = mx + std::log(z);
  if (ds)
    for (std::size_t k = 0; k < c; ++k)
      ds[k] = (std::exp(s[k] - lse) - (k == t ? 1.0 : 0.0)) * w * scale;
  return w * (lse - s[t]);
}

double weight_of(std::span<const double> w, Label t) {
  if (w.empty()) return 1.0;
  if (t >= w.size()) throw Error(ErrorCode::DimMismatch, "class weights shorter than the head");
  return w[t];
}

}  // namespace

BatchResult forward_backward_serial(const ModelParams& p, const Batch& batch,
                                    std::span<const double> cw, Reduction red) {
  const Trace t = trace_serial(p, batch.samples, batch.slot, batch.head, geom::NormMode::Train, true);
  const std::size_t n = t.l.n, h = p.hidden, in = p.input;
  const Head& hd = p.heads[batch.head];
  const std::size_t c = hd.classes;
  const double scale = red == Reduction::Mean ? 1.0 / double(n) : 1.0;
  BatchResult r;
  r.grad = Gradients::zeros_like(p);
  r.voxels = n;
  r.mean = t.nf.mean;
  r.var = t.nf.var;
  r.sample_loss.assign(batch.samples.size(), 0.0);
  std::vector<double> ds(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = t.l.sample[i];
    const Label tg = target_of(batch, s, batch.samples[s]->y[i - t.l.start[s]], c);
    const double li = row_ce(&t.s[i * c], c, tg, weight_of(cw, tg), scale, &ds[i * c]);
    r.loss += li * scale;
    r.sample_loss[s] += li;
  }
  for (std::size_t s = 0; s < batch.samples.size(); ++s)
    r.sample_loss[s] /= double(batch.samples[s]->dims.count());
  auto& gw = r.grad.head_w[batch.head];
  auto& gb = r.grad.head_b[batch.head];
  std::vector<double> dz2(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      const double d = ds[i * c + k];
      gb[k] += d;
      for (std::size_t j = 0; j < h; ++j) {
        gw[k * h + j] += d * t.z2[i * h + j];
        dz2[i * h + j] += d * hd.w[k * h + j];
      }
    }
  std::vector<double> dm(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      const double d = dz2[i * h + j];
      r.grad.b2[j] += d;
      for (std::size_t k = 0; k < h; ++k) {
        r.grad.w2[j * h + k] += d * t.m[i * h + k];
        dm[i * h + k] += d * p.w2[j * h + k];
      }
    }
  std::vector<double> da(n * h, 0.0);
  for (std::size_t s = 0; s < batch.samples.size(); ++s) {
    const Dims& d = batch.samples[s]->dims;
    const std::size_t base = t.l.start[s];
    for (std::size_t v = 0; v < d.count(); ++v) {
      const double inv = 1.0 / double(neighbor_count(d, v));
      for_each_neighbor(d, v, [&](std::size_t u) {
        for (std::size_t j = 0; j < h; ++j) da[(base + u) * h + j] += dm[(base + v) * h + j] * inv;
      });
    }
  }
  std::vector<double> dxh(n * h);
  std::vector<double> s1(h, 0.0), s2(h, 0.0);
  r.min_abs_preact = n ? std::abs(t.nf.y[0]) : 0.0;
  for (std::size_t i = 0; i < n * h; ++i) {
    const std::size_t j = i % h;
    r.min_abs_preact = std::min(r.min_abs_preact, std::abs(t.nf.y[i]));
    const double dy = t.nf.y[i] > 0.0 ? da[i] : 0.0;
    r.grad.gamma[j] += dy * t.nf.x_hat[i];
    r.grad.beta[j] += dy;
    dxh[i] = dy * p.norm.gamma[j];
    s1[j] += dxh[i];
    s2[j] += dxh[i] * t.nf.x_hat[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = row_x(batch.samples, t.l, i, in);
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t q = i * h + j;
      const double dz1 =
          t.nf.inv_std[j] / double(n) * (double(n) * dxh[q] - s1[j] - t.nf.x_hat[q] * s2[j]);
      for (std::size_t k = 0; k < in; ++k) r.grad.w1[j * in + k] += dz1 * x[k];
    }
  }
  return r;
}

double batch_loss(const ModelParams& p, const Batch& batch, std::span<const double> cw,
                  Reduction red) {
  const Trace t = trace_serial(p, batch.samples, batch.slot, batch.head, geom::NormMode::Train, true);
  const std::size_t c = p.heads[batch.head].classes;
  const double scale = red == Reduction::Mean ? 1.0 / double(t.l.n) : 1.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < t.l.n; ++i) {
    const std::size_t s = t.l.sample[i];
    const Label tg = target_of(batch, s, batch.samples[s]->y[i - t.l.start[s]], c);
    loss += row_ce(&t.s[i * c], c, tg, weight_of(cw, tg), scale, nullptr) * scale;
  }
  return loss;
}

ScoreGrid forward_serial(const ModelParams& p, const Sample& s, std::size_t slot,
                         std::size_t head, geom::NormMode mode) {
  const Sample* one = &s;
  Trace t = trace_serial(p, std::span<const Sample* const>(&one, 1), slot, head, mode, false);
  return ScoreGrid(s.dims, p.heads[head].classes, std::move(t.s));
}

// ---------------------------------------------------------------------------
// Parallel path.

namespace {

struct ParTrace {
  Layout l;
  std::vector<double> z1, a, m;
  geom::NormForward nf;
};

geom::NormForward norm_parallel(const std::vector<double>& z1, std::size_t n, std::size_t slot,
                                const geom::NormState& state, geom::NormMode mode) {
  const std::size_t h = state.features();
  const auto& st = state.stats(slot);
  geom::NormForward f;
  f.mean.assign(h, 0.0);
  f.var.assign(h, 0.0);
  if (mode == geom::NormMode::Train) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty batch in train mode");
    reduce_chunks(n, h, f.mean.data(), [&](std::size_t b, std::size_t e, double* acc) {
      for (std::size_t i = b; i < e; ++i)
        for (std::size_t j = 0; j < h; ++j) acc[j] += z1[i * h + j];
    });
    for (auto& m : f.mean) m /= double(n);
    reduce_chunks(n, h, f.var.data(), [&](std::size_t b, std::size_t e, double* acc) {
      for (std::size_t i = b; i < e; ++i)
        for (std::size_t j = 0; j < h; ++j) {
          const double d = z1[i * h + j] - f.mean[j];
          acc[j] += d * d;
        }
    });
    for (auto& v : f.var) v /= double(n);
  } else {
    f.mean = st.running_mean;
    f.var = st.running_var;
  }
  f.inv_std.resize(h);
  for (std::size_t j = 0; j < h; ++j) f.inv_std[j] = 1.0 / std::sqrt(f.var[j] + state.eps);
  f.x_hat.resize(n * h);
  f.y.resize(n * h);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(n); ++ii) {
    const std::size_t i = std::size_t(ii);
    for (std::size_t j = 0; j < h; ++j) {
      const double xh = (z1[i * h + j] - f.mean[j]) * f.inv_std[j];
      f.x_hat[i * h + j] = xh;
      f.y[i * h + j] = state.gamma[j] * xh + state.beta[j];
    }
  }
  return f;
}

ParTrace trace_parallel(const ModelParams& p, std::span<const Sample* const> ss, std::size_t slot,
                        geom::NormMode mode, bool need_labels) {
  ParTrace t;
  t.l = layout_of(p, ss, need_labels);
  const std::size_t n = t.l.n, h = p.hidden, in = p.input;
  t.z1.resize(n * h);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(n); ++ii) {
    const std::size_t i = std::size_t(ii);
    const double* x = row_x(ss, t.l, i, in);
    for (std::size_t j = 0; j < h; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += p.w1[j * in + k] * x[k];
      t.z1[i * h + j] = acc;
    }
  }
  t.nf = norm_parallel(t.z1, n, slot, p.norm, mode);
  t.a.resize(n * h);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n * h); ++i) t.a[std::size_t(i)] = std::max(0.0, t.nf.y[std::size_t(i)]);
  t.m.assign(n * h, 0.0);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(n); ++ii) {
    const std::size_t i = std::size_t(ii), s = t.l.sample[i], base = t.l.start[s];
    const Dims& d = ss[s]->dims;
    double* mv = &t.m[i * h];
    const double inv = 1.0 / double(neighbor_count(d, i - base));
    for_each_neighbor(d, i - base, [&](std::size_t u) {
      for (std::size_t j = 0; j < h; ++j) mv[j] += t.a[(base + u) * h + j];
    });
    for (std::size_t j = 0; j < h; ++j) mv[j] *= inv;
  }
  return t;
}

void affine_rows(const ModelParams& p, std::size_t head, const double* m, std::size_t i,
                 double* z2, double* s) {
  const std::size_t h = p.hidden;
  const Head& hd = p.heads[head];
  for (std::size_t j = 0; j < h; ++j) {
    double acc = p.b2[j];
    for (std::size_t k = 0; k < h; ++k) acc += p.w2[j * h + k] * m[i * h + k];
    z2[j] = acc;
  }
  for (std::size_t k = 0; k < hd.classes; ++k) {
    double acc = hd.b[k];
    for (std::size_t j = 0; j < h; ++j) acc += hd.w[k * h + j] * z2[j];
    s[k] = acc;
  }
}

}  // namespace

BatchResult forward_backward(const ModelParams& p, const Batch& batch, std::span<const double> cw,
                             Reduction red) {
  check_route(p, batch.slot, batch.head);
  const ParTrace t = trace_parallel(p, batch.samples, batch.slot, geom::NormMode::Train, true);
  const std::size_t n = t.l.n, h = p.hidden, in = p.input;
  const Head& hd = p.heads[batch.head];
  const std::size_t c = hd.classes;
  const double scale = red == Reduction::Mean ? 1.0 / double(n) : 1.0;
  for (std::size_t s = 0; s < batch.samples.size(); ++s)
    for (Label y : batch.samples[s]->y) target_of(batch, s, y, c);

  std::vector<double> z2(n * h), ds(n * c), dz2(n * h, 0.0), dm(n * h, 0.0), li(n);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(n); ++ii) {
    const std::size_t i = std::size_t(ii), s = t.l.sample[i];
    std::vector<double> sc(c);
    affine_rows(p, batch.head, t.m.data(), i, &z2[i * h], sc.data());
    const Label tg = Label(batch.samples[s]->y[i - t.l.start[s]] +
                           (batch.offsets.empty() ? 0 : batch.offsets[s]));
    li[i] = row_ce(sc.data(), c, tg, weight_of(cw, tg), scale, &ds[i * c]);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t j = 0; j < h; ++j) dz2[i * h + j] += ds[i * c + k] * hd.w[k * h + j];
    for (std::size_t j = 0; j < h; ++j)
      for (std::size_t k = 0; k < h; ++k) dm[i * h + k] += dz2[i * h + j] * p.w2[j * h + k];
  }

  BatchResult r;
  r.grad = Gradients::zeros_like(p);
  r.voxels = n;
  r.sample_loss.assign(batch.samples.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    r.loss += li[i] * scale;
    r.sample_loss[t.l.sample[i]] += li[i];
  }
  for (std::size_t s = 0; s < batch.samples.size(); ++s)
    r.sample_loss[s] /= double(batch.samples[s]->dims.count());
  r.mean = t.nf.mean;
  r.var = t.nf.var;

  // Head and second-layer gradients.
  const std::size_t ow_hb = c * h, ow_w2 = ow_hb + c, ow_b2 = ow_w2 + h * h, width1 = ow_b2 + h;
  std::vector<double> g1(width1, 0.0);
  reduce_chunks(n, width1, g1.data(), [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = ds[i * c + k];
        acc[ow_hb + k] += d;
        for (std::size_t j = 0; j < h; ++j) acc[k * h + j] += d * z2[i * h + j];
      }
      for (std::size_t j = 0; j < h; ++j) {
        const double d = dz2[i * h + j];
        acc[ow_b2 + j] += d;
        for (std::size_t k = 0; k < h; ++k) acc[ow_w2 + j * h + k] += d * t.m[i * h + k];
      }
    }
  });
  auto& gw = r.grad.head_w[batch.head];
  auto& gb = r.grad.head_b[batch.head];
  std::copy(g1.begin(), g1.begin() + std::ptrdiff_t(ow_hb), gw.begin());
  std::copy(g1.begin() + std::ptrdiff_t(ow_hb), g1.begin() + std::ptrdiff_t(ow_w2), gb.begin());
  std::copy(g1.begin() + std::ptrdiff_t(ow_w2), g1.begin() + std::ptrdiff_t(ow_b2),
            r.grad.w2.begin());
  std::copy(g1.begin() + std::ptrdiff_t(ow_b2), g1.end(), r.grad.b2.begin());

  // Adjoint of the neighborhood mean (the neighborhood relation is symmetric).
  std::vector<double> dy(n * h);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(n); ++ii) {
    const std::size_t i = std::size_t(ii), s = t.l.sample[i], base = t.l.start[s];
    const Dims& d = batch.samples[s]->dims;
    std::vector<double> da(h, 0.0);
    for_each_neighbor(d, i - base, [&](std::size_t u) {
      const double inv = 1.0 / double(neighbor_count(d, u));
      for (std::size_t j = 0; j < h; ++j) da[j] += dm[(base + u) * h + j] * inv;
    });
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t q = i * h + j;
      dy[q] = t.nf.y[q] > 0.0 ? da[j] : 0.0;
    }
  }
  std::vector<double> g2(4 * h, 0.0);  // d_gamma, d_beta, sum dxh, sum dxh * x_hat
  reduce_chunks(n, 4 * h, g2.data(), [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t i = b; i < e; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t q = i * h + j;
        const double dxh = dy[q] * p.norm.gamma[j];
        acc[j] += dy[q] * t.nf.x_hat[q];
        acc[h + j] += dy[q];
        acc[2 * h + j] += dxh;
        acc[3 * h + j] += dxh * t.nf.x_hat[q];
      }
  });
  std::copy(g2.begin(), g2.begin() + std::ptrdiff_t(h), r.grad.gamma.begin());
  std::copy(g2.begin() + std::ptrdiff_t(h), g2.begin() + std::ptrdiff_t(2 * h), r.grad.beta.begin());
  reduce_chunks(n, h * in, r.grad.w1.data(), [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t i = b; i < e; ++i) {
      const double* x = row_x(batch.samples, t.l, i, in);
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t q = i * h + j;
        const double dz1 = t.nf.inv_std[j] / double(n) *
                           (double(n) * dy[q] * p.norm.gamma[j] - g2[2 * h + j] - t.nf.x_hat[q] * g2[3 * h + j]);
        for (std::size_t k = 0; k < in; ++k) acc[j * in + k] += dz1 * x[k];
      }
    }
  });
  double mn = n ? std::abs(t.nf.y[0]) : 0.0;
  for (double y : t.nf.y) mn = std::min(mn, std::abs(y));
  r.min_abs_preact = mn;
  return r;
}

void apply_gradients(ModelParams& p, const Gradients& g, double lr) {
  auto step = [lr](std::vector<double>& w, const std::vector<double>& d) {
    if (w.size() != d.size()) throw Error(ErrorCode::DimMismatch, "gradient shape");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * d[i];
  };
  step(p.w1, g.w1);
  step(p.w2, g.w2);
  step(p.b2, g.b2);
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    step(p.heads[h].w, g.head_w.at(h));
    step(p.heads[h].b, g.head_b.at(h));
  }
  geom::dsnorm_update_shared(p.norm, g.gamma, g.beta, lr);
}

void update_running_stats(ModelParams& p, std::size_t slot, const BatchResult& r) {
  std::vector<double> unbiased(r.var);
  if (r.voxels > 1)
    for (auto& v : unbiased) v *= double(r.voxels) / double(r.voxels - 1);
  p.norm.update_running(slot, r.mean, unbiased);
}

LossGrad loss_ce(const ScoreGrid& scores, const OccupancyGrid& gt, std::span<const double> cw,
                 Reduction red) {
  if (scores.dims() != gt.dims()) throw Error(ErrorCode::DimMismatch, "scores and gt dims differ");
  const std::size_t n = scores.voxels(), c = scores.num_classes();
  const double scale = red == Reduction::Mean && n ? 1.0 / double(n) : 1.0;
  LossGrad out;
  out.grad.resize(n * c);
  for (std::size_t v = 0; v < n; ++v) {
    const Label t = gt[v];
    if (t >= c) throw Error(ErrorCode::DimMismatch, "gt label outside the score classes");
    out.loss +=
        row_ce(&scores.scores()[v * c], c, t, weight_of(cw, t), scale, &out.grad[v * c]) * scale;
  }
  return out;
}

Hidden hidden_features(const ModelParams& p, const Sample& s, std::size_t slot,
                       geom::NormMode mode) {
  const Sample* one = &s;
  ParTrace t = trace_parallel(p, std::span<const Sample* const>(&one, 1), slot, mode, false);
  return {s.dims, p.hidden, std::move(t.m)};
}

std::vector<double> score_rows(const ModelParams& p, std::size_t head, std::span<const double> m,
                               std::size_t rows) {
  if (head >= p.heads.size()) throw Error(ErrorCode::UnknownDataset, "head index out of range");
  if (m.size() != rows * p.hidden) throw Error(ErrorCode::DimMismatch, "hidden rows shape");
  const std::size_t c = p.heads[head].classes;
  std::vector<double> out(rows * c);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < long(rows); ++ii) {
    std::vector<double> z2(p.hidden);
    affine_rows(p, head, m.data(), std::size_t(ii), z2.data(), &out[std::size_t(ii) * c]);
  }
  return out;
}

ScoreGrid forward(const ModelParams& p, const Sample& s, std::size_t slot, std::size_t head,
                  geom::NormMode mode) {
  check_route(p, slot, head);
  const Hidden hf = hidden_features(p, s, slot, mode);
  return ScoreGrid(s.dims, p.heads[head].classes, score_rows(p, head, hf.m, s.dims.count()));
}

// ---------------------------------------------------------------------------
// Sampling.

std::vector<ScheduledBatch> balanced_batches(std::span<const std::size_t> sizes,
                                             std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  std::size_t rounds = 0;
  for (std::size_t s : sizes) rounds = std::max(rounds, (s + batch_size - 1) / batch_size);
  std::vector<std::vector<ScheduledBatch>> per(sizes.size());
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    if (sizes[d] == 0) continue;
    bool repeat = false;
    while (per[d].size() < rounds) {
      std::vector<std::size_t> perm(sizes[d]);
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      rng.shuffle(perm);
      for (std::size_t b = 0; b < perm.size() && per[d].size() < rounds; b += batch_size) {
        ScheduledBatch sb{d, {}, {}};
        for (std::size_t i = b; i < std::min(perm.size(), b + batch_size); ++i) {
          sb.indices.push_back(perm[i]);
          sb.repeat.push_back(repeat);
        }
        per[d].push_back(std::move(sb));
      }
      repeat = true;
    }
  }
  std::vector<ScheduledBatch> out;
  for (std::size_t r = 0; r < rounds; ++r)
    for (std::size_t d = 0; d < sizes.size(); ++d)
      if (r < per[d].size()) out.push_back(std::move(per[d][r]));
  return out;
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> merged_batches(
    std::span<const std::size_t> sizes, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t d = 0; d < sizes.size(); ++d)
    for (std::size_t i = 0; i < sizes[d]; ++i) all.emplace_back(d, i);
  rng.shuffle(all);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out;
  for (std::size_t b = 0; b < all.size(); b += batch_size)
    out.emplace_back(all.begin() + std::ptrdiff_t(b),
                     all.begin() + std::ptrdiff_t(std::min(all.size(), b + batch_size)));
  return out;
}

Regime parse_regime(const std::string& s) {
  if (s == "single") return Regime::Single;
  if (s == "mdt") return Regime::Mdt;
  if (s == "direct_merge") return Regime::DirectMerge;
  if (s == "pretrain_finetune") return Regime::PretrainFinetune;
  throw Error(ErrorCode::ConfigError, "unknown regime '" + s + "'");
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::Single: return "single";
    case Regime::Mdt: return "mdt";
    case Regime::DirectMerge: return "direct_merge";
    case Regime::PretrainFinetune: return "pretrain_finetune";
  }
  return "?";
}

ClassWeighting parse_weighting(const std::string& s) {
  if (s == "none") return ClassWeighting::None;
  if (s == "inverse_frequency") return ClassWeighting::InverseFrequency;
  throw Error(ErrorCode::ConfigError, "unknown class weighting '" + s + "'");
}

const char* to_string(ClassWeighting w) {
  return w == ClassWeighting::None ? "none" : "inverse_frequency";
}

std::vector<std::vector<double>> class_weights(const ModelParams& p,
                                               const std::vector<Stream>& streams,
                                               ClassWeighting weighting) {
  std::vector<std::vector<double>> out;
  for (const auto& h : p.heads) out.emplace_back(h.classes, 1.0);
  if (weighting == ClassWeighting::None) return out;
  std::vector<std::vector<double>> counts;
  for (const auto& h : p.heads) counts.emplace_back(h.classes, 0.0);
  for (const auto& s : streams)
    for (const auto& smp : s.train)
      for (Label y : smp.y) {
        const std::size_t t = std::size_t(y) + s.offset;
        if (t >= counts.at(s.head).size())
          throw Error(ErrorCode::InvalidArgument, "training label outside the head");
        counts[s.head][t] += 1.0;
      }
  for (std::size_t h = 0; h < out.size(); ++h) {
    double total = 0.0, present = 0.0;
    for (double c : counts[h]) {
      total += c;
      present += c > 0.0;
    }
    for (std::size_t k = 0; k < out[h].size(); ++k)
      if (counts[h][k] > 0.0)
        out[h][k] = std::clamp(total / (present * counts[h][k]), 0.1, 10.0);
  }
  return out;
}

MetricRow evaluate_stream(const ModelParams& p, const Stream& s) {
  MetricRow row;
  row.dataset = s.name;
  const std::size_t c = s.space.size();
  if (s.test.empty() || c == 0) return row;
  std::vector<std::uint64_t> cm((c + 1) * (c + 1), 0);
  for (const auto& smp : s.test) {
    const auto labels = forward(p, smp, s.slot, s.head, geom::NormMode::Eval).argmax();
    if (smp.y.size() != labels.size())
      throw Error(ErrorCode::DimMismatch, "test sample without ground truth");
    for (std::size_t v = 0; v < labels.size(); ++v) {
      const std::size_t pred = s.head_to_dataset.at(labels[v]).value_or(Label(c));
      ++cm[std::size_t(smp.y[v]) * (c + 1) + pred];
    }
  }
  const std::size_t e = s.space.empty_id();
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t g = 0; g <= c; ++g)
    for (std::size_t q = 0; q <= c; ++q) {
      const auto n = cm[g * (c + 1) + q];
      if (g != e && q != e) tp += n;
      if (g == e && q != e) fp += n;
      if (g != e && q == e) fn += n;
    }
  if (tp + fp + fn) row.iou = double(tp) / double(tp + fp + fn);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (k == e) continue;
    std::uint64_t ktp = cm[k * (c + 1) + k], kfp = 0, kfn = 0;
    for (std::size_t o = 0; o <= c; ++o) {
      if (o == k) continue;
      kfp += cm[o * (c + 1) + k];
      kfn += cm[k * (c + 1) + o];
    }
    if (ktp + kfp + kfn == 0) continue;
    sum += double(ktp) / double(ktp + kfp + kfn);
    ++present;
  }
  if (present) row.miou = sum / double(present);
  return row;
}

TrainResult train(const TrainConfig& cfg, std::vector<Stream>& streams, ModelParams params) {
  if (streams.empty()) throw Error(ErrorCode::InvalidArgument, "no datasets to train on");
  if (cfg.batch_size == 0) throw Error(ErrorCode::ConfigError, "batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw Error(ErrorCode::ConfigError, "learning_rate must be a positive number");
  if (cfg.regime == Regime::PretrainFinetune && streams.size() != 2)
    throw Error(ErrorCode::ConfigError, "pretrain_finetune needs exactly two datasets");
  if (cfg.regime == Regime::Single && streams.size() != 1)
    throw Error(ErrorCode::ConfigError, "single regime takes exactly one dataset");
  if (cfg.regime == Regime::DirectMerge)
    for (const auto& s : streams)
      if (s.head != streams[0].head || s.slot != streams[0].slot)
        throw Error(ErrorCode::ConfigError, "direct_merge needs one shared head and norm slot");
  params.validate();
  const auto weights = class_weights(params, streams, cfg.weighting);
  Rng rng(cfg.seed, "sampler");
  TrainResult res;

  auto step = [&](const Batch& b, std::vector<double>& loss_sum, std::vector<std::size_t>& seen,
                  const std::vector<std::size_t>& owner) {
    const BatchResult r = forward_backward(params, b, weights[b.head], cfg.reduction);
    if (!std::isfinite(r.loss))
      throw Error(ErrorCode::DivergedLoss, "non-finite training loss");
    update_running_stats(params, b.slot, r);
    apply_gradients(params, r.grad, cfg.learning_rate);
    for (std::size_t i = 0; i < owner.size(); ++i) {
      loss_sum[owner[i]] += r.sample_loss[i];
      ++seen[owner[i]];
    }
  };

  const std::size_t total_epochs =
      cfg.regime == Regime::PretrainFinetune ? 2 * cfg.epochs : cfg.epochs;
  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    std::vector<double> loss_sum(streams.size(), 0.0);
    std::vector<std::size_t> seen(streams.size(), 0);
    if (cfg.regime == Regime::DirectMerge) {
      std::vector<std::size_t> sizes;
      for (const auto& s : streams) sizes.push_back(s.train.size());
      for (const auto& mb : merged_batches(sizes, cfg.batch_size, rng)) {
        Batch b{streams[0].slot, streams[0].head, {}, {}};
        std::vector<std::size_t> owner;
        for (const auto& [d, i] : mb) {
          b.samples.push_back(&streams[d].train[i]);
          b.offsets.push_back(streams[d].offset);
          owner.push_back(d);
        }
        step(b, loss_sum, seen, owner);
      }
    } else {
      std::vector<std::size_t> active;
      if (cfg.regime == Regime::PretrainFinetune) {
        active.push_back(epoch <= cfg.epochs ? 0 : 1);
      } else {
        for (std::size_t d = 0; d < streams.size(); ++d) active.push_back(d);
      }
      std::vector<std::size_t> sizes;
      for (std::size_t d : active) sizes.push_back(streams[d].train.size());
      for (const auto& sb : balanced_batches(sizes, cfg.batch_size, rng)) {
        const Stream& s = streams[active[sb.dataset]];
        Batch b{s.slot, s.head, {}, {}};
        for (std::size_t i : sb.indices) {
          b.samples.push_back(&s.train[i]);
          b.offsets.push_back(s.offset);
        }
        step(b, loss_sum, seen, std::vector<std::size_t>(sb.indices.size(), active[sb.dataset]));
      }
    }
    for (std::size_t d = 0; d < streams.size(); ++d) {
      MetricRow row = evaluate_stream(params, streams[d]);
      row.epoch = epoch;
      if (seen[d]) row.loss = loss_sum[d] / double(seen[d]);
      res.log.push_back(std::move(row));
    }
  }
  res.params = std::move(params);
  return res;
}

std::string metric_log_csv(const std::vector<MetricRow>& log) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  std::string out = "epoch,dataset,loss,iou,miou\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + r.dataset + "," + fmt(r.loss) + "," + fmt(r.iou) +
           "," + fmt(r.miou) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

void put_string(ByteWriter& w, const std::string& s) {
  if (s.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "name too long");
  w.u16(std::uint16_t(s.size()));
  w.bytes(s);
}

void put_tensor(ByteWriter& w, const std::string& name, std::vector<std::uint32_t> dims,
                const std::vector<double>& data) {
  put_string(w, name);
  w.u8(std::uint8_t(dims.size()));
  for (auto d : dims) w.u32(d);
  for (double v : data) w.f64(v);
}

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

}  // namespace

Bytes checkpoint_encode(const ModelParams& p, const Metadata& meta) {
  p.validate();
  ByteWriter w;
  w.bytes("MCKPT");
  w.u16(kCheckpointVersion);
  std::string text;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "metadata entries must be single-line key=value");
    text += k + "=" + v + "\n";
  }
  w.u32(std::uint32_t(text.size()));
  w.bytes(text);
  const auto h = std::uint32_t(p.hidden);
  w.u32(std::uint32_t(5 + 2 * p.heads.size()));
  put_tensor(w, "backbone.w1", {h, std::uint32_t(p.input)}, p.w1);
  put_tensor(w, "backbone.w2", {h, h}, p.w2);
  put_tensor(w, "backbone.b2", {h}, p.b2);
  put_tensor(w, "norm.gamma", {h}, p.norm.gamma);
  put_tensor(w, "norm.beta", {h}, p.norm.beta);
  for (const auto& hd : p.heads) {
    put_tensor(w, "head." + hd.name + ".w", {std::uint32_t(hd.classes), h}, hd.w);
    put_tensor(w, "head." + hd.name + ".b", {std::uint32_t(hd.classes)}, hd.b);
  }
  w.f64(p.norm.eps);
  w.f64(p.norm.momentum);
  w.u32(std::uint32_t(p.norm.num_datasets()));
  for (std::size_t s = 0; s < p.norm.num_datasets(); ++s) {
    const auto& st = p.norm.stats(s);
    put_string(w, st.dataset);
    w.u32(h);
    w.u64(st.updates);
    for (double v : st.running_mean) w.f64(v);
    for (double v : st.running_var) w.f64(v);
  }
  return w.take();
}

std::pair<ModelParams, Metadata> checkpoint_decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 5 || r.bytes(5) != "MCKPT")
    throw DecodeError(ErrorCode::BadMagic, 0, "not an MCKPT stream");
  if (r.u16() != kCheckpointVersion)
    throw DecodeError(ErrorCode::VersionUnsupported, 5, "unsupported MCKPT version");
  Metadata meta;
  const std::string text = r.bytes(r.u32());
  for (const auto& line : [&] {
         std::vector<std::string> lines;
         std::size_t b = 0;
         while (b < text.size()) {
           const auto e = text.find('\n', b);
           lines.push_back(text.substr(b, e - b));
           b = e == std::string::npos ? text.size() : e + 1;
         }
         return lines;
       }()) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), "malformed metadata line");
    meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  auto get_string = [&] { return r.bytes(r.u16()); };
  std::vector<Tensor> tensors(r.u32());
  for (auto& t : tensors) {
    t.name = get_string();
    t.dims.resize(r.u8());
    std::size_t count = 1;
    for (auto& d : t.dims) count *= (d = r.u32());
    if (count > r.remaining() / 8)
      throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), "tensor " + t.name);
    t.data.resize(count);
    for (auto& v : t.data) v = r.f64();
  }
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), "missing tensor " + name);
  };
  ModelParams p;
  const Tensor& w1 = find("backbone.w1");
  if (w1.dims.size() != 2) throw DecodeError(ErrorCode::TruncatedPayload, 0, "backbone.w1 rank");
  p.hidden = w1.dims[0];
  p.input = w1.dims[1];
  p.w1 = w1.data;
  p.w2 = find("backbone.w2").data;
  p.b2 = find("backbone.b2").data;
  const double eps = r.f64();
  const double momentum = r.f64();
  p.norm = geom::NormState(p.hidden, eps, momentum);
  p.norm.gamma = find("norm.gamma").data;
  p.norm.beta = find("norm.beta").data;
  for (const auto& t : tensors) {
    const std::string prefix = "head.";
    if (t.name.rfind(prefix, 0) != 0 || t.name.size() < 8 ||
        t.name.compare(t.name.size() - 2, 2, ".w") != 0)
      continue;
    const std::string name = t.name.substr(prefix.size(), t.name.size() - prefix.size() - 2);
    if (t.dims.size() != 2) throw DecodeError(ErrorCode::TruncatedPayload, 0, "head rank");
    p.heads.push_back({name, t.dims[0], t.data, find("head." + name + ".b").data});
  }
  const std::uint32_t slots = r.u32();
  for (std::uint32_t s = 0; s < slots; ++s) {
    const std::string name = get_string();
    const std::uint32_t dim = r.u32();
    if (dim != p.hidden) throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), "slot width");
    const std::size_t idx = p.norm.register_dataset(name);
    auto& st = p.norm.stats(idx);
    st.updates = r.u64();
    for (auto& v : st.running_mean) v = r.f64();
    for (auto& v : st.running_var) v = r.f64();
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw DecodeError(ErrorCode::TruncatedPayload, r.offset(), e.what());
  }
  return {std::move(p), std::move(meta)};
}

}  // namespace mdocc::model
