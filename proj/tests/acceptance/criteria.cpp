// Copyright 2026 The cpalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "criteria.hpp"

#include "cpalign/domain/domain.hpp"
#include "cpalign/fusion/fusion.hpp"
#include "cpalign/numerics/random.hpp"
#include "cpalign/pointcloud/phd.hpp"
#include "cpalign/sim/complexity.hpp"
#include "cpalign/sim/pipeline.hpp"
#include "cpalign/temporal/temporal.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace cpalign::acceptance
{

namespace
{

using numerics::Tensor3;
using pointcloud::OrientedBox;
using pointcloud::Point;
using pointcloud::PointCloud;

Tensor3 rand_t(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed, double lo = -1, double hi = 1)
{
  auto rng = numerics::make_rng(seed);
  return numerics::random_tensor(c, h, w, rng, lo, hi);
}

double max_abs_diff(const Tensor3 & a, const Tensor3 & b)
{
  if (!a.same_shape(b)) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::string fmt(double v)
{
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// ------------------------------------------------------------ 1 windows

bool window_counts(const SuiteOptions &, std::string & detail)
{
  const auto w = temporal::window_partition(256, 128, 16);
  detail = "|W1| = " + std::to_string(w.primary.size()) + ", |W2| = " + std::to_string(w.offset.size());
  return w.primary.size() == 128 && w.offset.size() == 105;
}

// --------------------------------------------------------- 2 complexity

bool complexity(const SuiteOptions &, std::string & detail)
{
  const auto g = sim::count_similarity_ops(64, 256, 128, 16, sim::SimilarityMode::global);
  const auto b = sim::count_similarity_ops(64, 256, 128, 16, sim::SimilarityMode::blockwise);
  const double ratio = static_cast<double>(b.mul) / static_cast<double>(g.mul);
  // Instrumented counts from actually executing the loss.
  const auto blk = temporal::temporal_loss(rand_t(64, 256, 128, 1), rand_t(64, 256, 128, 2), 16);
  const auto sq = temporal::temporal_loss(rand_t(64, 128, 128, 3), rand_t(64, 128, 128, 4), 128);
  const auto g_sq = sim::count_similarity_ops(64, 128, 128, 128, sim::SimilarityMode::global);
  detail = "global " + std::to_string(g.mul) + ", blockwise " + std::to_string(b.mul) + ", ratio " + fmt(ratio) +
           ", instrumented " + std::to_string(blk.ops.mul) + " / " + std::to_string(sq.ops.mul) + " (global " +
           std::to_string(g_sq.mul) + ")";
  return g.mul == 6356992u && b.mul == 11571712u && ratio >= 1.80 && ratio <= 1.83 && blk.ops.mul == b.mul &&
         sq.ops.mul == g_sq.mul;
}

// --------------------------------------------------------------- 3 warp

Tensor3 constant_field(std::size_t h, std::size_t w, double dx, double dy)
{
  Tensor3 d(2, h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      d.at(0, r, c) = dx;
      d.at(1, r, c) = dy;
    }
  return d;
}

bool warp_exactness(const SuiteOptions &, std::string & detail)
{
  const Tensor3 ones(1, 12, 10, 1.0);
  const auto f = rand_t(6, 12, 10, 5);
  const bool identity = temporal::warp_features(f, temporal::MotionField::identity(12, 10)) == f;

  // One-hot at (r, c) moved by integer (dx, dy) lands on (r + dy, c + dx) with value 1.
  bool transport = true;
  auto rng = numerics::make_rng(6);
  std::uniform_int_distribution<int> pos(3, 6), step(-3, 3);
  for (int trial = 0; trial < 50 && transport; ++trial) {
    const int r = pos(rng), c = pos(rng), dx = step(rng), dy = step(rng);
    Tensor3 hot(2, 12, 10);
    hot.at(0, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
    hot.at(1, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = -2.0;
    const auto out = temporal::warp_features(hot, constant_field(12, 10, dx, dy), 1.0, ones);
    Tensor3 expect(2, 12, 10);
    expect.at(0, static_cast<std::size_t>(r + dy), static_cast<std::size_t>(c + dx)) = 1.0;
    expect.at(1, static_cast<std::size_t>(r + dy), static_cast<std::size_t>(c + dx)) = -2.0;
    transport = out == expect;
  }

  Tensor3 hot(1, 8, 8);
  hot.at(0, 3, 3) = 1.0;
  const auto half = temporal::warp_features(hot, constant_field(8, 8, 0.5, 0.0), 1.0, Tensor3(1, 8, 8, 1.0));
  const double e_half = std::max(std::abs(half.at(0, 3, 3) - 0.5), std::abs(half.at(0, 3, 4) - 0.5));
  detail = std::string("identity ") + (identity ? "bit-exact" : "differs") + ", integer transport " +
           (transport ? "exact" : "inexact") + ", half-cell error " + fmt(e_half);
  return identity && transport && e_half <= 1e-9;
}

// ---------------------------------------------------- 4 oracle-xi PTAM

/// Per-scale features of one rigid box: channel c carries (1 + c / C) on its footprint.
bev::MultiScaleFeatures box_features(const OrientedBox & box, const bev::BevSpec & spec)
{
  bev::MultiScaleFeatures ms;
  const std::vector<OrientedBox> boxes = {box};
  for (std::size_t k = 0; k < 3; ++k) {
    bev::BevSpec s = spec;
    s.cell = spec.cell * static_cast<double>(std::size_t{1} << k);
    const auto mask = fusion::rasterize_footprints(boxes, s);
    const std::size_t channels = bev::kScaleChannels[k];
    Tensor3 t(channels, mask.height(), mask.width());
    for (std::size_t c = 0; c < channels; ++c) {
      const double amp = 1.0 + static_cast<double>(c) / static_cast<double>(channels);
      auto dst = t.channel(c);
      const auto src = mask.channel(0);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = amp * src[i];
    }
    ms.scales[k] = std::move(t);
  }
  return ms;
}

bool oracle_compensation(const SuiteOptions &, std::string & detail)
{
  const bev::BevSpec spec;
  const double dt = 0.1;
  const double speed = 16.0;  // 1.6 m per frame: 4, 2 and 1 cells on the three scales
  const OrientedBox start{-8.0, 0.0, 0.75, 6.4, 3.2, 1.5, 0.0};
  auto at = [&](double t) {
    OrientedBox b = start;
    b.cx += speed * t;
    return b;
  };
  const auto weights = temporal::PtamWeights::analytic(11);
  bool ok = true;
  double worst_err = 0.0;
  std::ostringstream cos;
  for (int tau_ms : {100, 200, 300, 400, 500}) {
    const double tau = tau_ms / 1000.0;
    const double t_prev = 0.0, t_latest = dt, t = dt + tau;
    const auto previous = box_features(at(t_prev), spec);
    const auto latest = box_features(at(t_latest), spec);
    const auto truth = box_features(at(t), spec);
    const temporal::DelayContext ctx{tau, dt, temporal::XiMode::oracle};
    const std::vector<sim::BoxMotion> m1 = {{at(t_prev), at(t_latest)}};
    const std::vector<sim::BoxMotion> m2 = {{at(t_latest), at(t)}};
    temporal::PtamOptions opt;
    opt.stage1_fields = sim::ideal_motion_fields(m1, spec, 1.0);
    opt.stage2_fields = sim::ideal_motion_fields(m2, spec, ctx.ratio());
    const auto r = temporal::ptam_align(previous, latest, ctx, weights, opt);
    double err = 0.0;
    for (std::size_t k = 0; k < 3; ++k) err = std::max(err, max_abs_diff(r.compensated.scales[k], truth.scales[k]));
    const double pre = temporal::mean_window_cosine(latest.scales[0], truth.scales[0], 16);
    const double post = temporal::mean_window_cosine(r.compensated.scales[0], truth.scales[0], 16);
    cos << " " << tau_ms << "ms " << fmt(pre) << "->" << fmt(post);
    ok = ok && post >= pre;
    if (tau_ms == 500) {
      worst_err = err;
      ok = ok && err <= 1e-6;
    }
  }
  detail = "max abs error at 500 ms " + fmt(worst_err) + "; cosine pre->post" + cos.str();
  return ok;
}

// ----------------------------------------------------------- 5 gradients

/// Relative error with a floor at 1e-5 of the largest reference entry, so
/// entries at the finite-difference noise level do not dominate.
double grad_error(const Tensor3 & analytic, const Tensor3 & fd)
{
  double peak = 0.0;
  for (double v : fd.data()) peak = std::max(peak, std::abs(v));
  return oracle::max_relative_error(analytic, fd, std::max(1e-5 * peak, 1e-12));
}

bool gradients(const SuiteOptions &, std::string & detail)
{
  double worst_t = 0.0, worst_d = 0.0, worst_f = 0.0;
  auto rng = numerics::make_rng(21);
  std::uniform_int_distribution<std::size_t> ch(1, 4), side(0, 1);
  const std::size_t sides[] = {16, 32};
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t c = ch(rng), h = sides[side(rng)], w = sides[side(rng)];
    const auto a = rand_t(c, h, w, 1000 + i);
    const auto b = rand_t(c, h, w, 2000 + i);
    const auto res = temporal::temporal_loss(a, b, 8);
    const auto fd = oracle::finite_difference_gradient(
      [&](const Tensor3 & x) { return temporal::temporal_loss(x, b, 8).loss; }, a, 1e-4);
    worst_t = std::max(worst_t, grad_error(res.grad, fd));
  }
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t h = sides[side(rng)], w = sides[side(rng)];
    const auto logits = rand_t(1, h, w, 3000 + i, -4, 4);
    const auto wts = rand_t(1, h, w, 4000 + i, 0, 1);
    const int z = static_cast<int>(i % 2);
    const auto res = domain::domain_loss_and_grads(logits, z, wts);
    const auto fd = oracle::finite_difference_gradient(
      [&](const Tensor3 & x) { return domain::domain_loss_and_grads(x, z, wts).loss; }, logits, 1e-4);
    worst_d = std::max(worst_d, grad_error(res.grad_logits, fd));
  }
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t h = sides[side(rng)], w = sides[side(rng)];
    const auto p = rand_t(1, h, w, 5000 + i, 0.02, 0.98);
    auto labels = rand_t(1, h, w, 6000 + i, 0, 1);
    for (double & v : labels.data()) v = v < 0.3 ? 1.0 : 0.0;
    const auto res = fusion::foreground_loss(p, labels);
    const auto fd = oracle::finite_difference_gradient(
      [&](const Tensor3 & x) { return fusion::foreground_loss(x, labels).loss; }, p, 1e-6);
    worst_f = std::max(worst_f, grad_error(res.grad, fd));
  }
  detail = "max relative error: temporal " + fmt(worst_t) + ", domain " + fmt(worst_d) + ", foreground " +
           fmt(worst_f);
  return worst_t <= 1e-4 && worst_d <= 1e-4 && worst_f <= 1e-4;
}

// ----------------------------------------------------------------- 6 GRL

bool grl_contract(const SuiteOptions &, std::string & detail)
{
  std::size_t checked = 0, mismatched = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto logits = rand_t(1, 8, 8, 7000 + i, -6, 6);
    const auto wts = rand_t(1, 8, 8, 8000 + i, 0, 1);
    const auto res = domain::domain_loss_and_grads(logits, static_cast<int>(i % 2), wts);
    for (std::size_t k = 0; k < logits.size(); ++k, ++checked) {
      mismatched += res.grad_feature_path.data()[k] != -0.1 * res.grad_logits.data()[k];
    }
  }
  detail = std::to_string(mismatched) + " of " + std::to_string(checked) + " entries differ from -0.1 x logit gradient";
  return mismatched == 0 && domain::kGradientReversalScale == -0.1;
}

// ----------------------------------------------------------------- 7 FPS

bool fps_oracle(const SuiteOptions &, std::string & detail)
{
  auto rng = numerics::make_rng(31);
  std::uniform_int_distribution<std::size_t> count(1, 64);
  std::uniform_real_distribution<double> coord(-20.0, 20.0);
  const double betas[] = {0.25, 0.5, 0.75};
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = count(rng);
    const bool planar = trial % 2 == 0;
    PointCloud pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({coord(rng), coord(rng), planar ? 0.0 : coord(rng), 0.0});
    const double beta = betas[trial % 3];
    const auto keep = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n)));
    agree += pointcloud::fps(pts, beta) == oracle::brute_force_fps(pts, keep);
  }
  detail = std::to_string(agree) + " / 100 trials identical to brute-force greedy";
  return agree == 100;
}

// ----------------------------------------------------------------- 8 PHD

PointCloud points_in_box(const OrientedBox & b, std::size_t n, std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  PointCloud out;
  const double cs = std::cos(b.yaw), sn = std::sin(b.yaw);
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = u(rng) * b.length, ly = u(rng) * b.width, lz = u(rng) * b.height;
    out.push_back({b.cx + cs * lx - sn * ly, b.cy + sn * lx + cs * ly, b.cz + lz, 0.5});
  }
  return out;
}

bool phd_contract(const SuiteOptions &, std::string & detail)
{
  const pointcloud::PhdConfig base;  // 50 m, 2 objects, alpha 0.5, 0.6 / 0.8
  auto rng = numerics::make_rng(41);
  std::uniform_real_distribution<double> yaw(-3.0, 3.0);
  std::uniform_int_distribution<std::size_t> npts(20, 120);
  int failures = 0;
  std::size_t reduced_boxes = 0;
  for (int trial = 0; trial < 30; ++trial) {
    // Boxes on separated slots along a ring so their footprints never overlap.
    std::vector<OrientedBox> boxes;
    PointCloud cloud;
    for (int k = 0; k < 5; ++k) {
      const double r = 15.0 + 15.0 * k, a = 1.2 * k + 0.1 * trial;
      boxes.push_back({r * std::cos(a), r * std::sin(a), 0.75, 4.3, 1.9, 1.5, yaw(rng)});
      const auto pts = points_in_box(boxes.back(), npts(rng), rng);
      cloud.insert(cloud.end(), pts.begin(), pts.end());
    }
    std::uniform_real_distribution<double> g(-100.0, 100.0);
    for (int i = 0; i < 60; ++i) {
      const Point p{g(rng), g(rng), 0.0, 0.1};
      if (std::none_of(boxes.begin(), boxes.end(), [&](const OrientedBox & b) { return b.contains(p); })) {
        cloud.push_back(p);
      }
    }
    std::shuffle(cloud.begin(), cloud.end(), rng);
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto out = pointcloud::phd_apply(cloud, boxes, {0.0, 0.0}, cfg);
    const bool deterministic = out == pointcloud::phd_apply(cloud, boxes, {0.0, 0.0}, cfg);

    std::size_t j = 0;  // ordered subset of the input
    for (const auto & p : cloud) j += j < out.size() && out[j] == p;
    const bool subset = j == out.size();

    const auto chosen = pointcloud::select_proximal(boxes, {0.0, 0.0}, cfg);
    std::size_t near = 0;
    for (const auto & b : boxes) near += std::hypot(b.cx, b.cy) <= cfg.distance_threshold;
    bool selection = chosen.size() == std::min(near, cfg.max_objects);
    for (auto k : chosen) selection = selection && std::hypot(boxes[k].cx, boxes[k].cy) <= cfg.distance_threshold;

    auto in_chosen = [&](const Point & p) {
      return std::any_of(chosen.begin(), chosen.end(), [&](std::size_t k) { return boxes[k].contains(p); });
    };
    bool counts = true;
    for (auto k : chosen) {
      auto split = [&](const PointCloud & c) {
        std::size_t inner = 0, outer = 0;
        for (const auto & p : c) {
          if (boxes[k].contains(p, cfg.inner_scale)) ++inner;
          else if (boxes[k].contains(p)) ++outer;
        }
        return std::pair{inner, outer};
      };
      const auto [bi, bo] = split(cloud);
      const auto [ai, ao] = split(out);
      counts = counts && ai == static_cast<std::size_t>(std::ceil(0.6 * static_cast<double>(bi))) &&
               ao == static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(bo)));
      ++reduced_boxes;
    }
    const auto untouched_in = std::count_if(cloud.begin(), cloud.end(), [&](const Point & p) { return !in_chosen(p); });
    const auto untouched_out = std::count_if(out.begin(), out.end(), [&](const Point & p) { return !in_chosen(p); });
    failures += !(deterministic && subset && selection && counts && untouched_in == untouched_out);
  }
  detail = std::to_string(30 - failures) + " / 30 scenes satisfy subset, ceil counts, untouched and determinism (" +
           std::to_string(reduced_boxes) + " boxes reduced)";
  return failures == 0;
}

// ------------------------------------------------------- 9 observability

bool observability_bound(const SuiteOptions &, std::string & detail)
{
  double lo = INFINITY, hi = 0.0, equal_err = 0.0, rescale_err = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto a = rand_t(1, 16, 16, 9000 + i, 0, 1);
    auto b = rand_t(1, 16, 16, 9100 + i, 0, 1);
    for (std::size_t k = 0; k < b.size(); k += 2) b.data()[k] = a.data()[k];  // half the cells agree
    const auto w = domain::observability_weighting(a, b);
    for (std::size_t k = 0; k < w.size(); ++k) {
      lo = std::min(lo, w.data()[k]);
      hi = std::max(hi, w.data()[k]);
      if (k % 2 == 0) equal_err = std::max(equal_err, std::abs(w.data()[k] - 0.5));
    }
    const auto logits = rand_t(1, 16, 16, 9200 + i, -3, 3);
    const double base = domain::domain_loss_and_grads(logits, static_cast<int>(i % 2), w).loss;
    for (double c : {1e-3, 0.5, 7.0, 1e3}) {
      const double scaled = domain::domain_loss_and_grads(logits, static_cast<int>(i % 2), numerics::scale(w, c)).loss;
      rescale_err = std::max(rescale_err, std::abs(scaled - base));
    }
  }
  detail = "W in [" + fmt(lo) + ", " + fmt(hi) + "], equal-cell error " + fmt(equal_err) + ", rescale error " +
           fmt(rescale_err);
  return lo > 0.0 && hi <= 0.5 && equal_err <= 1e-9 && rescale_err <= 1e-9;
}

// ---------------------------------------------------------- 10 StructConv

bool struct_conv(const SuiteOptions &, std::string & detail)
{
  using fusion::StructBank;
  double fused_err = 0.0;
  bool invariants = true;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t groups = seed % 2 == 0 ? 0 : 2;  // depthwise or two groups
    auto k = fusion::StructKernels::analytic(8, seed, groups);
    for (std::size_t b = 0; b < fusion::kStructBanks; ++b)
      for (std::size_t c = 0; c < 8; ++c) k.bias[b][c] = 0.01 * static_cast<double>(b * 8 + c);
    const auto x = rand_t(8, 16, 12, 300 + seed);
    fused_err = std::max(
      fused_err, max_abs_diff(
                   fusion::struct_conv(x, k, fusion::StructPath::fused),
                   fusion::struct_conv(x, k, fusion::StructPath::separate)));

    const auto cs = k.bank(StructBank::center_surround);
    const auto hz = k.bank(StructBank::horizontal);
    const auto vt = k.bank(StructBank::vertical);
    const auto an = k.bank(StructBank::angular);
    for (std::size_t off = 0; off < k.base.weights.size(); off += 9) {
      const double * base = &k.base.weights[off];
      const double * c = &cs.weights[off];
      const double * h = &hz.weights[off];
      const double * v = &vt.weights[off];
      const double * a = &an.weights[off];
      double surround = 0.0;
      for (std::size_t i = 0; i < 9; ++i)
        if (i != 4) surround += c[i];
      invariants = invariants && c[4] == -surround;
      for (std::size_t r = 0; r < 3; ++r) {
        invariants = invariants && h[r * 3 + 2] == -h[r * 3] && h[r * 3 + 1] == 0.0;
        invariants = invariants && v[6 + r] == -v[r] && v[3 + r] == 0.0;
      }
      // Quarter turn counter-clockwise: rot[r][c] = base[c][2 - r].
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t col = 0; col < 3; ++col) {
          invariants = invariants && a[r * 3 + col] == base[r * 3 + col] - base[col * 3 + (2 - r)];
        }
    }
  }
  detail = "fused vs separate " + fmt(fused_err) + ", kernel invariants " + (invariants ? "exact" : "violated");
  return fused_err <= 1e-6 && invariants;
}

// --------------------------------------------------------------- 11 IFAM

bool ifam_algebra(const SuiteOptions &, std::string & detail)
{
  bool split_exact = true;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto h = rand_t(6, 10, 10, 400 + i, -50, 50);
    const auto m = rand_t(1, 10, 10, 500 + i, 0, 1);
    const auto s = fusion::split_foreground(h, m);
    for (std::size_t k = 0; k < h.size(); ++k) split_exact = split_exact && s.fore.data()[k] + s.back.data()[k] == h.data()[k];
  }

  const auto fore = rand_t(4, 6, 6, 600);
  const auto enh = rand_t(4, 6, 6, 601);
  const auto back = rand_t(4, 6, 6, 602);
  auto spec = fusion::AggregationSpec::identity(4);
  spec.epsilon = 0.0;
  const auto w1 = fusion::aggregate_instance(fore, enh, back, Tensor3(4, 6, 6, 1.0), spec);
  const auto w0 = fusion::aggregate_instance(fore, enh, back, Tensor3(4, 6, 6, 0.0), spec);
  double blend_err = 0.0;
  for (std::size_t k = 0; k < fore.size(); ++k) {
    // Identity mixing sums blend, fore and enhanced: W = 1 blends to fore, W = 0 to enhanced.
    blend_err = std::max(blend_err, std::abs(w1.data()[k] - (2 * fore.data()[k] + enh.data()[k])));
    blend_err = std::max(blend_err, std::abs(w0.data()[k] - (fore.data()[k] + 2 * enh.data()[k])));
  }

  bool shuffle_inverts = true;
  for (std::size_t g : {1u, 2u, 3u, 4u, 6u, 12u}) {
    const auto t = rand_t(12, 3, 3, 700 + g);
    shuffle_inverts = shuffle_inverts && fusion::channel_unshuffle(fusion::channel_shuffle(t, g), g) == t &&
                      fusion::channel_shuffle(fusion::channel_unshuffle(t, g), g) == t;
  }

  const auto wv = fusion::verification_weights(rand_t(8, 7, 7, 800), rand_t(8, 7, 7, 801), fusion::VerificationSpec::zeros(8));
  const bool half = std::all_of(wv.data().begin(), wv.data().end(), [](double v) { return v == 0.5; });

  detail = std::string("split ") + (split_exact ? "exact" : "inexact") + ", blend endpoint error " + fmt(blend_err) +
           ", shuffle " + (shuffle_inverts ? "invertible" : "not invertible") + ", zero-weight sigmoid " +
           (half ? "0.5" : "not 0.5");
  return split_exact && blend_err <= 1e-12 && shuffle_inverts && half;
}

// -------------------------------------------------------------- 12 codec

bool codec(const SuiteOptions &, std::string & detail)
{
  bool identity = true;
  double worst_ratio = 0.0;  // error / (max-abs / 254)
  for (std::uint64_t i = 0; i < 20; ++i) {
    const double range = std::pow(10.0, static_cast<double>(i % 5) - 2.0);
    sim::Payload p;
    p.names = {"a", "b"};
    p.tensors = {rand_t(8, 16, 16, 1100 + i, -range, range), rand_t(2, 8, 8, 1200 + i, -range, range)};
    const auto tx = sim::transmit(p, {sim::CodecMode::identity});
    identity = identity && tx.received.tensors == p.tensors && tx.total_mse == 0.0;
    for (const auto & t : p.tensors) {
      double maxabs = 0.0;
      for (double v : t.data()) maxabs = std::max(maxabs, std::abs(v));
      const auto q = sim::quantize_dequantize(t, sim::CodecMode::int8);
      worst_ratio = std::max(worst_ratio, max_abs_diff(t, q) / (maxabs / 254.0));
    }
  }
  detail = std::string("identity ") + (identity ? "bit-exact" : "differs") + ", worst int8 error / bound " +
           fmt(worst_ratio);
  return identity && worst_ratio <= 1.0;
}

// ------------------------------------------------------ 13 delay sweep

bool delay_sweep(const SuiteOptions & options, std::string & detail)
{
  sim::ScenarioConfig cfg;  // crossing flows
  cfg.kind = sim::Template::crossing;
  const auto scenario = sim::generate_scenario(cfg);
  const bev::BevSpec spec;
  const auto pipeline = sim::Pipeline::analytic(scenario.seed, spec);
  sim::SweepConfig sweep;
  sweep.threads = options.threads;
  const auto rows = sim::run_sweep(pipeline, scenario, sweep, sim::RunOptions{});

  std::ostringstream csv;
  sim::write_csv(csv, rows);
  if (options.sweep_csv) {
    std::ofstream out(*options.sweep_csv);
    out << csv.str();
  }
  // Read the verdict back from the CSV text, as an external consumer would.
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  bool ok = line == sim::kCsvHeader;
  std::map<double, std::map<std::string, double>> by_tau;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string metric, value, tau;
    std::getline(ls, metric, ',');
    std::getline(ls, value, ',');
    std::getline(ls, tau, ',');
    by_tau[std::stod(tau)][metric] = std::stod(value);
  }
  std::ostringstream d;
  std::size_t judged = 0;
  for (const auto & [tau, m] : by_tau) {
    const double base = m.at("iou_baseline"), ptam = m.at("iou_ptam"), cells = m.at("displacement_cells");
    d << " " << tau << "ms " << fmt(base) << "/" << fmt(ptam);
    if (cells >= 1.0) {
      ++judged;
      ok = ok && ptam >= base;
      if (tau >= 300.0) ok = ok && ptam > base;
    }
  }
  detail = "IoU baseline/PTAM" + d.str() + " (" + std::to_string(judged) + " points with >= 1 cell)";
  return ok && judged >= 5;
}

}  // namespace

const std::vector<Criterion> & criteria()
{
  static const std::vector<Criterion> list = {
    {1, "window-count parity", 0.001, window_counts},
    {2, "complexity parity", 5.0, complexity},
    {3, "warp exactness", 1.0, warp_exactness},
    {4, "oracle-xi compensation", 30.0, oracle_compensation},
    {5, "gradient checks", 60.0, gradients},
    {6, "gradient reversal contract", 1.0, grl_contract},
    {7, "FPS oracle equivalence", 10.0, fps_oracle},
    {8, "PHD contract", 5.0, phd_contract},
    {9, "observability weighting bound", 1.0, observability_bound},
    {10, "StructConv equivalence and invariants", 1.0, struct_conv},
    {11, "IFAM algebra", 1.0, ifam_algebra},
    {12, "codec bounds", 1.0, codec},
    {13, "end-to-end delay sweep", 120.0, delay_sweep},
  };
  return list;
}

std::vector<CriterionResult> run_suite(
  const SuiteOptions & options, const std::function<void(const CriterionResult &)> & on_result)
{
  std::vector<CriterionResult> results;
  for (const auto & c : criteria()) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), c.id) == options.only.end()) {
      continue;
    }
    CriterionResult r;
    r.id = c.id;
    r.name = c.name;
    r.budget_s = c.budget_s;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.passed = c.check(options, r.detail);
    } catch (const std::exception & e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.seconds > r.budget_s) {
      r.passed = false;
      r.detail += "; over the time budget";
    }
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_result(const CriterionResult & r)
{
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(3);
  s << (r.passed ? "PASS" : "FAIL") << " " << (r.id < 10 ? " " : "") << r.id << " " << r.name << " (" << r.seconds
    << " s / " << r.budget_s << " s): " << r.detail;
  return s.str();
}

}  // namespace cpalign::acceptance
