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

#include "cpalign/temporal/temporal.hpp"

#include "cpalign/numerics/random.hpp"
#include "cpalign/numerics/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cpalign::temporal
{

using numerics::ConvSpec;
using numerics::ShapeError;

MotionField MotionField::identity(std::size_t height, std::size_t width)
{
  return {Tensor3(2, height, width), Tensor3(1, height, width, 1.0)};
}

void MotionField::validate() const
{
  if (displacement.channels() != 2 || weight.channels() != 1 || !displacement.same_plane(weight)) {
    throw ShapeError(
      "motion field: displacement " + displacement.shape_string() + " and weight " +
      weight.shape_string() + " must be 2xHxW and 1xHxW");
  }
  numerics::require_finite(displacement, "motion field displacement");
  for (double w : weight.values()) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw numerics::NumericError("motion field: sampling weight " + std::to_string(w) + " outside [0, 1]");
    }
  }
}

void DelayContext::validate() const
{
  if (!(frame_period > 0.0) || !std::isfinite(frame_period)) {
    throw std::invalid_argument("delay context: frame period must be positive");
  }
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("delay context: delay must be non-negative");
  }
}

double DelayContext::ratio() const
{
  validate();
  return tau / frame_period;
}

// ---------------------------------------------------------------------- warp

Tensor3 warp_features(const Tensor3 & features, const Tensor3 & displacement, double xi, const Tensor3 & weight)
{
  if (displacement.channels() != 2 || !displacement.same_plane(features) || weight.channels() != 1 ||
      !weight.same_plane(features)) {
    throw ShapeError(
      "warp_features: features " + features.shape_string() + ", displacement " +
      displacement.shape_string() + ", weight " + weight.shape_string() + " disagree");
  }
  if (!(xi >= 0.0) || !std::isfinite(xi)) {
    throw std::invalid_argument("warp_features: xi must be finite and non-negative");
  }
  const std::size_t h = features.height(), w = features.width();
  numerics::SamplingPlan plan;
  plan.height = h;
  plan.width = w;
  plan.taps.resize(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double src_c = static_cast<double>(c) - xi * displacement.at(0, r, c);
      const double src_r = static_cast<double>(r) - xi * displacement.at(1, r, c);
      plan.taps[r * w + c] = numerics::bilinear_taps(h, w, src_r, src_c);
    }
  }
  return numerics::multiply_map(numerics::apply_plan(features, plan), weight);
}

Tensor3 warp_features(const Tensor3 & features, const MotionField & field, double xi)
{
  return warp_features(features, field.displacement, xi, field.weight);
}

// ------------------------------------------------------------ motion network

MotionEstimator MotionEstimator::layout(std::size_t channels)
{
  using numerics::Activation;
  MotionEstimator m;
  m.branch_latest_ = ConvSpec::zeros(kBranchWidth, 2 * channels, 3, 1, 1, 1, Activation::relu);
  m.branch_previous_ = ConvSpec::zeros(kBranchWidth, 2 * channels, 3, 1, 1, 1, Activation::relu);
  m.fuse_ = ConvSpec::zeros(kBranchWidth, 2 * kBranchWidth, 3, 1, 1, 1, Activation::relu);
  m.flow_ = ConvSpec::zeros(2, kBranchWidth, 3, 1, 1);
  m.weight_ = ConvSpec::zeros(1, kBranchWidth, 3, 1, 1, 1, Activation::sigmoid);
  return m;
}

MotionEstimator MotionEstimator::analytic(std::size_t channels, std::uint64_t seed)
{
  auto m = layout(channels);
  auto rng = numerics::make_rng(seed, {numerics::label_key("ptam.motion")});
  numerics::fill_he(m.branch_latest_, rng);
  numerics::fill_he(m.branch_previous_, rng);
  numerics::fill_he(m.fuse_, rng);
  m.weight_.bias[0] = kWeightBias;
  return m;
}

MotionEstimator MotionEstimator::from_archive(
  const numerics::WeightArchive & archive, const std::string & prefix, std::size_t channels)
{
  std::vector<std::string> names;
  for (const char * part : {".branch_latest", ".branch_previous", ".fuse", ".flow", ".weight_head"}) {
    for (auto & n : numerics::conv_names(prefix + part)) names.push_back(n);
  }
  numerics::require_names(archive, names);
  auto m = layout(channels);
  m.branch_latest_ = numerics::fetch_conv(archive, prefix + ".branch_latest", m.branch_latest_);
  m.branch_previous_ = numerics::fetch_conv(archive, prefix + ".branch_previous", m.branch_previous_);
  m.fuse_ = numerics::fetch_conv(archive, prefix + ".fuse", m.fuse_);
  m.flow_ = numerics::fetch_conv(archive, prefix + ".flow", m.flow_);
  m.weight_ = numerics::fetch_conv(archive, prefix + ".weight_head", m.weight_);
  return m;
}

void MotionEstimator::store(numerics::WeightArchive & archive, const std::string & prefix) const
{
  numerics::store_conv(archive, prefix + ".branch_latest", branch_latest_);
  numerics::store_conv(archive, prefix + ".branch_previous", branch_previous_);
  numerics::store_conv(archive, prefix + ".fuse", fuse_);
  numerics::store_conv(archive, prefix + ".flow", flow_);
  numerics::store_conv(archive, prefix + ".weight_head", weight_);
}

namespace
{

bool all_zero(const std::vector<double> & v)
{
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

MotionField MotionEstimator::estimate(const Tensor3 & latest, const Tensor3 & previous) const
{
  numerics::require_same_shape(latest, previous, "estimate_motion");
  if (latest.channels() != channels()) {
    throw ShapeError(
      "estimate_motion: expected " + std::to_string(channels()) + " channels, got " +
      latest.shape_string());
  }
  // With both heads at zero weight the trunk cannot influence the output.
  if (all_zero(flow_.weights) && all_zero(weight_.weights)) {
    MotionField f;
    f.displacement = Tensor3(2, latest.height(), latest.width());
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < latest.plane_size(); ++i) {
        f.displacement.data()[c * latest.plane_size() + i] = flow_.bias[c];
      }
    f.weight = Tensor3(1, latest.height(), latest.width(), numerics::sigmoid(weight_.bias[0]));
    return f;
  }
  const Tensor3 diff = numerics::subtract(latest, previous);
  const Tensor3 a = numerics::conv2d(numerics::concat_channels(diff, latest), branch_latest_);
  const Tensor3 b = numerics::conv2d(numerics::concat_channels(diff, previous), branch_previous_);
  const Tensor3 trunk = numerics::conv2d(numerics::concat_channels(a, b), fuse_);
  return {numerics::conv2d(trunk, flow_), numerics::conv2d(trunk, weight_)};
}

Tensor3 motion_difference(const MotionField & stage1, const MotionField & stage2)
{
  stage1.validate();
  stage2.validate();
  numerics::require_same_shape(stage1.displacement, stage2.displacement, "motion_difference");
  return numerics::subtract(
    numerics::multiply_map(stage2.displacement, stage2.weight),
    numerics::multiply_map(stage1.displacement, stage1.weight));
}

std::vector<double> sinusoidal_embedding(double position, std::size_t width, double base)
{
  std::vector<double> e(width);
  for (std::size_t i = 0; i < width; ++i) {
    const double pair = static_cast<double>(i - i % 2);
    const double angle = position / std::pow(base, pair / static_cast<double>(width));
    e[i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return e;
}

// ---------------------------------------------------------------- xi network

XiPredictor XiPredictor::layout()
{
  using numerics::Activation;
  XiPredictor x;
  x.stem_ = ConvSpec::zeros(kWidth, 2, 3, 1, 1, 1, Activation::relu);
  x.res_a_ = ConvSpec::zeros(kWidth, kWidth, 3, 1, 1, 1, Activation::relu);
  x.res_b_ = ConvSpec::zeros(kWidth, kWidth, 3, 1, 1);
  numerics::DenseLayer l0{2 * kWidth, 2 * kWidth, std::vector<double>(4 * kWidth * kWidth), std::vector<double>(2 * kWidth)};
  numerics::DenseLayer l1{2 * kWidth, 1, std::vector<double>(2 * kWidth), std::vector<double>(1)};
  x.mlp_.layers = {l0, l1};
  return x;
}

XiPredictor XiPredictor::analytic(std::uint64_t seed)
{
  auto x = layout();
  auto rng = numerics::make_rng(seed, {numerics::label_key("ptam.xi")});
  numerics::fill_he(x.stem_, rng);
  numerics::fill_he(x.res_a_, rng);
  numerics::fill_he(x.res_b_, rng);
  for (auto & l : x.mlp_.layers) numerics::fill_he(l, rng);
  return x;
}

XiPredictor XiPredictor::from_archive(const numerics::WeightArchive & archive, const std::string & prefix)
{
  std::vector<std::string> names;
  for (const char * part : {".stem", ".res_a", ".res_b"}) {
    for (auto & n : numerics::conv_names(prefix + part)) names.push_back(n);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    names.push_back(prefix + ".mlp.fc" + std::to_string(i) + ".weight");
    names.push_back(prefix + ".mlp.fc" + std::to_string(i) + ".bias");
  }
  numerics::require_names(archive, names);
  auto x = layout();
  x.stem_ = numerics::fetch_conv(archive, prefix + ".stem", x.stem_);
  x.res_a_ = numerics::fetch_conv(archive, prefix + ".res_a", x.res_a_);
  x.res_b_ = numerics::fetch_conv(archive, prefix + ".res_b", x.res_b_);
  x.mlp_ = numerics::fetch_mlp(archive, prefix + ".mlp", x.mlp_);
  return x;
}

void XiPredictor::store(numerics::WeightArchive & archive, const std::string & prefix) const
{
  numerics::store_conv(archive, prefix + ".stem", stem_);
  numerics::store_conv(archive, prefix + ".res_a", res_a_);
  numerics::store_conv(archive, prefix + ".res_b", res_b_);
  numerics::store_mlp(archive, prefix + ".mlp", mlp_);
}

std::vector<double> XiPredictor::motion_descriptor(const Tensor3 & motion_diff) const
{
  if (motion_diff.channels() != 2) {
    throw ShapeError("xi predictor: motion difference must have 2 channels, got " + motion_diff.shape_string());
  }
  const Tensor3 x = numerics::conv2d(motion_diff, stem_);
  Tensor3 y = numerics::add(x, numerics::conv2d(numerics::conv2d(x, res_a_), res_b_));
  numerics::apply_relu(y);
  std::vector<double> f(kWidth, 0.0);
  const std::size_t plane = y.plane_size();
  for (std::size_t c = 0; c < kWidth; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += y.data()[c * plane + i];
    f[c] = acc / static_cast<double>(plane);
  }
  return f;
}

double XiPredictor::predict(const Tensor3 & motion_diff, const DelayContext & ctx) const
{
  const auto f_m = motion_descriptor(motion_diff);
  const auto code = sinusoidal_embedding(ctx.ratio(), kWidth);
  std::vector<double> input(f_m);
  for (std::size_t i = 0; i < kWidth; ++i) input.push_back(f_m[i] + code[i]);
  return std::max(0.0, numerics::mlp_forward(input, mlp_)[0]);
}

double predict_xi(
  const MotionField & stage1, const MotionField & stage2, const DelayContext & ctx,
  const XiPredictor * predictor)
{
  ctx.validate();
  const Tensor3 diff = motion_difference(stage1, stage2);
  if (ctx.mode == XiMode::oracle) return ctx.ratio();
  if (predictor == nullptr) {
    throw std::invalid_argument("predict_xi: learned mode needs a predictor");
  }
  return predictor->predict(diff, ctx);
}

// ---------------------------------------------------------------------- ptam

PtamWeights PtamWeights::analytic(std::uint64_t seed)
{
  PtamWeights w{
    {MotionEstimator::analytic(bev::kScaleChannels[0], numerics::derive_seed(seed, {0})),
     MotionEstimator::analytic(bev::kScaleChannels[1], numerics::derive_seed(seed, {1})),
     MotionEstimator::analytic(bev::kScaleChannels[2], numerics::derive_seed(seed, {2}))},
    {XiPredictor::analytic(numerics::derive_seed(seed, {0})),
     XiPredictor::analytic(numerics::derive_seed(seed, {1})),
     XiPredictor::analytic(numerics::derive_seed(seed, {2}))}};
  return w;
}

PtamWeights PtamWeights::from_archive(const numerics::WeightArchive & archive)
{
  auto load_motion = [&](std::size_t k) {
    return MotionEstimator::from_archive(archive, "ptam.motion.s" + std::to_string(k), bev::kScaleChannels[k]);
  };
  auto load_xi = [&](std::size_t k) {
    return XiPredictor::from_archive(archive, "ptam.xi.s" + std::to_string(k));
  };
  return {{load_motion(0), load_motion(1), load_motion(2)}, {load_xi(0), load_xi(1), load_xi(2)}};
}

void PtamWeights::store(numerics::WeightArchive & archive) const
{
  for (std::size_t k = 0; k < 3; ++k) {
    motion[k].store(archive, "ptam.motion.s" + std::to_string(k));
    xi[k].store(archive, "ptam.xi.s" + std::to_string(k));
  }
}

namespace
{

const MotionField & checked_field(const MotionField & f, const Tensor3 & scale, const char * what)
{
  f.validate();
  if (!f.displacement.same_plane(scale)) {
    throw ShapeError(
      std::string(what) + ": injected field " + f.displacement.shape_string() +
      " does not cover scale " + scale.shape_string());
  }
  return f;
}

}  // namespace

PtamResult ptam_stage1(
  const bev::MultiScaleFeatures & previous, const bev::MultiScaleFeatures & latest,
  const PtamWeights & weights, const PtamOptions & options)
{
  previous.validate();
  latest.validate();
  PtamResult r;
  for (std::size_t k = 0; k < 3; ++k) {
    numerics::require_same_shape(previous.scales[k], latest.scales[k], "ptam stage 1");
    r.stage1[k] = options.stage1_fields
                    ? checked_field((*options.stage1_fields)[k], latest.scales[k], "ptam stage 1")
                    : weights.motion[k].estimate(latest.scales[k], previous.scales[k]);
    const Tensor3 & source =
      options.stage1_source == Stage1Source::previous ? previous.scales[k] : latest.scales[k];
    r.intermediate.scales[k] = warp_features(source, r.stage1[k], 1.0);
    r.stage2[k] = MotionField::identity(latest.scales[k].height(), latest.scales[k].width());
  }
  return r;
}

void ptam_stage2(
  PtamResult & partial, const bev::MultiScaleFeatures & reference, const DelayContext & ctx,
  const PtamWeights & weights, const PtamOptions & options)
{
  ctx.validate();
  partial.intermediate.validate();
  reference.validate();
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor3 & inter = partial.intermediate.scales[k];
    numerics::require_same_shape(inter, reference.scales[k], "ptam stage 2");
    partial.stage2[k] = options.stage2_fields
                          ? checked_field((*options.stage2_fields)[k], inter, "ptam stage 2")
                          : weights.motion[k].estimate(inter, reference.scales[k]);
    partial.xi[k] = options.xi_override
                      ? *options.xi_override
                      : predict_xi(partial.stage1[k], partial.stage2[k], ctx, &weights.xi[k]);
    if (options.stage2_displacement == Stage2Displacement::scaled_stage2) {
      partial.compensated.scales[k] = warp_features(inter, partial.stage2[k], partial.xi[k]);
    } else {
      partial.compensated.scales[k] =
        warp_features(inter, partial.stage1[k].displacement, 1.0, partial.stage2[k].weight);
    }
  }
}

PtamResult ptam_align(
  const bev::MultiScaleFeatures & previous, const bev::MultiScaleFeatures & latest,
  const DelayContext & ctx, const PtamWeights & weights, const PtamOptions & options)
{
  auto r = ptam_stage1(previous, latest, weights, options);
  ptam_stage2(
    r, options.stage1_source == Stage1Source::previous ? previous : latest, ctx, weights, options);
  return r;
}

// ------------------------------------------------------------------- windows

WindowSets window_partition(std::size_t height, std::size_t width, std::size_t l)
{
  if (l == 0 || l > std::min(height, width)) {
    throw std::invalid_argument(
      "window_partition: window " + std::to_string(l) + " does not fit a " + std::to_string(height) +
      "x" + std::to_string(width) + " grid");
  }
  WindowSets s;
  s.size = l;
  for (std::size_t r = 0; r < height / l; ++r)
    for (std::size_t c = 0; c < width / l; ++c) s.primary.push_back({r * l, c * l});
  const std::size_t half = l / 2;
  for (std::size_t r = 0; r < (height - l) / l; ++r)
    for (std::size_t c = 0; c < (width - l) / l; ++c) s.offset.push_back({half + r * l, half + c * l});
  return s;
}

std::size_t scale_window(std::size_t l, const Tensor3 & t)
{
  return std::min({l, t.height(), t.width()});
}

namespace
{

struct WindowEval
{
  double loss = 0.0;
  double cosine = 0.0;
  bool degenerate = false;
};

// Per-position channel sums, then one cosine per window. Multiplications:
// 3C per position for the sums, one per position for the cosine share and one
// per position for the loss share, so (3C + 2) l^2 in total.
WindowEval evaluate_window(
  const Tensor3 & a, const Tensor3 & b, const Window & win, std::size_t l, OpCounts & ops,
  Tensor3 * grad, double grad_scale)
{
  const std::size_t cn = a.channels(), w = a.width(), plane = a.plane_size();
  const std::size_t n = l * l;
  std::vector<double> dot(n, 0.0), na(n, 0.0), nb(n, 0.0);
  const auto pa = a.data();
  const auto pb = b.data();
  for (std::size_t c = 0; c < cn; ++c) {
    for (std::size_t dy = 0; dy < l; ++dy) {
      const std::size_t base = c * plane + (win.row + dy) * w + win.col;
      for (std::size_t dx = 0; dx < l; ++dx) {
        const double x = pa[base + dx], y = pb[base + dx];
        const std::size_t p = dy * l + dx;
        dot[p] += x * y;
        na[p] += x * x;
        nb[p] += y * y;
      }
    }
  }
  ops.mul += 3 * cn * n;
  ops.add += 3 * (cn - 1) * n;

  double sa = 0.0, sb = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    sa += na[p];
    sb += nb[p];
  }
  ops.add += 2 * (n - 1);
  const double norm_a = std::sqrt(sa), norm_b = std::sqrt(sb);
  ops.sqrt += 2;

  WindowEval ev;
  double r = 0.0;
  if (norm_a > 0.0 && norm_b > 0.0) {
    r = (1.0 / norm_a) / norm_b;
    ops.div += 2;
  } else {
    ev.degenerate = true;
  }
  double cosine = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    dot[p] *= r;  // share of the cosine held by position p
    cosine += dot[p];
  }
  ops.mul += n;
  ops.add += n - 1;
  ev.cosine = cosine;

  const double gap = 1.0 - cosine;
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t p = 0; p < n; ++p) loss += gap * (inv_n - dot[p]);
  ops.mul += n;
  ops.add += 2 * n;
  ops.div += 1;
  ev.loss = loss;

  if (grad != nullptr && !ev.degenerate) {
    // d/da (1 - cos)^2 = 2 (cos - 1) (b / (|a||b|) - cos a / |a|^2)
    const double outer = 2.0 * (cosine - 1.0) * grad_scale;
    const double inv_a2 = 1.0 / (norm_a * norm_a);
    auto g = grad->data();
    for (std::size_t c = 0; c < cn; ++c) {
      for (std::size_t dy = 0; dy < l; ++dy) {
        const std::size_t base = c * plane + (win.row + dy) * w + win.col;
        for (std::size_t dx = 0; dx < l; ++dx) {
          const double x = pa[base + dx], y = pb[base + dx];
          g[base + dx] += outer * (y * r - cosine * x * inv_a2);
        }
      }
    }
  }
  return ev;
}

}  // namespace

WindowLoss temporal_loss(const Tensor3 & prediction, const Tensor3 & target, std::size_t l)
{
  numerics::require_same_shape(prediction, target, "temporal_loss");
  const auto sets = window_partition(prediction.height(), prediction.width(), l);
  WindowLoss out;
  out.grad = Tensor3(prediction.channels(), prediction.height(), prediction.width());
  out.windows = sets.primary.size() + sets.offset.size();
  const double scale = 1.0 / static_cast<double>(out.windows);
  double acc = 0.0;
  for (const auto * set : {&sets.primary, &sets.offset}) {
    for (const auto & win : *set) {
      const auto ev = evaluate_window(prediction, target, win, l, out.ops, &out.grad, scale);
      if (ev.degenerate) out.degenerate.push_back(win);
      acc += ev.loss;
    }
  }
  out.loss = acc * scale;
  return out;
}

TemporalLossTotal temporal_loss_total(
  const bev::MultiScaleFeatures & intermediate, const bev::MultiScaleFeatures & intermediate_target,
  const bev::MultiScaleFeatures & compensated, const bev::MultiScaleFeatures & compensated_target,
  std::size_t l)
{
  TemporalLossTotal t;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t lk = scale_window(l, intermediate.scales[k]);
    t.intermediate[k] = temporal_loss(intermediate.scales[k], intermediate_target.scales[k], lk);
    t.final[k] = temporal_loss(compensated.scales[k], compensated_target.scales[k], lk);
    t.total += t.intermediate[k].loss + t.final[k].loss;
  }
  return t;
}

double mean_window_cosine(const Tensor3 & a, const Tensor3 & b, std::size_t l)
{
  numerics::require_same_shape(a, b, "mean_window_cosine");
  const std::size_t lk = scale_window(l, a);
  const auto sets = window_partition(a.height(), a.width(), lk);
  OpCounts ops;
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto * set : {&sets.primary, &sets.offset}) {
    for (const auto & win : *set) {
      acc += evaluate_window(a, b, win, lk, ops, nullptr, 0.0).cosine;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace cpalign::temporal
