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

#include "cpalign/domain/domain.hpp"

#include "cpalign/numerics/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cpalign::domain
{

using numerics::ConvSpec;
using numerics::ShapeError;

void Pose2::validate() const
{
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(yaw)) {
    throw std::invalid_argument("pose: non-finite component");
  }
}

pointcloud::Vec2 Pose2::to_world(pointcloud::Vec2 local) const
{
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {x + c * local.x - s * local.y, y + s * local.x + c * local.y};
}

pointcloud::Vec2 Pose2::to_local(pointcloud::Vec2 world) const
{
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = world.x - x, dy = world.y - y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

void validate_observability(const Tensor3 & m, const char * what)
{
  if (m.channels() != 1) {
    throw ShapeError(std::string(what) + ": observability map must have 1 channel, got " + m.shape_string());
  }
  for (double v : m.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw numerics::NumericError(
        std::string(what) + ": observability value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

// ---------------------------------------------------------------- foreground

ForegroundSpec ForegroundSpec::zeros(std::size_t in_channels)
{
  if (in_channels < 2) {
    throw ShapeError("foreground estimator needs at least 2 input channels");
  }
  const std::size_t hidden = in_channels / 2;
  ForegroundSpec s;
  s.hidden = ConvSpec::zeros(hidden, in_channels, 3, 1, 1);
  s.affine_scale.assign(hidden, 1.0);
  s.affine_shift.assign(hidden, 0.0);
  s.head = ConvSpec::zeros(1, hidden, 1);
  return s;
}

void ForegroundSpec::validate() const
{
  hidden.validate();
  head.validate();
  if (hidden.kernel_h != 3 || hidden.kernel_w != 3 || hidden.padding != 1 || hidden.stride != 1) {
    throw ShapeError("foreground estimator: hidden conv must be 3x3, stride 1, padding 1");
  }
  if (head.kernel_h != 1 || head.kernel_w != 1 || head.out_channels != 1) {
    throw ShapeError("foreground estimator: head must be a 1x1 conv to one channel");
  }
  if (head.in_channels != hidden.out_channels || affine_scale.size() != hidden.out_channels ||
      affine_shift.size() != hidden.out_channels) {
    throw ShapeError(
      "foreground estimator: hidden width " + std::to_string(hidden.out_channels) +
      " disagrees with affine (" + std::to_string(affine_scale.size()) + ", " +
      std::to_string(affine_shift.size()) + ") or head input " + std::to_string(head.in_channels));
  }
}

ForegroundEstimator::ForegroundEstimator(ForegroundSpec spec) : spec_(std::move(spec))
{
  spec_.validate();
  spec_.hidden.activation = numerics::Activation::none;
  spec_.head.activation = numerics::Activation::sigmoid;
  prune();
}

void ForegroundEstimator::prune()
{
  std::vector<std::size_t> keep;
  for (std::size_t h = 0; h < spec_.head.in_channels; ++h) {
    if (spec_.head.weights[h] != 0.0) keep.push_back(h);
  }
  const std::size_t per_out = spec_.hidden.in_channels * 9;
  active_.hidden = ConvSpec::zeros(keep.size(), spec_.hidden.in_channels, 3, 1, 1);
  active_.head = ConvSpec::zeros(1, keep.size(), 1, 1, 0, 1, numerics::Activation::sigmoid);
  active_.head.bias = spec_.head.bias;
  active_.affine_scale.clear();
  active_.affine_shift.clear();
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t h = keep[k];
    std::copy_n(
      spec_.hidden.weights.begin() + static_cast<std::ptrdiff_t>(h * per_out), per_out,
      active_.hidden.weights.begin() + static_cast<std::ptrdiff_t>(k * per_out));
    active_.hidden.bias[k] = spec_.hidden.bias[h];
    active_.affine_scale.push_back(spec_.affine_scale[h]);
    active_.affine_shift.push_back(spec_.affine_shift[h]);
    active_.head.weights[k] = spec_.head.weights[h];
  }
}

ForegroundEstimator ForegroundEstimator::analytic(std::size_t in_channels, std::uint64_t seed)
{
  auto s = ForegroundSpec::zeros(in_channels);
  auto rng = numerics::make_rng(seed, {numerics::label_key("fg.hidden")});
  numerics::fill_he(s.hidden, rng);
  for (std::size_t i = 0; i < in_channels; ++i)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) s.hidden.weight(bev::kOccupancyCarrier, i, ky, kx) = 0.0;
  s.hidden.weight(bev::kOccupancyCarrier, bev::kOccupancyCarrier, 1, 1) = 1.0;
  s.head.weights[bev::kOccupancyCarrier] = 12.0;
  s.head.bias[0] = -6.0;
  return ForegroundEstimator(std::move(s));
}

ForegroundEstimator ForegroundEstimator::from_archive(
  const numerics::WeightArchive & archive, std::size_t in_channels)
{
  const std::vector<std::string> names = {"fg.hidden.weight", "fg.hidden.bias", "fg.affine.scale",
                                          "fg.affine.shift", "fg.head.weight", "fg.head.bias"};
  numerics::require_names(archive, names);
  auto s = ForegroundSpec::zeros(in_channels);
  s.hidden = numerics::fetch_conv(archive, "fg.hidden", s.hidden);
  s.affine_scale = numerics::fetch_vector(archive, "fg.affine.scale", s.affine_scale.size());
  s.affine_shift = numerics::fetch_vector(archive, "fg.affine.shift", s.affine_shift.size());
  s.head = numerics::fetch_conv(archive, "fg.head", s.head);
  return ForegroundEstimator(std::move(s));
}

void ForegroundEstimator::store(numerics::WeightArchive & archive) const
{
  numerics::store_conv(archive, "fg.hidden", spec_.hidden);
  numerics::store_vector(archive, "fg.affine.scale", spec_.affine_scale);
  numerics::store_vector(archive, "fg.affine.shift", spec_.affine_shift);
  numerics::store_conv(archive, "fg.head", spec_.head);
}

Tensor3 ForegroundEstimator::estimate(const Tensor3 & features) const
{
  if (features.channels() != in_channels()) {
    throw ShapeError(
      "foreground estimator expects " + std::to_string(in_channels()) + " channels, got " +
      features.shape_string());
  }
  if (active_.hidden.out_channels == 0) {
    return Tensor3(1, features.height(), features.width(), numerics::sigmoid(active_.head.bias[0]));
  }
  Tensor3 hidden = numerics::conv2d(features, active_.hidden);
  const std::size_t plane = hidden.plane_size();
  auto d = hidden.data();
  for (std::size_t c = 0; c < hidden.channels(); ++c) {
    const double a = active_.affine_scale[c], b = active_.affine_shift[c];
    for (std::size_t i = 0; i < plane; ++i) {
      double & v = d[c * plane + i];
      v = std::max(0.0, a * v + b);
    }
  }
  return numerics::conv2d(hidden, active_.head);
}

// ----------------------------------------------------------------- transform

EgoResampler EgoResampler::build(const Pose2 & collab, const Pose2 & ego, const bev::BevSpec & spec)
{
  collab.validate();
  ego.validate();
  constexpr double kTol = 1e-6;
  const std::size_t h = spec.height(), w = spec.width();
  EgoResampler r;
  r.plan.height = h;
  r.plan.width = w;
  r.plan.taps.resize(h * w);
  r.valid = Tensor3(1, h, w);
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      const auto world = ego.to_world({spec.cell_center_x(col), spec.cell_center_y(row)});
      const auto src = collab.to_local(world);
      double sc = spec.to_col(src.x);
      double sr = spec.to_row(src.y);
      const double hi_c = static_cast<double>(w - 1), hi_r = static_cast<double>(h - 1);
      if (sc < -kTol || sr < -kTol || sc > hi_c + kTol || sr > hi_r + kTol) continue;
      // Snap tolerance hits onto the grid so boundary cells keep full weight.
      sc = std::clamp(sc, 0.0, hi_c);
      sr = std::clamp(sr, 0.0, hi_r);
      if (std::abs(sc - std::round(sc)) < kTol) sc = std::round(sc);
      if (std::abs(sr - std::round(sr)) < kTol) sr = std::round(sr);
      r.plan.taps[row * w + col] = numerics::bilinear_taps(h, w, sr, sc);
      r.valid.at(0, row, col) = 1.0;
    }
  }
  return r;
}

Transformed EgoResampler::apply(const Tensor3 & collab_grid) const
{
  return {numerics::apply_plan(collab_grid, plan), valid};
}

Transformed transform_to_ego(
  const Tensor3 & collab_grid, const Pose2 & collab, const Pose2 & ego, const bev::BevSpec & spec)
{
  return EgoResampler::build(collab, ego, spec).apply(collab_grid);
}

Tensor3 complete_voids(const Tensor3 & transformed, const Tensor3 & valid, const Tensor3 & ego)
{
  numerics::require_same_shape(transformed, ego, "complete_voids");
  if (valid.channels() != 1 || !valid.same_plane(ego)) {
    throw ShapeError(
      "complete_voids: mask " + valid.shape_string() + " does not cover " + ego.shape_string());
  }
  Tensor3 out = ego;
  const std::size_t plane = ego.plane_size();
  const auto v = valid.data();
  const auto t = transformed.data();
  auto o = out.data();
  for (std::size_t c = 0; c < ego.channels(); ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (v[i] != 0.0) o[c * plane + i] = t[c * plane + i];
    }
  }
  return out;
}

std::pair<Tensor3, Tensor3> complete_voids(
  const Transformed & features, const Transformed & observability, const Tensor3 & ego_features,
  const Tensor3 & ego_observability)
{
  return {
    complete_voids(features.grid, features.valid, ego_features),
    complete_voids(observability.grid, observability.valid, ego_observability)};
}

Tensor3 observability_weighting(const Tensor3 & m_ego, const Tensor3 & m_collab)
{
  numerics::require_same_shape(m_ego, m_collab, "observability_weighting");
  Tensor3 w(m_ego.channels(), m_ego.height(), m_ego.width());
  const auto a = m_ego.data();
  const auto b = m_collab.data();
  auto out = w.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::array<double, 2> pair = {a[i], b[i]};
    const auto p = numerics::softmax(pair);
    out[i] = std::min(p[0], p[1]);
  }
  return w;
}

// ------------------------------------------------------------- discriminator

DiscriminatorSpec DiscriminatorSpec::zeros(std::size_t in_channels)
{
  return {
    ConvSpec::zeros(kHiddenChannels, in_channels, 1, 1, 0, 1, numerics::Activation::relu),
    ConvSpec::zeros(1, kHiddenChannels, 1)};
}

void DiscriminatorSpec::validate() const
{
  hidden.validate();
  head.validate();
  if (hidden.kernel_h != 1 || hidden.kernel_w != 1 || head.kernel_h != 1 || head.kernel_w != 1) {
    throw ShapeError("discriminator: both layers must use 1x1 kernels");
  }
  if (head.in_channels != hidden.out_channels || head.out_channels != 1) {
    throw ShapeError(
      "discriminator: head must map " + std::to_string(hidden.out_channels) + " channels to 1");
  }
}

Discriminator::Discriminator(DiscriminatorSpec spec) : spec_(std::move(spec))
{
  spec_.validate();
  spec_.hidden.activation = numerics::Activation::relu;
  spec_.head.activation = numerics::Activation::none;
}

Discriminator Discriminator::analytic(std::size_t in_channels, std::uint64_t seed)
{
  auto s = DiscriminatorSpec::zeros(in_channels);
  auto rng = numerics::make_rng(seed, {numerics::label_key("disc")});
  numerics::fill_he(s.hidden, rng);
  numerics::fill_he(s.head, rng);
  return Discriminator(std::move(s));
}

Discriminator Discriminator::from_archive(
  const numerics::WeightArchive & archive, std::size_t in_channels)
{
  const std::vector<std::string> names = {
    "disc.hidden.weight", "disc.hidden.bias", "disc.head.weight", "disc.head.bias"};
  numerics::require_names(archive, names);
  auto s = DiscriminatorSpec::zeros(in_channels);
  s.hidden = numerics::fetch_conv(archive, "disc.hidden", s.hidden);
  s.head = numerics::fetch_conv(archive, "disc.head", s.head);
  return Discriminator(std::move(s));
}

void Discriminator::store(numerics::WeightArchive & archive) const
{
  numerics::store_conv(archive, "disc.hidden", spec_.hidden);
  numerics::store_conv(archive, "disc.head", spec_.head);
}

Tensor3 Discriminator::forward(const Tensor3 & features) const
{
  if (features.channels() != spec_.hidden.in_channels) {
    throw ShapeError(
      "discriminator expects " + std::to_string(spec_.hidden.in_channels) + " channels, got " +
      features.shape_string());
  }
  return numerics::conv2d(numerics::conv2d(features, spec_.hidden), spec_.head);
}

// ---------------------------------------------------------------------- loss

namespace
{

double softplus(double x)
{
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

DomainLoss domain_loss_and_grads(const Tensor3 & logits, int label, const Tensor3 & weights)
{
  if (label != 0 && label != 1) {
    throw std::invalid_argument("domain loss: label must be 0 or 1, got " + std::to_string(label));
  }
  numerics::require_same_shape(logits, weights, "domain loss");
  numerics::require_finite(logits, "domain loss logits");
  double total_w = 0.0;
  for (double w : weights.values()) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("domain loss: weights must be finite and non-negative");
    }
    total_w += w;
  }
  if (!(total_w > 0.0)) {
    throw std::invalid_argument("domain loss: weights sum to zero");
  }
  const double z = label;
  DomainLoss out;
  out.grad_logits = Tensor3(logits.channels(), logits.height(), logits.width());
  const auto x = logits.data();
  const auto w = weights.data();
  auto g = out.grad_logits.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += w[i] * (softplus(x[i]) - z * x[i]);
    g[i] = w[i] * (numerics::sigmoid(x[i]) - z) / total_w;
  }
  out.loss = acc / total_w;
  out.grad_feature_path = numerics::scale(out.grad_logits, kGradientReversalScale);
  return out;
}

// ----------------------------------------------------------------------- pgm

void write_pgm(std::ostream & out, const Tensor3 & map)
{
  if (map.channels() != 1) {
    throw ShapeError("write_pgm: expected a single-channel map, got " + map.shape_string());
  }
  out << "P5\n" << map.width() << " " << map.height() << "\n255\n";
  for (std::size_t r = map.height(); r-- > 0;) {
    for (std::size_t c = 0; c < map.width(); ++c) {
      const double v = std::clamp(map.at(0, r, c), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

void save_pgm(const std::filesystem::path & path, const Tensor3 & map)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pgm(f, map);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace cpalign::domain
