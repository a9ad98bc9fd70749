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

#include "cpalign/bev/bev.hpp"

#include "cpalign/numerics/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <random>
#include <string>
#include <vector>

namespace cpalign::bev
{

namespace
{

std::size_t tile_count(double lo, double hi, double cell, const char * axis)
{
  const double n = (hi - lo) / cell;
  const double rounded = std::round(n);
  if (!(cell > 0.0) || rounded < 1.0 || std::abs(n - rounded) > 1e-6) {
    throw std::invalid_argument(
      std::string("bev spec: ") + axis + " extent is not a whole number of cells");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

std::size_t BevSpec::width() const { return tile_count(x_min, x_max, cell, "x"); }
std::size_t BevSpec::height() const { return tile_count(y_min, y_max, cell, "y"); }

void BevSpec::validate() const
{
  if (width() % 4 != 0 || height() % 4 != 0) {
    throw std::invalid_argument(
      "bev spec: grid " + std::to_string(height()) + "x" + std::to_string(width()) +
      " must have both sides divisible by 4");
  }
}

Tensor3 pillar_encode(std::span<const pointcloud::Point> cloud, const BevSpec & spec)
{
  const std::size_t w = spec.width();
  const std::size_t h = spec.height();
  const std::size_t cells = w * h;

  struct Acc
  {
    std::size_t count = 0;
    double sum_z = 0.0;
    double max_z = -std::numeric_limits<double>::infinity();
    double min_z = std::numeric_limits<double>::infinity();
    double sum_intensity = 0.0;
    double sum_offset = 0.0;
  };
  std::vector<Acc> acc(cells);

  for (const auto & p : cloud) {
    const double fx = std::floor((p.x - spec.x_min) / spec.cell);
    const double fy = std::floor((p.y - spec.y_min) / spec.cell);
    if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(w) || fy >= static_cast<double>(h)) {
      continue;
    }
    const auto col = static_cast<std::size_t>(fx);
    const auto row = static_cast<std::size_t>(fy);
    auto & a = acc[row * w + col];
    ++a.count;
    a.sum_z += p.z;
    a.max_z = std::max(a.max_z, p.z);
    a.min_z = std::min(a.min_z, p.z);
    a.sum_intensity += p.intensity;
    a.sum_offset += std::hypot(p.x - spec.cell_center_x(col), p.y - spec.cell_center_y(row));
  }

  Tensor3 out(kPillarChannels, h, w);
  for (std::size_t i = 0; i < cells; ++i) {
    const auto & a = acc[i];
    if (a.count == 0) continue;
    const double n = static_cast<double>(a.count);
    const std::size_t row = i / w;
    const std::size_t col = i % w;
    out.at(kOccupancy, row, col) = 1.0;
    out.at(kLogCount, row, col) = std::log1p(n);
    out.at(kMeanZ, row, col) = a.sum_z / n;
    out.at(kMaxZ, row, col) = a.max_z;
    out.at(kMinZ, row, col) = a.min_z;
    out.at(kZSpread, row, col) = a.max_z - a.min_z;
    out.at(kMeanIntensity, row, col) = a.sum_intensity / n;
    out.at(kMeanPlanarOffset, row, col) = a.sum_offset / n;
  }
  return out;
}

void MultiScaleFeatures::validate() const
{
  for (std::size_t s = 0; s < 3; ++s) {
    if (scales[s].channels() != kScaleChannels[s]) {
      throw numerics::ShapeError(
        "multi-scale features: scale " + std::to_string(s) + " has " +
        std::to_string(scales[s].channels()) + " channels, expected " +
        std::to_string(kScaleChannels[s]));
    }
  }
  for (std::size_t s = 1; s < 3; ++s) {
    if (scales[s].height() * 2 != scales[s - 1].height() ||
        scales[s].width() * 2 != scales[s - 1].width()) {
      throw numerics::ShapeError(
        "multi-scale features: scale " + std::to_string(s) + " (" + scales[s].shape_string() +
        ") is not half of scale " + std::to_string(s - 1) + " (" + scales[s - 1].shape_string() +
        ")");
    }
  }
}

std::array<numerics::ConvSpec, 3> Backbone::layout()
{
  using numerics::Activation;
  using numerics::ConvSpec;
  return {
    ConvSpec::zeros(kScaleChannels[0], kPillarChannels, 3, 1, 1, 1, Activation::relu),
    ConvSpec::zeros(kScaleChannels[1], kScaleChannels[0], 3, 2, 1, 1, Activation::relu),
    ConvSpec::zeros(kScaleChannels[2], kScaleChannels[1], 3, 2, 1, 1, Activation::relu),
  };
}

Backbone Backbone::analytic(std::uint64_t seed)
{
  Backbone b;
  b.stages_ = layout();
  for (std::size_t s = 0; s < 3; ++s) {
    auto & conv = b.stages_[s];
    auto rng = numerics::make_rng(seed, {numerics::label_key("backbone"), s});
    numerics::fill_he(conv, rng);
    for (std::size_t i = 0; i < conv.in_channels; ++i)
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) conv.weight(kOccupancyCarrier, i, ky, kx) = 0.0;
    conv.weight(kOccupancyCarrier, kOccupancyCarrier, 1, 1) = 1.0;
  }
  return b;
}

namespace
{

std::string stage_prefix(const char * root, const char * kind, std::size_t i)
{
  return std::string(root) + "." + kind + std::to_string(i);
}

}  // namespace

Backbone Backbone::from_archive(const numerics::WeightArchive & archive)
{
  std::vector<std::string> names;
  for (std::size_t s = 0; s < 3; ++s) {
    for (auto & n : numerics::conv_names(stage_prefix("backbone", "stage", s))) names.push_back(n);
  }
  numerics::require_names(archive, names);
  Backbone b;
  const auto shapes = layout();
  for (std::size_t s = 0; s < 3; ++s) {
    b.stages_[s] = numerics::fetch_conv(archive, stage_prefix("backbone", "stage", s), shapes[s]);
  }
  return b;
}

void Backbone::store(numerics::WeightArchive & archive) const
{
  for (std::size_t s = 0; s < 3; ++s) {
    numerics::store_conv(archive, stage_prefix("backbone", "stage", s), stages_[s]);
  }
}

MultiScaleFeatures Backbone::forward(const Tensor3 & pillars) const
{
  if (pillars.height() % 4 != 0 || pillars.width() % 4 != 0) {
    throw numerics::ShapeError(
      "backbone: pillar grid " + pillars.shape_string() + " must have H and W divisible by 4");
  }
  MultiScaleFeatures ms;
  ms.scales[0] = numerics::conv2d(pillars, stages_[0]);
  ms.scales[1] = numerics::conv2d(ms.scales[0], stages_[1]);
  ms.scales[2] = numerics::conv2d(ms.scales[1], stages_[2]);
  return ms;
}

std::array<numerics::ConvSpec, 3> BevProjector::layout()
{
  using numerics::ConvSpec;
  // Transposed layout [in][out][k][k]; sizes match ConvSpec::zeros for groups = 1.
  return {
    ConvSpec::zeros(kBevChannelsPerScale, kScaleChannels[0], 3, 1, 1),
    ConvSpec::zeros(kBevChannelsPerScale, kScaleChannels[1], 2, 2, 0),
    ConvSpec::zeros(kBevChannelsPerScale, kScaleChannels[2], 4, 4, 0),
  };
}

BevProjector BevProjector::analytic(std::uint64_t seed)
{
  BevProjector p;
  p.layers_ = layout();
  for (std::size_t s = 0; s < 3; ++s) {
    auto & layer = p.layers_[s];
    auto rng = numerics::make_rng(seed, {numerics::label_key("bevproj"), s});
    const double taps_per_output =
      static_cast<double>(layer.kernel_h * layer.kernel_w) / static_cast<double>(layer.stride * layer.stride);
    std::normal_distribution<double> dist(
      0.0, std::sqrt(2.0 / (static_cast<double>(layer.in_channels) * taps_per_output)));
    for (double & w : layer.weights) w = static_cast<float>(dist(rng));
  }
  // Full-resolution carrier: BEV channel 0 copies large-scale channel 0.
  auto & first = p.layers_[0];
  const std::size_t taps = first.kernel_h * first.kernel_w;
  for (std::size_t i = 0; i < first.in_channels; ++i) {
    for (std::size_t t = 0; t < taps; ++t) {
      first.weights[(i * first.out_channels + kOccupancyCarrier) * taps + t] = 0.0;
    }
  }
  first.weights[(kOccupancyCarrier * first.out_channels + kOccupancyCarrier) * taps + taps / 2] = 1.0;
  return p;
}

BevProjector BevProjector::from_archive(const numerics::WeightArchive & archive)
{
  std::vector<std::string> names;
  for (std::size_t s = 0; s < 3; ++s) {
    for (auto & n : numerics::conv_names(stage_prefix("bevproj", "deconv", s))) names.push_back(n);
  }
  numerics::require_names(archive, names);
  BevProjector p;
  const auto shapes = layout();
  for (std::size_t s = 0; s < 3; ++s) {
    p.layers_[s] =
      numerics::fetch_transposed_conv(archive, stage_prefix("bevproj", "deconv", s), shapes[s]);
  }
  return p;
}

void BevProjector::store(numerics::WeightArchive & archive) const
{
  for (std::size_t s = 0; s < 3; ++s) {
    numerics::store_transposed_conv(archive, stage_prefix("bevproj", "deconv", s), layers_[s]);
  }
}

Tensor3 BevProjector::project(const MultiScaleFeatures & ms) const
{
  ms.validate();
  std::array<Tensor3, 3> up;
  for (std::size_t s = 0; s < 3; ++s) {
    up[s] = numerics::transposed_conv2d(ms.scales[s], layers_[s]);
  }
  for (std::size_t s = 1; s < 3; ++s) {
    if (!up[s].same_plane(up[0])) {
      throw numerics::ShapeError(
        "bev_project: scale " + std::to_string(s) + " lifted to " + up[s].shape_string() +
        ", expected plane of " + up[0].shape_string());
    }
  }
  return numerics::concat_channels(up);
}

MultiScaleFeatures featurize(
  std::span<const pointcloud::Point> cloud, const BevSpec & spec, const Backbone & backbone)
{
  return backbone.forward(pillar_encode(cloud, spec));
}

}  // namespace cpalign::bev
