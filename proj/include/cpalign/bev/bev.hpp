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

#ifndef CPALIGN__BEV__BEV_HPP_
#define CPALIGN__BEV__BEV_HPP_

#include "cpalign/numerics/conv.hpp"
#include "cpalign/numerics/tensor.hpp"
#include "cpalign/numerics/weights_io.hpp"
#include "cpalign/pointcloud/pointcloud.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace cpalign::bev
{

using numerics::Tensor3;

/// Grid geometry in an agent's frame: column index grows with x, row index
/// with y. Cell (0, 0) has its lower corner at (x_min, y_min).
struct BevSpec
{
  double cell = 0.4;
  double x_min = -12.8;
  double x_max = 12.8;
  double y_min = -12.8;
  double y_max = 12.8;

  std::size_t width() const;
  std::size_t height() const;

  /// Throws std::invalid_argument unless extents tile evenly and H, W are multiples of 4.
  void validate() const;

  double cell_center_x(std::size_t col) const { return x_min + (static_cast<double>(col) + 0.5) * cell; }
  double cell_center_y(std::size_t row) const { return y_min + (static_cast<double>(row) + 0.5) * cell; }

  /// Continuous grid coordinates where integer values are cell centers.
  double to_col(double x) const { return (x - x_min) / cell - 0.5; }
  double to_row(double y) const { return (y - y_min) / cell - 0.5; }
};

inline constexpr std::size_t kPillarChannels = 8;

enum PillarChannel : std::size_t {
  kOccupancy = 0,
  kLogCount,
  kMeanZ,
  kMaxZ,
  kMinZ,
  kZSpread,
  kMeanIntensity,
  kMeanPlanarOffset,
};

/// Per-cell statistics of the points falling in each pillar; empty cells are zero.
Tensor3 pillar_encode(std::span<const pointcloud::Point> cloud, const BevSpec & spec);

inline constexpr std::array<std::size_t, 3> kScaleChannels = {64, 128, 256};
inline constexpr std::size_t kBevChannelsPerScale = 128;
inline constexpr std::size_t kBevChannels = 3 * kBevChannelsPerScale;

/// Backbone outputs: large 64 x H x W, middle 128 x H/2 x W/2, small 256 x H/4 x W/4.
struct MultiScaleFeatures
{
  std::array<Tensor3, 3> scales;

  const Tensor3 & large() const { return scales[0]; }
  const Tensor3 & middle() const { return scales[1]; }
  const Tensor3 & small() const { return scales[2]; }

  /// Throws numerics::ShapeError when channel counts or spatial halving are off.
  void validate() const;
};

// Channel 0 of every analytic layer is a pass-through of pillar occupancy, so
// an untrained stack still carries a usable object footprint downstream.
inline constexpr std::size_t kOccupancyCarrier = 0;

/// Three conv stages (stride 1, 2, 2) producing 64/128/256 channels.
class Backbone
{
public:
  /// Frozen He-style weights derived from `seed`.
  static Backbone analytic(std::uint64_t seed);
  /// Loads "backbone.stage{0,1,2}.*"; throws listing any absent names.
  static Backbone from_archive(const numerics::WeightArchive & archive);

  void store(numerics::WeightArchive & archive) const;
  MultiScaleFeatures forward(const Tensor3 & pillars) const;

  const std::array<numerics::ConvSpec, 3> & stages() const { return stages_; }
  std::array<numerics::ConvSpec, 3> & stages() { return stages_; }

  static std::array<numerics::ConvSpec, 3> layout();

private:
  std::array<numerics::ConvSpec, 3> stages_;
};

/// Transposed convolutions (strides 1, 2, 4) lifting each scale to 128 x H x W.
class BevProjector
{
public:
  static BevProjector analytic(std::uint64_t seed);
  /// Loads "bevproj.deconv{0,1,2}.*".
  static BevProjector from_archive(const numerics::WeightArchive & archive);

  void store(numerics::WeightArchive & archive) const;

  /// Concatenation [large, middle, small] -> 384 x H x W. Linear in `ms`.
  Tensor3 project(const MultiScaleFeatures & ms) const;

  const std::array<numerics::ConvSpec, 3> & layers() const { return layers_; }
  std::array<numerics::ConvSpec, 3> & layers() { return layers_; }

  static std::array<numerics::ConvSpec, 3> layout();

private:
  std::array<numerics::ConvSpec, 3> layers_;
};

/// Convenience: pillar_encode -> backbone.
MultiScaleFeatures featurize(
  std::span<const pointcloud::Point> cloud, const BevSpec & spec, const Backbone & backbone);

}  // namespace cpalign::bev

#endif  // CPALIGN__BEV__BEV_HPP_
