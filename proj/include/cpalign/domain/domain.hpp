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

#ifndef CPALIGN__DOMAIN__DOMAIN_HPP_
#define CPALIGN__DOMAIN__DOMAIN_HPP_

#include "cpalign/bev/bev.hpp"
#include "cpalign/numerics/conv.hpp"
#include "cpalign/numerics/sampling.hpp"
#include "cpalign/numerics/tensor.hpp"
#include "cpalign/numerics/weights_io.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <utility>
#include <vector>

namespace cpalign::domain
{

using numerics::Tensor3;

/// SE(2) pose of an agent in the world frame.
struct Pose2
{
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  /// Throws std::invalid_argument on non-finite fields.
  void validate() const;
  /// Agent frame -> world frame.
  pointcloud::Vec2 to_world(pointcloud::Vec2 local) const;
  /// World frame -> agent frame.
  pointcloud::Vec2 to_local(pointcloud::Vec2 world) const;

  friend bool operator==(const Pose2 &, const Pose2 &) = default;
};

/// Throws numerics::NumericError unless `m` is 1 x H x W with entries in [0, 1].
void validate_observability(const Tensor3 & m, const char * what);

/// Frozen parameters of the foreground estimator: 3x3 conv halving channels,
/// per-channel affine, relu, then 1x1 conv to one sigmoid channel.
struct ForegroundSpec
{
  numerics::ConvSpec hidden;
  std::vector<double> affine_scale;
  std::vector<double> affine_shift;
  numerics::ConvSpec head;

  /// Zero weights for `in_channels` inputs; affine scale 1, shift 0.
  static ForegroundSpec zeros(std::size_t in_channels);
  void validate() const;
};

class ForegroundEstimator
{
public:
  explicit ForegroundEstimator(ForegroundSpec spec);

  /// Seeded hidden weights; the head reads only the occupancy carrier, giving
  /// roughly sigmoid(12 (occupancy - 0.5)).
  static ForegroundEstimator analytic(std::size_t in_channels, std::uint64_t seed);
  /// Loads "fg.hidden.*", "fg.affine.scale", "fg.affine.shift", "fg.head.*".
  static ForegroundEstimator from_archive(const numerics::WeightArchive & archive, std::size_t in_channels);
  void store(numerics::WeightArchive & archive) const;

  /// 1 x H x W map in (0, 1). Throws ShapeError on channel mismatch.
  Tensor3 estimate(const Tensor3 & features) const;

  const ForegroundSpec & spec() const { return spec_; }
  std::size_t in_channels() const { return spec_.hidden.in_channels; }

private:
  void prune();

  ForegroundSpec spec_;
  // Hidden channels whose head weight is zero cannot reach the output, so the
  // forward pass evaluates this reduced copy. Results are identical.
  ForegroundSpec active_;
};

/// Result of mapping a collaborator grid into the ego grid.
struct Transformed
{
  Tensor3 grid;
  Tensor3 valid;  // 1 x H x W of {0, 1}
};

/// Inverse map: ego cell center -> world -> collaborator grid coordinates.
/// Bilinear taps plus the in-bounds mask, reusable across grids.
struct EgoResampler
{
  numerics::SamplingPlan plan;
  Tensor3 valid;

  static EgoResampler build(const Pose2 & collab, const Pose2 & ego, const bev::BevSpec & spec);
  Transformed apply(const Tensor3 & collab_grid) const;
};

Transformed transform_to_ego(
  const Tensor3 & collab_grid, const Pose2 & collab, const Pose2 & ego, const bev::BevSpec & spec);

/// out = V * transformed + (1 - V) * ego, cell by cell.
Tensor3 complete_voids(const Tensor3 & transformed, const Tensor3 & valid, const Tensor3 & ego);

/// Applies complete_voids to a feature grid and its observability map together.
std::pair<Tensor3, Tensor3> complete_voids(
  const Transformed & features, const Transformed & observability, const Tensor3 & ego_features,
  const Tensor3 & ego_observability);

/// Per cell: min of softmax([m_i, m_j]). Entries lie in (0, 0.5].
Tensor3 observability_weighting(const Tensor3 & m_ego, const Tensor3 & m_collab);

/// Two 1x1 convs: C -> 256 with relu, then 256 -> 1 logit.
struct DiscriminatorSpec
{
  numerics::ConvSpec hidden;
  numerics::ConvSpec head;

  static constexpr std::size_t kHiddenChannels = 256;
  static DiscriminatorSpec zeros(std::size_t in_channels);
  /// Throws ShapeError unless both kernels are 1x1 and the channels chain.
  void validate() const;
};

class Discriminator
{
public:
  explicit Discriminator(DiscriminatorSpec spec);
  static Discriminator analytic(std::size_t in_channels, std::uint64_t seed);
  /// Loads "disc.hidden.*" and "disc.head.*".
  static Discriminator from_archive(const numerics::WeightArchive & archive, std::size_t in_channels);
  void store(numerics::WeightArchive & archive) const;

  /// 1 x H x W logits, no sigmoid.
  Tensor3 forward(const Tensor3 & features) const;
  const DiscriminatorSpec & spec() const { return spec_; }

private:
  DiscriminatorSpec spec_;
};

/// Scale applied by the gradient-reversal layer on the way back to the extractor.
inline constexpr double kGradientReversalScale = -0.1;

struct DomainLoss
{
  double loss = 0.0;
  Tensor3 grad_logits;        // dL/dlogits for the discriminator
  Tensor3 grad_feature_path;  // kGradientReversalScale * grad_logits
};

/// Weighted BCE normalized by sum(W). Z is the domain label (0 or 1).
/// Throws std::invalid_argument when Z is not 0/1, W has negative entries or sums to zero.
DomainLoss domain_loss_and_grads(const Tensor3 & logits, int label, const Tensor3 & weights);

/// Binary 8-bit PGM of a 1 x H x W map, values clamped to [0, 1]. Row 0 is written last
/// so +y points up in image viewers.
void write_pgm(std::ostream & out, const Tensor3 & map);
void save_pgm(const std::filesystem::path & path, const Tensor3 & map);

}  // namespace cpalign::domain

#endif  // CPALIGN__DOMAIN__DOMAIN_HPP_
