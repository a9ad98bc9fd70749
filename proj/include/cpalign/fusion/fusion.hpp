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

#ifndef CPALIGN__FUSION__FUSION_HPP_
#define CPALIGN__FUSION__FUSION_HPP_

#include "cpalign/bev/bev.hpp"
#include "cpalign/numerics/conv.hpp"
#include "cpalign/numerics/tensor.hpp"
#include "cpalign/numerics/weights_io.hpp"
#include "cpalign/pointcloud/pointcloud.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cpalign::fusion
{

using numerics::Tensor3;

struct ForegroundSplit
{
  Tensor3 fore;  // H * M
  Tensor3 back;  // exact complement: fore + back == H
};

/// M is 1 x H x W and broadcasts over channels. For M in [0, 1], fore + back == H exactly.
ForegroundSplit split_foreground(const Tensor3 & features, const Tensor3 & observability);

enum class StructBank : std::size_t { vanilla = 0, center_surround, horizontal, vertical, angular };
inline constexpr std::size_t kStructBanks = 5;

/// One base 3x3 bank; the other four are derived from it by fixed rules.
struct StructKernels
{
  numerics::ConvSpec base;  // 3x3, padding 1, stride 1
  std::array<std::vector<double>, kStructBanks> bias;

  /// Depthwise by default (groups == channels).
  static StructKernels zeros(std::size_t channels, std::size_t groups = 0);
  /// Seeded base weights; output channel 0 stays zero so the occupancy carrier passes unchanged.
  static StructKernels analytic(std::size_t channels, std::uint64_t seed, std::size_t groups = 0);

  /// The derived bank with its own bias.
  numerics::ConvSpec bank(StructBank which) const;
  /// Weights and biases of all five banks summed into one conv.
  numerics::ConvSpec fused() const;
  void validate() const;
};

/// 3x3 kernel rotated a quarter turn counter-clockwise: out[r][c] = in[c][2 - r].
std::array<double, 9> rotate90(const std::array<double, 9> & k);

enum class StructPath { fused, separate };

/// Sum of the five bank responses.
Tensor3 struct_conv(const Tensor3 & fore, const StructKernels & kernels, StructPath path = StructPath::fused);

/// new[i] = old[(i % g) * (n / g) + i / g]. Throws std::invalid_argument unless g divides n.
Tensor3 channel_shuffle(const Tensor3 & t, std::size_t groups);
Tensor3 channel_unshuffle(const Tensor3 & t, std::size_t groups);

struct VerificationSpec
{
  numerics::ConvSpec spatial;         // [max, mean] -> 1, 7x7
  numerics::ConvSpec channel_reduce;  // 2C -> max(1, 2C/16), 1x1, relu
  numerics::ConvSpec channel_expand;  // -> 2C, 1x1
  std::size_t shuffle_groups = 2;
  numerics::ConvSpec group_conv;      // 4C -> C (or 1), 1x1, grouped

  static VerificationSpec zeros(
    std::size_t channels, std::size_t shuffle_groups = 2, std::size_t conv_groups = 4,
    bool single_channel = false);
  static VerificationSpec analytic(std::size_t channels, std::uint64_t seed);
  /// Throws std::invalid_argument on group divisibility problems.
  void validate(std::size_t channels) const;
};

/// Spatial and channel attention maps, exposed for inspection.
struct Attention
{
  Tensor3 spatial;  // 1 x H x W
  Tensor3 channel;  // 2C x 1 x 1
};

Attention verification_attention(const Tensor3 & fore, const Tensor3 & enhanced, const VerificationSpec & spec);

/// C x H x W (or 1 x H x W) weights in (0, 1).
Tensor3 verification_weights(const Tensor3 & fore, const Tensor3 & enhanced, const VerificationSpec & spec);

enum class Combine {
  add,     // conv(B + H_fore + H_enh), C -> C
  concat,  // conv([B, H_fore, H_enh]), 3C -> C
};

struct AggregationSpec
{
  Combine combine = Combine::add;
  numerics::ConvSpec mix;  // 1x1
  double epsilon = 0.1;

  static AggregationSpec identity(std::size_t channels, Combine combine = Combine::add);
  void validate(std::size_t channels) const;
};

/// B = W * fore + (1 - W) * enh; verified = mix(B, fore, enh); refined = verified + eps * back.
Tensor3 aggregate_instance(
  const Tensor3 & fore, const Tensor3 & enhanced, const Tensor3 & back, const Tensor3 & verification,
  const AggregationSpec & spec);

/// state = conv([state, next]) over agents in order; one agent passes through.
/// Throws std::invalid_argument when `agents` is empty.
Tensor3 fuse_agents(std::span<const Tensor3> agents, const numerics::ConvSpec & fusion);

/// 2C -> C 1x1 conv whose halves are identities, so fusion sums the agents.
numerics::ConvSpec summing_fusion(std::size_t channels);

struct IfamWeights
{
  StructKernels kernels;
  VerificationSpec verification;
  AggregationSpec aggregation;
  numerics::ConvSpec fusion;

  static IfamWeights analytic(std::size_t channels, std::uint64_t seed);
  /// Names "ifam.struct.*", "ifam.verify.*", "ifam.aggregate.*", "ifam.fuse.*", "ifam.eps".
  static IfamWeights from_archive(const numerics::WeightArchive & archive, std::size_t channels);
  void store(numerics::WeightArchive & archive) const;
};

/// Split, enhance, verify, aggregate for one agent.
Tensor3 refine_agent(const Tensor3 & features, const Tensor3 & observability, const IfamWeights & weights);

/// 1 where a cell center lies in any box footprint (closed), else 0.
Tensor3 rasterize_footprints(std::span<const pointcloud::OrientedBox> boxes, const bev::BevSpec & spec);

struct FocalLoss
{
  double loss = 0.0;
  Tensor3 grad;
};

/// Weighted focal loss against 0/1 labels; weight (2y + (1 - y)) / max(sum y, 1).
FocalLoss foreground_loss(const Tensor3 & prediction, const Tensor3 & labels);
FocalLoss foreground_loss(
  const Tensor3 & prediction, std::span<const pointcloud::OrientedBox> boxes, const bev::BevSpec & spec);

/// Per-cell focal term: -(0.25 y (1-p)^2 log p + 0.75 (1-y) p^2 log(1-p)).
double focal_term(double p, double y);

}  // namespace cpalign::fusion

#endif  // CPALIGN__FUSION__FUSION_HPP_
