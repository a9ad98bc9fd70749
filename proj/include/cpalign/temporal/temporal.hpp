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

#ifndef CPALIGN__TEMPORAL__TEMPORAL_HPP_
#define CPALIGN__TEMPORAL__TEMPORAL_HPP_

#include "cpalign/bev/bev.hpp"
#include "cpalign/numerics/conv.hpp"
#include "cpalign/numerics/tensor.hpp"
#include "cpalign/numerics/weights_io.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cpalign::temporal
{

using numerics::Tensor3;

/// Per-cell displacement in grid cells (channel 0 along width, 1 along height)
/// and a per-cell sampling weight.
struct MotionField
{
  Tensor3 displacement;  // 2 x H x W
  Tensor3 weight;        // 1 x H x W

  /// Zero displacement, unit weight.
  static MotionField identity(std::size_t height, std::size_t width);
  /// Throws ShapeError on layout problems, NumericError on non-finite values or weights outside [0, 1].
  void validate() const;
};

enum class XiMode { learned, oracle };

struct DelayContext
{
  double tau = 0.0;            // seconds
  double frame_period = 0.1;   // seconds
  XiMode mode = XiMode::oracle;

  /// Throws std::invalid_argument unless frame_period > 0 and tau >= 0.
  void validate() const;
  /// tau / frame_period
  double ratio() const;
};

/// out(y) = w(y) * bilinear(F, y - xi * dp(y)); samples off the grid read zero.
Tensor3 warp_features(const Tensor3 & features, const Tensor3 & displacement, double xi, const Tensor3 & weight);
Tensor3 warp_features(const Tensor3 & features, const MotionField & field, double xi = 1.0);

/// Two branches over [dF, F_latest] and [dF, F_prev], a fusion conv, then
/// displacement and sigmoid weight heads.
class MotionEstimator
{
public:
  static constexpr std::size_t kBranchWidth = 32;
  static constexpr double kWeightBias = 4.0;

  /// Seeded branches; zero heads with the weight bias at +4.
  static MotionEstimator analytic(std::size_t channels, std::uint64_t seed);
  static MotionEstimator from_archive(
    const numerics::WeightArchive & archive, const std::string & prefix, std::size_t channels);
  void store(numerics::WeightArchive & archive, const std::string & prefix) const;

  MotionField estimate(const Tensor3 & latest, const Tensor3 & previous) const;

  std::size_t channels() const { return branch_latest_.in_channels / 2; }
  numerics::ConvSpec & flow_head() { return flow_; }
  numerics::ConvSpec & weight_head() { return weight_; }

private:
  static MotionEstimator layout(std::size_t channels);

  numerics::ConvSpec branch_latest_;
  numerics::ConvSpec branch_previous_;
  numerics::ConvSpec fuse_;
  numerics::ConvSpec flow_;
  numerics::ConvSpec weight_;
};

/// (dp2 * w2) - (dp1 * w1), weights broadcast over both displacement channels.
Tensor3 motion_difference(const MotionField & stage1, const MotionField & stage2);

/// Transformer-style sinusoidal code of `position` with the given width and base.
std::vector<double> sinusoidal_embedding(double position, std::size_t width, double base = 1e4);

/// Reduces the motion difference to a feature vector and regresses xi >= 0.
class XiPredictor
{
public:
  static constexpr std::size_t kWidth = 16;

  static XiPredictor analytic(std::uint64_t seed);
  static XiPredictor from_archive(const numerics::WeightArchive & archive, const std::string & prefix);
  void store(numerics::WeightArchive & archive, const std::string & prefix) const;

  /// f_M: stem conv, one residual block, global average pooling.
  std::vector<double> motion_descriptor(const Tensor3 & motion_diff) const;
  /// relu(MLP([f_M, f_M + embed(tau / dT)])).
  double predict(const Tensor3 & motion_diff, const DelayContext & ctx) const;

private:
  static XiPredictor layout();

  numerics::ConvSpec stem_;
  numerics::ConvSpec res_a_;
  numerics::ConvSpec res_b_;
  numerics::MlpSpec mlp_;
};

/// Oracle mode returns tau / dT without touching the network.
double predict_xi(
  const MotionField & stage1, const MotionField & stage2, const DelayContext & ctx,
  const XiPredictor * predictor);

/// Which frame stage 1 warps.
enum class Stage1Source {
  previous,  // F(t - tau - dT) forward by one frame, landing on t - tau
  latest,    // F(t - tau), as written in the original formulation
};

/// Displacement used by the stage-2 warp.
enum class Stage2Displacement {
  scaled_stage2,  // xi * dp_s2
  stage1_literal, // dp_s1 with no xi
};

struct PtamOptions
{
  Stage1Source stage1_source = Stage1Source::previous;
  Stage2Displacement stage2_displacement = Stage2Displacement::scaled_stage2;
  /// Injected fields per scale bypass the motion estimator (ideal flow).
  std::optional<std::array<MotionField, 3>> stage1_fields;
  std::optional<std::array<MotionField, 3>> stage2_fields;
  /// Bypasses predict_xi entirely when set.
  std::optional<double> xi_override;
};

/// Per-scale networks. Names: "ptam.motion.s{k}.*", "ptam.xi.s{k}.*".
struct PtamWeights
{
  std::array<MotionEstimator, 3> motion;
  std::array<XiPredictor, 3> xi;

  static PtamWeights analytic(std::uint64_t seed);
  static PtamWeights from_archive(const numerics::WeightArchive & archive);
  void store(numerics::WeightArchive & archive) const;
};

struct PtamResult
{
  bev::MultiScaleFeatures intermediate;
  bev::MultiScaleFeatures compensated;
  std::array<MotionField, 3> stage1;
  std::array<MotionField, 3> stage2;
  std::array<double, 3> xi{};
};

/// Collaborator side: motion from previous to latest and the stage-1 warp, all scales.
/// Stage-2 fields are left as identity placeholders.
PtamResult ptam_stage1(
  const bev::MultiScaleFeatures & previous, const bev::MultiScaleFeatures & latest,
  const PtamWeights & weights, const PtamOptions & options = {});

/// Ego side: completes `partial` (whose intermediate and stage-1 fields may have
/// crossed a lossy link). `reference` is the frame stage 2 measures motion against:
/// the previous frame when stage 1 warped it, else the latest frame.
void ptam_stage2(
  PtamResult & partial, const bev::MultiScaleFeatures & reference, const DelayContext & ctx,
  const PtamWeights & weights, const PtamOptions & options = {});

/// Both stages on all three scales.
PtamResult ptam_align(
  const bev::MultiScaleFeatures & previous, const bev::MultiScaleFeatures & latest,
  const DelayContext & ctx, const PtamWeights & weights, const PtamOptions & options = {});

/// Top-left corner of an l x l window.
struct Window
{
  std::size_t row = 0;
  std::size_t col = 0;
};

struct WindowSets
{
  std::vector<Window> primary;  // anchored at (0, 0)
  std::vector<Window> offset;   // anchored at (l/2, l/2)
  std::size_t size = 0;         // l
};

/// Throws std::invalid_argument when l == 0 or l > min(h, w).
WindowSets window_partition(std::size_t height, std::size_t width, std::size_t l);

struct OpCounts
{
  std::uint64_t mul = 0;
  std::uint64_t add = 0;
  std::uint64_t sqrt = 0;
  std::uint64_t div = 0;

  friend bool operator==(const OpCounts &, const OpCounts &) = default;
};

struct WindowLoss
{
  double loss = 0.0;
  Tensor3 grad;  // dL / d prediction
  std::size_t windows = 0;
  std::vector<Window> degenerate;  // zero-norm windows, cosine taken as 0
  OpCounts ops;                    // similarity operations actually executed
};

/// Mean over W1 and W2 windows of (1 - cos)^2 between prediction and target.
WindowLoss temporal_loss(const Tensor3 & prediction, const Tensor3 & target, std::size_t l);

struct TemporalLossTotal
{
  double total = 0.0;
  std::array<WindowLoss, 3> intermediate;
  std::array<WindowLoss, 3> final;
};

/// Window size used at a scale: min(l, h, w).
std::size_t scale_window(std::size_t l, const Tensor3 & t);

/// Sums the intermediate and final losses over all three scales.
TemporalLossTotal temporal_loss_total(
  const bev::MultiScaleFeatures & intermediate, const bev::MultiScaleFeatures & intermediate_target,
  const bev::MultiScaleFeatures & compensated, const bev::MultiScaleFeatures & compensated_target,
  std::size_t l);

/// Mean window cosine, the alignment quality metric reported by the harness.
double mean_window_cosine(const Tensor3 & a, const Tensor3 & b, std::size_t l);

}  // namespace cpalign::temporal

#endif  // CPALIGN__TEMPORAL__TEMPORAL_HPP_
