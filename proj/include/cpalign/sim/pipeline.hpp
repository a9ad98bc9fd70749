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

#ifndef CPALIGN__SIM__PIPELINE_HPP_
#define CPALIGN__SIM__PIPELINE_HPP_

#include "cpalign/bev/bev.hpp"
#include "cpalign/domain/domain.hpp"
#include "cpalign/fusion/fusion.hpp"
#include "cpalign/pointcloud/phd.hpp"
#include "cpalign/sim/codec.hpp"
#include "cpalign/sim/detection.hpp"
#include "cpalign/sim/scenario.hpp"
#include "cpalign/temporal/temporal.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cpalign::sim
{

// ------------------------------------------------------------- ideal flow

/// One rigid object between two instants, both boxes in the same agent frame.
struct BoxMotion
{
  OrientedBox from;
  OrientedBox to;
};

/// Ground-truth motion field on one scale (grid cell = spec.cell * 2^scale).
/// Cells whose centre lies in a destination footprint dilated by one cell carry
/// the per-unit-xi displacement (to - from) / xi with weight 1; the remaining
/// cells of the dilated source footprint are vacated (weight 0). Everything else
/// is identity. xi <= 0 gives the identity field.
temporal::MotionField ideal_motion_field(
  std::span<const BoxMotion> motions, const bev::BevSpec & spec, std::size_t scale, double xi);

std::array<temporal::MotionField, 3> ideal_motion_fields(
  std::span<const BoxMotion> motions, const bev::BevSpec & spec, double xi);

// ---------------------------------------------------------------- options

struct PhdSettings
{
  bool enabled = true;
  pointcloud::PhdConfig config;
};

enum class FlowSource { ideal, estimated };

struct PtamSettings
{
  bool enabled = true;
  temporal::XiMode xi = temporal::XiMode::oracle;
  FlowSource flow = FlowSource::ideal;
  temporal::Stage1Source stage1_source = temporal::Stage1Source::previous;
  temporal::Stage2Displacement stage2_displacement = temporal::Stage2Displacement::scaled_stage2;
};

struct IfamSettings
{
  double epsilon = 0.1;
  fusion::Combine combine = fusion::Combine::add;
};

/// Gaussian pose noise on the collaborator only.
struct NoiseSettings
{
  double sigma_local = 0.0;     // m, per planar axis
  double sigma_head_deg = 0.0;  // degrees

  bool noiseless() const { return sigma_local == 0.0 && sigma_head_deg == 0.0; }
};

struct RunOptions
{
  double tau = 0.0;  // s
  PhdSettings phd;
  PtamSettings ptam;
  CodecConfig codec;
  NoiseSettings noise;
  DetectorConfig detector;
  /// Collaborator id; unset picks the first non-ego agent.
  std::optional<int> collaborator;
  /// Separates RNG streams of sweep points.
  std::uint64_t stream = 0;
  /// Window size of the cosine metric.
  std::size_t window = 16;

  void validate() const;
};

// ----------------------------------------------------------------- report

struct FrameReport
{
  double t = 0.0;
  double tau = 0.0;
  bool compensated = false;
  bool noiseless = true;
  Pose2 collaborator_pose;  // the pose actually used for the ego transform
  std::vector<Detection> detections;
  std::vector<OrientedBox> ground_truth;  // ego frame
  double cosine_pre = 0.0;   // latest collaborator frame vs its frame at t
  double cosine_post = 0.0;  // frame the ego received (after PTAM) vs its frame at t
  std::vector<std::string> payload_names;
  std::vector<double> codec_mse;
  double codec_total_mse = 0.0;
  std::array<double, 3> xi{};
  double max_displacement_cells = 0.0;  // object motion over tau, large scale
  double mean_observability_weight = 0.0;
  Tensor3 fused_map;
  Tensor3 ego_map;
  Tensor3 collaborator_map;  // in the ego grid
};

struct RunReport
{
  double tau = 0.0;
  NoiseSettings noise;
  bool ptam = false;
  std::string xi_mode;
  std::string codec;
  std::vector<FrameReport> frames;
  DetectionEval detection;
  double cosine_pre = 0.0;
  double cosine_post = 0.0;
  double codec_mse = 0.0;
  temporal::OpCounts ops_global;
  temporal::OpCounts ops_blockwise;
  std::string detector_note =
    "toy detector: thresholded foreground map, 4-connected components, axis-aligned boxes";
};

// --------------------------------------------------------------- pipeline

/// Everything the ego computes from its own sensor at time t. It does not
/// depend on the delay, noise, codec or PTAM settings, so sweeps reuse it.
struct EgoView
{
  double t = 0.0;
  Pose2 pose;
  std::vector<OrientedBox> ground_truth;  // ego frame
  Tensor3 features;                       // BEV, kBevChannels x H x W
  Tensor3 map;                            // foreground map
  Tensor3 refined;                        // after IFAM
};

/// All networks of one deployment. Shared by every agent.
class Pipeline
{
public:
  /// Seeded analytic weights (occupancy carrier, identity aggregation, summing fusion).
  static Pipeline analytic(std::uint64_t seed, const bev::BevSpec & spec, const IfamSettings & ifam = {});
  /// Loads every sub-network; throws numerics::ArchiveError on missing names.
  static Pipeline from_archive(const numerics::WeightArchive & archive, const bev::BevSpec & spec);
  void store(numerics::WeightArchive & archive) const;

  /// Ego render, optional PHD, featurize, foreground map and IFAM refinement.
  EgoView observe_ego(const Scenario & scenario, double t, const PhdSettings & phd) const;

  /// One ego frame at time t. Requires t >= tau + frame period and at least two
  /// agents. A precomputed `ego` view must be for the same t.
  FrameReport run(
    const Scenario & scenario, double t, const RunOptions & options, const EgoView * ego = nullptr) const;

  const bev::BevSpec & spec() const { return spec_; }

private:
  Pipeline(
    bev::BevSpec spec, bev::Backbone backbone, bev::BevProjector projector, domain::ForegroundEstimator fg,
    temporal::PtamWeights ptam, fusion::IfamWeights ifam);

  bev::BevSpec spec_;
  bev::Backbone backbone_;
  bev::BevProjector projector_;
  domain::ForegroundEstimator foreground_;
  temporal::PtamWeights ptam_;
  fusion::IfamWeights ifam_;
};

/// Convenience wrapper building analytic weights from the scenario seed.
FrameReport run_pipeline(
  const Scenario & scenario, double t, const RunOptions & options, const bev::BevSpec & spec = {});

/// Several ego frames with pooled detection metrics. `egos`, when given, holds
/// one precomputed view per entry of `times`.
RunReport run_frames(
  const Pipeline & pipeline, const Scenario & scenario, std::span<const double> times, const RunOptions & options,
  std::span<const EgoView> egos = {});

// ------------------------------------------------------------------ sweep

struct SweepConfig
{
  std::vector<double> tau_ms = {0, 100, 200, 300, 400, 500};
  std::vector<double> sigma_local_m = {0.0};
  std::vector<double> sigma_head_deg = {0.0};
  std::vector<double> frames_s = {1.6};
  std::size_t threads = 1;  // 0 = hardware concurrency

  void validate() const;
};

struct SweepRow
{
  std::string metric;
  double value = 0.0;
  double tau_ms = 0.0;
  double sigma_local_m = 0.0;
  double sigma_head_deg = 0.0;
};

/// Every grid point runs once without and once with PTAM; rows come out in grid order.
std::vector<SweepRow> run_sweep(
  const Pipeline & pipeline, const Scenario & scenario, const SweepConfig & sweep, const RunOptions & base);

inline constexpr const char * kCsvHeader = "metric,value,tau_ms,sigma_local_m,sigma_head_deg";
void write_csv(std::ostream & out, std::span<const SweepRow> rows);

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__PIPELINE_HPP_
