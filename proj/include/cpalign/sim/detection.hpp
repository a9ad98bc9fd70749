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

#ifndef CPALIGN__SIM__DETECTION_HPP_
#define CPALIGN__SIM__DETECTION_HPP_

#include "cpalign/bev/bev.hpp"
#include "cpalign/pointcloud/pointcloud.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cpalign::sim
{

using numerics::Tensor3;
using pointcloud::OrientedBox;

/// Threshold, 4-connected components, axis-aligned boxes. Not a learned head.
struct DetectorConfig
{
  double threshold = 0.5;     // cells with map > threshold are foreground
  std::size_t min_cells = 6;  // smaller components are dropped
  double box_height = 1.5;
};

struct Detection
{
  OrientedBox box;  // axis aligned, spans whole cells
  double score = 0.0;  // mean map value over the component
  std::size_t cells = 0;
};

/// Components are emitted in row-major order of their first cell.
std::vector<Detection> detect(const Tensor3 & map, const bev::BevSpec & spec, const DetectorConfig & config = {});

/// Footprint IoU of two oriented boxes (convex polygon clipping).
double bev_iou(const OrientedBox & a, const OrientedBox & b);

struct Match
{
  std::size_t frame = 0;
  std::size_t detection = 0;
  std::optional<std::size_t> ground_truth;
  double iou = 0.0;
  double score = 0.0;
  bool true_positive = false;
};

struct FrameDetections
{
  std::vector<Detection> detections;
  std::vector<OrientedBox> ground_truth;
};

struct DetectionEval
{
  double ap50 = 0.0;
  double ap70 = 0.0;
  std::vector<Match> matches50;
  std::vector<Match> matches70;
  /// Per ground-truth box, best IoU over all detections of its frame (0 if none).
  std::vector<double> best_iou;
  double mean_best_iou = 0.0;
  std::size_t ground_truth_count = 0;
};

/// Greedy matching by descending score (ties keep detection order), each
/// detection taking the unmatched ground truth of highest IoU.
std::vector<Match> match_detections(std::span<const FrameDetections> frames, double iou_threshold);

/// 11-point interpolated AP. Operating points are taken after each group of
/// equal scores. Returns 0 when there is no ground truth.
double eleven_point_ap(std::span<const Match> matches, std::size_t ground_truth_count);

/// Pools detections of several frames.
DetectionEval evaluate_frames(std::span<const FrameDetections> frames);

/// Single map: throws numerics::NumericError unless the map is 1 x H x W within [0, 1].
DetectionEval evaluate_detection(
  const Tensor3 & map, std::span<const OrientedBox> ground_truth, const bev::BevSpec & spec,
  const DetectorConfig & config = {});

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__DETECTION_HPP_
