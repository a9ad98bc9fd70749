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

#ifndef CPALIGN__POINTCLOUD__PHD_HPP_
#define CPALIGN__POINTCLOUD__PHD_HPP_

#include "cpalign/pointcloud/pointcloud.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cpalign::pointcloud
{

// Proximal-region hierarchical downsampling: near objects get their interior
// thinned harder than their contour shell, evening out range-dependent density.
struct PhdConfig
{
  double distance_threshold = 50.0;  // meters, planar
  std::size_t max_objects = 2;
  double inner_scale = 0.5;  // alpha
  double inner_ratio = 0.6;  // beta_in
  double outer_ratio = 0.8;  // beta_out
  std::uint64_t seed = 0;

  void validate() const;
};

/// Boxes whose planar center distance to `ego` is within the threshold; when
/// more than max_objects qualify, a seeded uniform subset of that size.
/// Result is sorted ascending.
std::vector<std::size_t> select_proximal(
  std::span<const OrientedBox> boxes, Vec2 ego, const PhdConfig & cfg);

struct RegionSplit
{
  std::vector<std::size_t> inner;
  std::vector<std::size_t> outer;
};

/// Indices of points inside the inner (alpha-scaled) box, and inside the full
/// box but not the inner one. Boundaries are inclusive.
RegionSplit partition_regions(std::span<const Point> cloud, const OrientedBox & box, double alpha);

/// Number of points FPS keeps from n at ratio beta: ceil(beta * n).
std::size_t fps_keep_count(std::size_t n, double beta);

/// Greedy farthest point sampling over (x, y, z). The first pick is the point
/// farthest from the centroid; each later pick maximizes its distance to the
/// picked set. Ties go to the lowest index. Returns indices into `points` in
/// ascending order.
std::vector<std::size_t> fps(std::span<const Point> points, double beta);

/// Downsamples selected proximal objects; everything outside them passes
/// through. Output keeps the input order and is a subset of the input.
PointCloud phd_apply(
  std::span<const Point> cloud, std::span<const OrientedBox> boxes, Vec2 ego,
  const PhdConfig & cfg);

}  // namespace cpalign::pointcloud

#endif  // CPALIGN__POINTCLOUD__PHD_HPP_
