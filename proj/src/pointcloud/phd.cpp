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

#include "cpalign/pointcloud/phd.hpp"

#include "cpalign/numerics/random.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cpalign::pointcloud
{

void PhdConfig::validate() const
{
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!(inner_scale > 0.0 && inner_scale < 1.0)) {
    throw std::invalid_argument("phd: inner_scale (alpha) must lie in (0, 1)");
  }
  if (!in_unit(inner_ratio) || !in_unit(outer_ratio)) {
    throw std::invalid_argument("phd: sampling ratios must lie in (0, 1]");
  }
  if (!(distance_threshold >= 0.0)) {
    throw std::invalid_argument("phd: distance threshold must be non-negative");
  }
}

std::vector<std::size_t> select_proximal(
  std::span<const OrientedBox> boxes, Vec2 ego, const PhdConfig & cfg)
{
  std::vector<std::size_t> near;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    if (std::hypot(boxes[k].cx - ego.x, boxes[k].cy - ego.y) <= cfg.distance_threshold) {
      near.push_back(k);
    }
  }
  if (near.size() <= cfg.max_objects) {
    return near;
  }
  auto rng = numerics::make_rng(cfg.seed, {numerics::label_key("phd.select")});
  std::vector<std::size_t> chosen;
  std::sample(near.begin(), near.end(), std::back_inserter(chosen), cfg.max_objects, rng);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

RegionSplit partition_regions(std::span<const Point> cloud, const OrientedBox & box, double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("partition_regions: alpha must lie in (0, 1)");
  }
  RegionSplit split;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (box.contains(cloud[i], alpha)) {
      split.inner.push_back(i);
    } else if (box.contains(cloud[i])) {
      split.outer.push_back(i);
    }
  }
  return split;
}

std::size_t fps_keep_count(std::size_t n, double beta)
{
  // Guard against beta * n landing a hair above an integer.
  const double raw = beta * static_cast<double>(n);
  const double snapped = std::round(raw);
  const double keep = std::abs(raw - snapped) < 1e-9 ? snapped : std::ceil(raw);
  return std::min(n, static_cast<std::size_t>(keep));
}

std::vector<std::size_t> fps(std::span<const Point> points, double beta)
{
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("fps: beta must lie in (0, 1]");
  }
  const std::size_t n = points.size();
  const std::size_t keep = fps_keep_count(n, beta);
  if (keep == n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  auto dist2 = [&](const Point & a, const Point & b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
  };

  Point centroid;
  for (const auto & p : points) {
    centroid.x += p.x;
    centroid.y += p.y;
    centroid.z += p.z;
  }
  centroid.x /= static_cast<double>(n);
  centroid.y /= static_cast<double>(n);
  centroid.z /= static_cast<double>(n);

  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dist2(points[i], centroid);
    if (d > best) {
      best = d;
      first = i;
    }
  }

  std::vector<std::size_t> picked{first};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  taken[first] = true;
  std::size_t last = first;
  while (picked.size() < keep) {
    std::size_t next = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], dist2(points[i], points[last]));
      if (nearest[i] > far) {
        far = nearest[i];
        next = i;
      }
    }
    taken[next] = true;
    picked.push_back(next);
    last = next;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

PointCloud phd_apply(
  std::span<const Point> cloud, std::span<const OrientedBox> boxes, Vec2 ego,
  const PhdConfig & cfg)
{
  cfg.validate();
  std::vector<bool> keep(cloud.size(), true);
  std::vector<bool> claimed(cloud.size(), false);

  auto downsample = [&](const std::vector<std::size_t> & region, double beta) {
    std::vector<Point> pts;
    pts.reserve(region.size());
    for (auto i : region) pts.push_back(cloud[i]);
    std::vector<bool> survive(region.size(), false);
    for (auto j : fps(pts, beta)) survive[j] = true;
    for (std::size_t j = 0; j < region.size(); ++j) keep[region[j]] = survive[j];
  };

  for (auto k : select_proximal(boxes, ego, cfg)) {
    // A point inside overlapping selected boxes belongs to the first one only.
    const auto regions = partition_regions(cloud, boxes[k], cfg.inner_scale);
    RegionSplit split;
    std::copy_if(
      regions.inner.begin(), regions.inner.end(), std::back_inserter(split.inner),
      [&](std::size_t i) { return !claimed[i]; });
    std::copy_if(
      regions.outer.begin(), regions.outer.end(), std::back_inserter(split.outer),
      [&](std::size_t i) { return !claimed[i]; });
    for (auto i : split.inner) claimed[i] = true;
    for (auto i : split.outer) claimed[i] = true;
    downsample(split.inner, cfg.inner_ratio);
    downsample(split.outer, cfg.outer_ratio);
  }

  PointCloud out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep[i]) out.push_back(cloud[i]);
  }
  return out;
}

}  // namespace cpalign::pointcloud
