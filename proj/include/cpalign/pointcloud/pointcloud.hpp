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

#ifndef CPALIGN__POINTCLOUD__POINTCLOUD_HPP_
#define CPALIGN__POINTCLOUD__POINTCLOUD_HPP_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace cpalign::pointcloud
{

struct Point
{
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point &, const Point &) = default;
};

using PointCloud = std::vector<Point>;

struct Vec2
{
  double x = 0.0;
  double y = 0.0;
};

double normalize_angle(double radians);

/// Box with length along its heading, width across it, height along z.
struct OrientedBox
{
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  /// Throws std::invalid_argument unless dims are positive and values finite.
  void validate() const;

  /// Closed membership test for the concentric box with every dim scaled.
  bool contains(const Point & p, double scale = 1.0) const;
  bool contains_planar(double x, double y, double scale = 1.0) const;

  /// Footprint corners, counter-clockwise from the front-left.
  std::vector<Vec2> corners() const;

  friend bool operator==(const OrientedBox &, const OrientedBox &) = default;
};

class CloudFormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Binary form: u32 little-endian point count, then float32 (x, y, z, intensity) per point.
void write_cloud_binary(std::ostream & out, const PointCloud & cloud);
PointCloud read_cloud_binary(std::istream & in);
void write_cloud_csv(std::ostream & out, const PointCloud & cloud);
PointCloud read_cloud_csv(std::istream & in);

void save_cloud(const std::filesystem::path & path, const PointCloud & cloud);
PointCloud load_cloud(const std::filesystem::path & path);

}  // namespace cpalign::pointcloud

#endif  // CPALIGN__POINTCLOUD__POINTCLOUD_HPP_
