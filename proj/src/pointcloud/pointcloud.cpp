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

#include "cpalign/pointcloud/pointcloud.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

namespace cpalign::pointcloud
{

namespace
{

// Absorbs rounding when a point sits exactly on a face.
constexpr double kBoundaryTolerance = 1e-9;

void put_u32(std::ostream & out, std::uint32_t v)
{
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>(v >> (8 * i));
  out.write(b.data(), 4);
}

bool get_u32(std::istream & in, std::uint32_t & v)
{
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char *>(b.data()), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return true;
}

}  // namespace

double normalize_angle(double radians)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

void OrientedBox::validate() const
{
  for (double v : {cx, cy, cz, length, width, height, yaw}) {
    if (!std::isfinite(v)) throw std::invalid_argument("oriented box has non-finite fields");
  }
  if (length <= 0.0 || width <= 0.0 || height <= 0.0) {
    throw std::invalid_argument("oriented box dims must be strictly positive");
  }
}

bool OrientedBox::contains_planar(double x, double y, double scale) const
{
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * length * scale + kBoundaryTolerance &&
         std::abs(across) <= 0.5 * width * scale + kBoundaryTolerance;
}

bool OrientedBox::contains(const Point & p, double scale) const
{
  return std::abs(p.z - cz) <= 0.5 * height * scale + kBoundaryTolerance &&
         contains_planar(p.x, p.y, scale);
}

std::vector<Vec2> OrientedBox::corners() const
{
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  std::vector<Vec2> out;
  for (auto [a, b] : {std::pair{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}) {
    out.push_back({cx + c * a - s * b, cy + s * a + c * b});
  }
  return out;
}

void write_cloud_binary(std::ostream & out, const PointCloud & cloud)
{
  put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  for (const auto & p : cloud) {
    for (double v : {p.x, p.y, p.z, p.intensity}) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!out) throw CloudFormatError("failed writing point cloud");
}

PointCloud read_cloud_binary(std::istream & in)
{
  std::uint32_t n = 0;
  if (!get_u32(in, n)) throw CloudFormatError("point cloud missing count header");
  PointCloud cloud;
  cloud.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::array<double, 4> v{};
    for (auto & x : v) {
      std::uint32_t bits = 0;
      if (!get_u32(in, bits)) {
        throw CloudFormatError(
          "point cloud truncated at point " + std::to_string(i) + " of " + std::to_string(n));
      }
      x = std::bit_cast<float>(bits);
    }
    cloud.push_back({v[0], v[1], v[2], v[3]});
  }
  return cloud;
}

void write_cloud_csv(std::ostream & out, const PointCloud & cloud)
{
  out << "x,y,z,intensity\n" << std::setprecision(9);
  for (const auto & p : cloud) {
    out << p.x << ',' << p.y << ',' << p.z << ',' << p.intensity << '\n';
  }
}

PointCloud read_cloud_csv(std::istream & in)
{
  std::string line;
  if (!std::getline(in, line)) return {};
  PointCloud cloud;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Point p;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ls >> p.x >> c1 >> p.y >> c2 >> p.z >> c3 >> p.intensity) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      throw CloudFormatError("malformed CSV point at line " + std::to_string(row));
    }
    cloud.push_back(p);
  }
  return cloud;
}

void save_cloud(const std::filesystem::path & path, const PointCloud & cloud)
{
  const bool csv = path.extension() == ".csv";
  std::ofstream out(path, csv ? std::ios::out : std::ios::binary);
  if (!out) throw CloudFormatError("cannot open " + path.string());
  if (csv) {
    write_cloud_csv(out, cloud);
  } else {
    write_cloud_binary(out, cloud);
  }
}

PointCloud load_cloud(const std::filesystem::path & path)
{
  const bool csv = path.extension() == ".csv";
  std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
  if (!in) throw CloudFormatError("cannot open " + path.string());
  return csv ? read_cloud_csv(in) : read_cloud_binary(in);
}

}  // namespace cpalign::pointcloud
