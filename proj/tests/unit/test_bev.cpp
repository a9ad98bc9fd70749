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

#include "cpalign/bev/bev.hpp"
#include "cpalign/numerics/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cpalign::bev;
using cpalign::numerics::Tensor3;

namespace
{

BevSpec small_spec()
{
  // 16 x 16 grid of 1 m cells.
  BevSpec s;
  s.cell = 1.0;
  s.x_min = s.y_min = -8.0;
  s.x_max = s.y_max = 8.0;
  return s;
}

Tensor3 random_pillars(std::size_t h, std::size_t w, std::uint64_t seed)
{
  auto rng = cpalign::numerics::make_rng(seed);
  return cpalign::numerics::random_tensor(kPillarChannels, h, w, rng, 0.0, 1.0);
}

Tensor3 shift_plane(const Tensor3 & t, std::size_t dy, std::size_t dx)
{
  Tensor3 out(t.channels(), t.height(), t.width());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t y = dy; y < t.height(); ++y)
      for (std::size_t x = dx; x < t.width(); ++x) out.at(c, y, x) = t.at(c, y - dy, x - dx);
  return out;
}

}  // namespace

TEST(BevSpec, DefaultGridIs64)
{
  const BevSpec s;
  EXPECT_EQ(s.width(), 64u);
  EXPECT_EQ(s.height(), 64u);
  EXPECT_NO_THROW(s.validate());
  BevSpec bad = s;
  bad.x_max = 12.9;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PillarEncode, SinglePointStatistics)
{
  const auto spec = small_spec();
  const cpalign::pointcloud::PointCloud cloud = {{0.25, -0.75, 1.0, 0.3}};
  const auto p = pillar_encode(cloud, spec);
  // x in [0, 1) -> col 8; y in [-1, 0) -> row 7.
  EXPECT_DOUBLE_EQ(p.at(kOccupancy, 7, 8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(kMeanZ, 7, 8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(kMaxZ, 7, 8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(kMinZ, 7, 8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(kZSpread, 7, 8), 0.0);
  EXPECT_DOUBLE_EQ(p.at(kMeanIntensity, 7, 8), 0.3);
  EXPECT_NEAR(p.at(kMeanPlanarOffset, 7, 8), std::hypot(0.25, 0.25), 1e-12);
  double total = 0.0;
  for (double v : p.values()) total += std::abs(v);
  double cell = 0.0;
  for (std::size_t c = 0; c < kPillarChannels; ++c) cell += std::abs(p.at(c, 7, 8));
  EXPECT_DOUBLE_EQ(total, cell);
}

TEST(PillarEncode, HeightStatisticsOverTwoPoints)
{
  const auto spec = small_spec();
  const cpalign::pointcloud::PointCloud cloud = {{0.5, 0.5, 0.0, 0.0}, {0.5, 0.5, 2.0, 0.0}};
  const auto p = pillar_encode(cloud, spec);
  EXPECT_DOUBLE_EQ(p.at(kMeanZ, 8, 8), 1.0);
  EXPECT_DOUBLE_EQ(p.at(kMaxZ, 8, 8), 2.0);
  EXPECT_DOUBLE_EQ(p.at(kMinZ, 8, 8), 0.0);
  EXPECT_DOUBLE_EQ(p.at(kZSpread, 8, 8), 2.0);
  EXPECT_DOUBLE_EQ(p.at(kLogCount, 8, 8), std::log(3.0));
}

TEST(PillarEncode, EmptyCloudAndOutOfRange)
{
  const auto spec = small_spec();
  const auto empty = pillar_encode({}, spec);
  EXPECT_EQ(empty.channels(), kPillarChannels);
  EXPECT_EQ(empty.height(), 16u);
  for (double v : empty.values()) EXPECT_EQ(v, 0.0);
  const cpalign::pointcloud::PointCloud far = {{100, 0, 0, 1}, {8.0, 0, 0, 1}};
  const auto far_enc = pillar_encode(far, spec);
  for (double v : far_enc.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, ShapesAndZeroInput)
{
  const auto bb = Backbone::analytic(1);
  const auto ms = bb.forward(Tensor3(kPillarChannels, 16, 16));
  EXPECT_EQ(ms.large().shape_string(), Tensor3(64, 16, 16).shape_string());
  EXPECT_EQ(ms.middle().shape_string(), Tensor3(128, 8, 8).shape_string());
  EXPECT_EQ(ms.small().shape_string(), Tensor3(256, 4, 4).shape_string());
  EXPECT_NO_THROW(ms.validate());
  for (const auto & s : ms.scales)
    for (double v : s.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, RejectsIndivisibleGrid)
{
  const auto bb = Backbone::analytic(1);
  EXPECT_THROW(bb.forward(Tensor3(kPillarChannels, 18, 16)), cpalign::numerics::ShapeError);
}

TEST(Backbone, DeterministicPerSeed)
{
  const auto x = random_pillars(16, 16, 9);
  const auto a = Backbone::analytic(5).forward(x);
  const auto b = Backbone::analytic(5).forward(x);
  const auto c = Backbone::analytic(6).forward(x);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(a.scales[s], b.scales[s]);
  EXPECT_NE(a.scales[0], c.scales[0]);
}

TEST(Backbone, CarrierPassesOccupancy)
{
  const auto x = random_pillars(16, 16, 10);
  const auto ms = Backbone::analytic(3).forward(x);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_DOUBLE_EQ(ms.large().at(0, y, c), x.at(0, y, c));
  // Stride-2 stages subsample the carrier.
  EXPECT_DOUBLE_EQ(ms.middle().at(0, 3, 5), x.at(0, 6, 10));
  EXPECT_DOUBLE_EQ(ms.small().at(0, 1, 2), x.at(0, 4, 8));
}

TEST(Backbone, TranslationEquivariantAwayFromBorder)
{
  // Shift by a multiple of 4 so every stride stays aligned.
  Tensor3 x(kPillarChannels, 32, 32);
  const auto patch = random_pillars(8, 8, 11);
  for (std::size_t c = 0; c < kPillarChannels; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t w = 0; w < 8; ++w) x.at(c, 8 + y, 8 + w) = patch.at(c, y, w);
  const auto bb = Backbone::analytic(4);
  const auto a = bb.forward(x);
  const auto b = bb.forward(shift_plane(x, 8, 4));
  const std::size_t div[3] = {1, 2, 4};
  for (std::size_t s = 0; s < 3; ++s) {
    const auto expect = shift_plane(a.scales[s], 8 / div[s], 4 / div[s]);
    EXPECT_LT(cpalign::numerics::max_abs_difference(expect, b.scales[s]), 1e-9) << "scale " << s;
  }
}

TEST(Backbone, ArchiveRoundtripAndMissingNames)
{
  const auto bb = Backbone::analytic(7);
  cpalign::numerics::WeightArchive ar;
  bb.store(ar);
  const auto loaded = Backbone::from_archive(ar);
  const auto x = random_pillars(16, 16, 12);
  const auto a = bb.forward(x);
  const auto b = loaded.forward(x);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(a.scales[s], b.scales[s]);

  ar.erase("backbone.stage1.bias");
  ar.erase("backbone.stage2.weight");
  try {
    Backbone::from_archive(ar);
    FAIL() << "expected ArchiveError";
  } catch (const cpalign::numerics::ArchiveError & e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("backbone.stage1.bias"), std::string::npos);
    EXPECT_NE(msg.find("backbone.stage2.weight"), std::string::npos);
  }
}

TEST(BevProject, ShapeAndScaleIsolation)
{
  const auto bb = Backbone::analytic(2);
  const auto proj = BevProjector::analytic(2);
  const auto ms = bb.forward(random_pillars(16, 16, 13));
  const auto bev = proj.project(ms);
  EXPECT_EQ(bev.channels(), kBevChannels);
  EXPECT_EQ(bev.height(), 16u);
  EXPECT_EQ(bev.width(), 16u);

  // Perturbing the large scale only moves channels 0..127.
  auto ms2 = ms;
  for (double & v : ms2.scales[0].data()) v += 0.5;
  const auto bev2 = proj.project(ms2);
  double moved_large = 0.0, moved_rest = 0.0;
  for (std::size_t c = 0; c < kBevChannels; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const double d = std::abs(bev.at(c, y, x) - bev2.at(c, y, x));
        (c < kBevChannelsPerScale ? moved_large : moved_rest) += d;
      }
  EXPECT_GT(moved_large, 0.0);
  EXPECT_EQ(moved_rest, 0.0);
}

TEST(BevProject, LinearInFeatures)
{
  const auto proj = BevProjector::analytic(3);
  const auto bb = Backbone::analytic(3);
  const auto a = bb.forward(random_pillars(16, 16, 14));
  const auto b = bb.forward(random_pillars(16, 16, 15));
  MultiScaleFeatures mix;
  for (std::size_t s = 0; s < 3; ++s) {
    mix.scales[s] = cpalign::numerics::axpy(cpalign::numerics::scale(a.scales[s], 2.0), -3.0, b.scales[s]);
  }
  const auto lhs = proj.project(mix);
  const auto rhs = cpalign::numerics::axpy(cpalign::numerics::scale(proj.project(a), 2.0), -3.0, proj.project(b));
  EXPECT_LT(cpalign::numerics::max_abs_difference(lhs, rhs), 1e-9);
}

TEST(BevProject, CarrierIsOccupancy)
{
  const auto x = random_pillars(16, 16, 16);
  const auto bev = BevProjector::analytic(1).project(Backbone::analytic(1).forward(x));
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_DOUBLE_EQ(bev.at(0, y, c), x.at(0, y, c));
}

TEST(BevProject, RejectsMismatchedScales)
{
  const auto bb = Backbone::analytic(1);
  auto ms = bb.forward(Tensor3(kPillarChannels, 16, 16));
  ms.scales[2] = Tensor3(256, 8, 8);
  EXPECT_THROW(BevProjector::analytic(1).project(ms), cpalign::numerics::ShapeError);
}

TEST(BevProject, ArchiveRoundtrip)
{
  const auto proj = BevProjector::analytic(8);
  cpalign::numerics::WeightArchive ar;
  proj.store(ar);
  EXPECT_EQ(ar.at("bevproj.deconv2.weight").dims, (std::vector<std::uint32_t>{256, 128, 4, 4}));
  const auto loaded = BevProjector::from_archive(ar);
  const auto ms = Backbone::analytic(8).forward(random_pillars(16, 16, 17));
  EXPECT_EQ(proj.project(ms), loaded.project(ms));
  ar.erase("bevproj.deconv0.weight");
  EXPECT_THROW(BevProjector::from_archive(ar), cpalign::numerics::ArchiveError);
}
