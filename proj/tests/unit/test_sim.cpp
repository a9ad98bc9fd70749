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

#include "cpalign/fusion/fusion.hpp"
#include "cpalign/numerics/random.hpp"
#include "cpalign/sim/complexity.hpp"
#include "cpalign/sim/io.hpp"
#include "cpalign/sim/pipeline.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

using namespace cpalign::sim;
using cpalign::bev::BevSpec;
using cpalign::numerics::Tensor3;
using cpalign::pointcloud::OrientedBox;

namespace
{

Tensor3 rand_t(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed, double lo = -1, double hi = 1)
{
  auto rng = cpalign::numerics::make_rng(seed);
  return cpalign::numerics::random_tensor(c, h, w, rng, lo, hi);
}

double max_abs_diff(const Tensor3 & a, const Tensor3 & b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// One static agent at the origin and one object held at (x, 0) for two frames.
Scenario single_object_scene(double x, std::vector<Pose2> agents = {{0.0, 0.0, 0.0}})
{
  Scenario s;
  s.duration = 0.1;
  s.frame_period = 0.1;
  s.seed = 3;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    s.agents.push_back({static_cast<int>(i), {agents[i], agents[i]}});
  }
  const OrientedBox box{x, 0.0, 0.75, 4.3, 1.9, 1.5, 0.0};
  s.objects.push_back({{box, box}, 0.0, 0.0, 0.0});
  return s;
}

std::size_t object_points(const cpalign::pointcloud::PointCloud & cloud, const RenderConfig & r)
{
  std::size_t n = 0;
  for (const auto & p : cloud) n += p.intensity == r.object_intensity;
  return n;
}

// Boxes whose edges sit on 0.4 m cell edges of the default grid.
OrientedBox aligned_box(double cx, double cy)
{
  return {cx, cy, 0.75, 4.0, 2.4, 1.5, 0.0};
}

}  // namespace

// ---------------------------------------------------------------- scenarios

TEST(GenerateScenario, StraightAdvancesOneMetrePerFrame)
{
  ScenarioConfig c;
  c.kind = Template::straight;
  c.object_count = 1;
  c.speed = 10.0;
  const auto s = generate_scenario(c);
  ASSERT_EQ(s.objects.size(), 1u);
  const auto & st = s.objects[0].states;
  ASSERT_EQ(st.size(), s.frame_count());
  for (std::size_t k = 1; k < st.size(); ++k) {
    EXPECT_NEAR(std::hypot(st[k].cx - st[k - 1].cx, st[k].cy - st[k - 1].cy), 1.0, 1e-9);
  }
}

TEST(GenerateScenario, SameSeedIsIdentical)
{
  for (auto kind : {Template::straight, Template::crossing, Template::turning}) {
    ScenarioConfig c;
    c.kind = kind;
    EXPECT_EQ(generate_scenario(c), generate_scenario(c)) << to_string(kind);
  }
}

TEST(GenerateScenario, CrossingVelocitiesAreOrthogonal)
{
  const auto s = generate_scenario(ScenarioConfig{});
  ASSERT_EQ(s.objects.size(), 2u);
  const auto & a = s.objects[0];
  const auto & b = s.objects[1];
  EXPECT_GT(std::hypot(a.vx, a.vy), 0.0);
  EXPECT_GT(std::hypot(b.vx, b.vy), 0.0);
  EXPECT_EQ(a.vx * b.vx + a.vy * b.vy, 0.0);
}

TEST(GenerateScenario, TurningYawFollowsRate)
{
  ScenarioConfig c;
  c.kind = Template::turning;
  c.object_count = 1;
  const auto s = generate_scenario(c);
  const auto & st = s.objects[0].states;
  for (std::size_t k = 1; k < st.size(); ++k) {
    EXPECT_NEAR(
      cpalign::pointcloud::normalize_angle(st[k].yaw - st[k - 1].yaw), c.yaw_rate * c.frame_period, 1e-9);
  }
}

TEST(GenerateScenario, InvalidConfigThrows)
{
  ScenarioConfig c;
  c.frame_period = 0.0;
  EXPECT_THROW(generate_scenario(c), std::invalid_argument);
}

TEST(Scenario, InterpolatesBetweenFrames)
{
  const auto s = generate_scenario(ScenarioConfig{});
  const auto a = s.object_at(0, 0.5);
  const auto b = s.object_at(0, 0.6);
  const auto mid = s.object_at(0, 0.55);
  EXPECT_NEAR(mid.cx, 0.5 * (a.cx + b.cx), 1e-12);
  EXPECT_THROW(s.object_at(0, s.duration + 1.0), std::invalid_argument);
  EXPECT_THROW(s.agent(42), std::out_of_range);
}

// ---------------------------------------------------------------- rendering

TEST(RenderPointcloud, DensityFallsWithDistance)
{
  const auto near = single_object_scene(10.0);
  const auto far = single_object_scene(20.0);
  const auto n10 = object_points(render_pointcloud(near, 0, 0.0), near.render);
  const auto n20 = object_points(render_pointcloud(far, 0, 0.0), far.render);
  EXPECT_GE(n10, 3 * n20);
  EXPECT_GT(n20, 0u);
}

TEST(RenderPointcloud, FloorOfOnePointPerFace)
{
  RenderConfig r;
  r.surface_density = 1e-9;
  EXPECT_EQ(surface_point_count(aligned_box(0, 0), 100.0, r), 1u);
}

TEST(RenderPointcloud, NoObjectsGivesGroundOnly)
{
  auto s = single_object_scene(10.0);
  s.objects.clear();
  const auto cloud = render_pointcloud(s, 0, 0.0);
  ASSERT_FALSE(cloud.empty());
  for (const auto & p : cloud) {
    EXPECT_EQ(p.intensity, s.render.ground_intensity);
    EXPECT_EQ(p.z, 0.0);
  }
}

TEST(RenderPointcloud, AgentsAtDifferentPosesSeeDifferentCounts)
{
  const auto s = single_object_scene(6.0, {{0.0, 0.0, 0.0}, {-12.0, 0.0, 0.0}});
  const auto a = object_points(render_pointcloud(s, 0, 0.0), s.render);
  const auto b = object_points(render_pointcloud(s, 1, 0.0), s.render);
  EXPECT_NE(a, b);
  EXPECT_GT(a, b);
}

TEST(RenderPointcloud, DeterministicAndUnknownAgentThrows)
{
  const auto s = generate_scenario(ScenarioConfig{});
  EXPECT_EQ(render_pointcloud(s, 1, 0.5), render_pointcloud(s, 1, 0.5));
  EXPECT_THROW(render_pointcloud(s, 9, 0.5), std::out_of_range);
}

TEST(RenderPointcloud, PointsAreInAgentFrame)
{
  // Collaborator rotated by 90 degrees: a world box at +x of it appears at -y.
  const auto s = single_object_scene(10.0, {{0.0, 0.0, 0.0}, {0.0, 0.0, 1.5707963267948966}});
  const auto local = to_agent_frame(s.objects[0].states[0], s.agents[1].poses[0]);
  EXPECT_NEAR(local.cx, 0.0, 1e-12);
  EXPECT_NEAR(local.cy, -10.0, 1e-12);
  for (const auto & p : render_pointcloud(s, 1, 0.0)) {
    if (p.intensity == s.render.object_intensity) {
      EXPECT_TRUE(local.contains(p, 1.0 + 1e-9));
    }
  }
}

// -------------------------------------------------------------------- codec

TEST(Codec, IdentityIsBitExact)
{
  Payload p;
  p.names = {"a", "b"};
  p.tensors = {rand_t(3, 8, 8, 1, -5, 5), rand_t(1, 4, 4, 2)};
  p.delay.tau = 0.3;
  const auto tx = transmit(p, {CodecMode::identity});
  EXPECT_EQ(tx.received.tensors, p.tensors);
  EXPECT_EQ(tx.received.names, p.names);
  EXPECT_EQ(tx.received.delay.tau, 0.3);
  EXPECT_EQ(tx.total_mse, 0.0);
  for (double m : tx.mse) EXPECT_EQ(m, 0.0);
}

TEST(Codec, Int8ErrorWithinHalfStep)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = rand_t(4, 16, 16, seed);
    const double scale = int8_scale(t);
    const auto q = quantize_dequantize(t, CodecMode::int8);
    // Rounding to the nearest step leaves at most half a step, plus a few ulps
    // from the divide and multiply.
    EXPECT_LE(max_abs_diff(t, q), scale / 2.0 * (1.0 + 1e-12));
  }
}

TEST(Codec, Fp16BeatsInt8OnUniformPayloads)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Payload p;
    p.names = {"x"};
    p.tensors = {rand_t(8, 16, 16, 100 + seed)};
    const auto h = transmit(p, {CodecMode::fp16});
    const auto i = transmit(p, {CodecMode::int8});
    EXPECT_GT(h.total_mse, 0.0);
    EXPECT_LE(h.total_mse, i.total_mse);
  }
}

TEST(Codec, ZeroTensorAndNames)
{
  const Tensor3 z(2, 3, 3);
  EXPECT_EQ(quantize_dequantize(z, CodecMode::int8), z);
  EXPECT_EQ(codec_from_string(to_string(CodecMode::fp16)), CodecMode::fp16);
  EXPECT_THROW(codec_from_string("zip"), std::invalid_argument);
}

// ---------------------------------------------------------------- detection

TEST(Detection, PerfectMapGivesApOne)
{
  const BevSpec spec;
  const std::vector<OrientedBox> gt = {aligned_box(-4.0, 4.0), aligned_box(6.0, -5.2)};
  const auto map = cpalign::fusion::rasterize_footprints(gt, spec);
  const auto ev = evaluate_detection(map, gt, spec);
  EXPECT_EQ(ev.ap50, 1.0);
  EXPECT_EQ(ev.ap70, 1.0);
  EXPECT_NEAR(ev.mean_best_iou, 1.0, 1e-12);
}

TEST(Detection, EmptyMapGivesApZero)
{
  const BevSpec spec;
  const std::vector<OrientedBox> gt = {aligned_box(0.0, 0.0)};
  const auto ev = evaluate_detection(Tensor3(1, spec.height(), spec.width()), gt, spec);
  EXPECT_EQ(ev.ap50, 0.0);
  EXPECT_EQ(ev.ap70, 0.0);
  EXPECT_EQ(ev.mean_best_iou, 0.0);
}

TEST(Detection, OneOfTwoBoxesMatchesPrOracle)
{
  const BevSpec spec;
  const std::vector<OrientedBox> gt = {aligned_box(-4.0, 4.0), aligned_box(6.0, -5.2)};
  // Box 0 found with score 0.9; a false blob elsewhere scores 0.95; box 1 missed.
  Tensor3 map(1, spec.height(), spec.width());
  const std::vector<OrientedBox> first = {gt[0]};
  const auto fp_box = std::vector<OrientedBox>{aligned_box(-6.0, -8.0)};
  const auto m0 = cpalign::fusion::rasterize_footprints(first, spec);
  const auto m1 = cpalign::fusion::rasterize_footprints(fp_box, spec);
  for (std::size_t i = 0; i < map.size(); ++i) {
    map.data()[i] = 0.9 * m0.data()[i] + 0.95 * m1.data()[i];
  }
  const auto ev = evaluate_detection(map, gt, spec);
  const std::vector<double> scores = {0.95, 0.9};
  const bool tp[] = {false, true};
  const double expected = cpalign::oracle::eleven_point_ap(scores, tp, 2);
  EXPECT_NEAR(ev.ap50, expected, 1e-12);
  EXPECT_NEAR(ev.ap70, expected, 1e-12);
  EXPECT_NEAR(expected, 6.0 / 11.0 * 0.5, 1e-12);
}

TEST(Detection, BevIouOfRotatedSquares)
{
  const OrientedBox a{0, 0, 0, 2, 2, 1, 0};
  OrientedBox b = a;
  b.yaw = 0.7853981633974483;
  // Octagon area of two unit-half-width squares at 45 degrees: 8 (sqrt 2 - 1).
  const double inter = 8.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(bev_iou(a, b), inter / (8.0 - inter), 1e-12);
  b.cx = 5.0;
  EXPECT_EQ(bev_iou(a, b), 0.0);
}

TEST(Detection, SmallComponentsDropped)
{
  const BevSpec spec;
  Tensor3 map(1, spec.height(), spec.width());
  for (std::size_t c = 10; c < 15; ++c) map.at(0, 20, c) = 1.0;  // 5 cells
  EXPECT_TRUE(detect(map, spec).empty());
  map.at(0, 21, 10) = 1.0;
  ASSERT_EQ(detect(map, spec).size(), 1u);
}

// --------------------------------------------------------------- complexity

TEST(Complexity, ClosedFormAnchors)
{
  const auto g = count_similarity_ops(64, 256, 128, 16, SimilarityMode::global);
  const auto b = count_similarity_ops(64, 256, 128, 16, SimilarityMode::blockwise);
  EXPECT_EQ(g.mul, 6356992u);
  EXPECT_EQ(b.mul, 11571712u);
  EXPECT_EQ(window_count(256, 128, 16), 233u);
  const double ratio = static_cast<double>(b.mul) / static_cast<double>(g.mul);
  EXPECT_NEAR(ratio, 233.0 / 128.0, 1e-12);
}

TEST(Complexity, DegenerateTilingEqualsGlobal)
{
  for (std::size_t n : {8u, 16u, 32u}) {
    EXPECT_EQ(
      count_similarity_ops(5, n, n, n, SimilarityMode::blockwise),
      count_similarity_ops(5, n, n, n, SimilarityMode::global));
  }
}

TEST(Complexity, InstrumentedCounterMatchesClosedForm)
{
  const auto a = rand_t(4, 32, 16, 1);
  const auto b = rand_t(4, 32, 16, 2);
  const auto blk = cpalign::temporal::temporal_loss(a, b, 8);
  EXPECT_EQ(blk.ops.mul, count_similarity_ops(4, 32, 16, 8, SimilarityMode::blockwise).mul);
  const auto sq_a = rand_t(3, 16, 16, 3);
  const auto sq_b = rand_t(3, 16, 16, 4);
  const auto glob = cpalign::temporal::temporal_loss(sq_a, sq_b, 16);
  EXPECT_EQ(glob.ops.mul, count_similarity_ops(3, 16, 16, 16, SimilarityMode::global).mul);
}

// --------------------------------------------------------------- ideal flow

TEST(IdealMotion, TransportsRasterizedBoxExactly)
{
  const BevSpec spec;
  const OrientedBox from = aligned_box(-6.0, 2.0);
  OrientedBox to = from;
  to.cx += 2.0;  // 5 cells
  to.cy -= 0.8;  // 2 cells
  const std::vector<BoxMotion> motion = {{from, to}};
  for (double xi : {1.0, 2.5}) {
    const auto field = ideal_motion_field(motion, spec, 0, xi);
    const std::vector<OrientedBox> fb = {from}, tb = {to};
    const auto src = cpalign::fusion::rasterize_footprints(fb, spec);
    const auto dst = cpalign::fusion::rasterize_footprints(tb, spec);
    const auto warped = cpalign::temporal::warp_features(src, field, xi);
    EXPECT_LE(max_abs_diff(warped, dst), 1e-12) << "xi " << xi;
  }
}

TEST(IdealMotion, NonPositiveXiIsIdentity)
{
  const BevSpec spec;
  const std::vector<BoxMotion> motion = {{aligned_box(0, 0), aligned_box(2, 0)}};
  const auto field = ideal_motion_field(motion, spec, 1, 0.0);
  const auto id = cpalign::temporal::MotionField::identity(spec.height() / 2, spec.width() / 2);
  EXPECT_EQ(field.displacement, id.displacement);
  EXPECT_EQ(field.weight, id.weight);
  EXPECT_THROW(ideal_motion_field(motion, spec, 3, 1.0), std::invalid_argument);
}

// ----------------------------------------------------------------- pipeline

class PipelineTest : public ::testing::Test
{
protected:
  static void SetUpTestSuite()
  {
    scenario_ = std::make_unique<Scenario>(generate_scenario(ScenarioConfig{}));
    pipeline_ = std::make_unique<Pipeline>(Pipeline::analytic(scenario_->seed, BevSpec{}));
    ego_ = std::make_unique<EgoView>(pipeline_->observe_ego(*scenario_, kT, PhdSettings{}));
  }
  static void TearDownTestSuite()
  {
    ego_.reset();
    pipeline_.reset();
    scenario_.reset();
  }

  static FrameReport run(const RunOptions & o) { return pipeline_->run(*scenario_, kT, o, ego_.get()); }

  static constexpr double kT = 1.6;
  static inline std::unique_ptr<Scenario> scenario_;
  static inline std::unique_ptr<Pipeline> pipeline_;
  static inline std::unique_ptr<EgoView> ego_;
};

TEST_F(PipelineTest, ZeroDelayPtamOnOffIdentical)
{
  RunOptions off;
  off.ptam.enabled = false;
  RunOptions on;
  const auto a = run(off);
  const auto b = run(on);
  EXPECT_FALSE(b.compensated);
  EXPECT_LE(max_abs_diff(a.fused_map, b.fused_map), 1e-6);
  EXPECT_EQ(a.detections.size(), b.detections.size());
}

TEST_F(PipelineTest, NoiselessUsesExactPose)
{
  RunOptions o;
  o.tau = 0.2;
  const auto r = run(o);
  EXPECT_TRUE(r.noiseless);
  const auto exact = scenario_->agent_pose(1, kT - o.tau);
  EXPECT_EQ(r.collaborator_pose.x, exact.x);
  EXPECT_EQ(r.collaborator_pose.y, exact.y);
  EXPECT_EQ(r.collaborator_pose.yaw, exact.yaw);

  o.noise.sigma_local = 0.4;
  o.noise.sigma_head_deg = 0.6;
  const auto n = run(o);
  EXPECT_FALSE(n.noiseless);
  EXPECT_NE(n.collaborator_pose.x, exact.x);
}

TEST_F(PipelineTest, CompensationRecoversTruthTimeFeatures)
{
  RunOptions o;
  o.tau = 0.5;
  const auto r = run(o);
  EXPECT_TRUE(r.compensated);
  EXPECT_EQ(r.max_displacement_cells, 5.0);
  for (double xi : r.xi) EXPECT_NEAR(xi, 5.0, 1e-12);
  EXPECT_GE(r.cosine_post, r.cosine_pre);
  EXPECT_EQ(r.payload_names.size(), 9u);
}

TEST_F(PipelineTest, PreCosineNonIncreasingInDelay)
{
  RunOptions o;
  o.ptam.enabled = false;
  double last = 2.0;
  for (double tau : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}) {
    o.tau = tau;
    const auto r = run(o);
    EXPECT_LE(r.cosine_pre, last + 1e-12) << "tau " << tau;
    last = r.cosine_pre;
  }
}

TEST_F(PipelineTest, DeterministicReports)
{
  RunOptions o;
  o.tau = 0.3;
  o.codec.mode = CodecMode::int8;
  o.noise.sigma_local = 0.2;
  const auto a = run(o);
  const auto b = run(o);
  EXPECT_EQ(a.fused_map, b.fused_map);
  EXPECT_EQ(a.codec_mse, b.codec_mse);
  EXPECT_EQ(a.cosine_post, b.cosine_post);
  EXPECT_EQ(a.collaborator_pose.x, b.collaborator_pose.x);
  ASSERT_EQ(a.detections.size(), b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) EXPECT_EQ(a.detections[i].box, b.detections[i].box);
}

TEST_F(PipelineTest, RejectsTooEarlyFrames)
{
  RunOptions o;
  o.tau = 0.5;
  EXPECT_THROW(pipeline_->run(*scenario_, 0.5, o), std::invalid_argument);
}

TEST(Sweep, CsvHeaderAndPrecision)
{
  std::ostringstream out;
  const std::vector<SweepRow> rows = {{"iou_ptam", 0.1, 100.0, 0.2, 0.4}};
  write_csv(out, rows);
  EXPECT_EQ(out.str(), std::string(kCsvHeader) + "\niou_ptam,0.10000000000000001,100,0.20000000000000001,0.40000000000000002\n");
}

// ------------------------------------------------------------------- config

TEST(Config, DefaultsWhenEmpty)
{
  const auto c = parse_config("{}");
  EXPECT_EQ(c.scenario.kind, Template::crossing);
  EXPECT_EQ(c.window, 16u);
  EXPECT_EQ(c.sweep.tau_ms.size(), 6u);
}

TEST(Config, RoundTripsThroughDump)
{
  auto c = parse_config(R"({"scenario": {"template": "turning", "objects": 3, "yaw_rate_dps": 10},
                            "ptam": {"xi": "learned", "window": 8}, "codec": {"mode": "int8"},
                            "sweep": {"tau_ms": [0, 250], "threads": 2}})");
  EXPECT_EQ(c.scenario.kind, Template::turning);
  EXPECT_EQ(c.scenario.object_count, 3u);
  EXPECT_EQ(c.ptam.xi, cpalign::temporal::XiMode::learned);
  EXPECT_EQ(c.window, 8u);
  EXPECT_EQ(c.codec.mode, CodecMode::int8);
  const auto d = parse_config(dump_config(c));
  EXPECT_EQ(dump_config(d), dump_config(c));
  EXPECT_EQ(generate_scenario(d.scenario), generate_scenario(c.scenario));
}

TEST(Config, ErrorsCarryJsonPath)
{
  auto path_of = [](const std::string & text) {
    try {
      parse_config(text);
    } catch (const ConfigError & e) {
      return e.path();
    }
    return std::string("<no error>");
  };
  EXPECT_EQ(path_of(R"({"scenario": {"agents": [{"id": 0}, {"id": 1, "z": 2}]}})"), "scenario.agents[1].z");
  EXPECT_EQ(path_of(R"({"bev": {"cell_m": "big"}})"), "bev.cell_m");
  EXPECT_EQ(path_of(R"({"codec": {"mode": "zip"}})"), "codec.mode");
  EXPECT_EQ(path_of(R"({"sweep": {"tau_ms": [0, "x"]}})"), "sweep.tau_ms[1]");
  EXPECT_EQ(path_of(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(path_of(R"({"bev": {"cell_m": 0.3}})"), "bev");
  EXPECT_EQ(path_of("{"), "");
}

TEST(ScenarioJson, RoundTripIsExact)
{
  for (auto kind : {Template::straight, Template::crossing, Template::turning}) {
    ScenarioConfig c;
    c.kind = kind;
    const auto s = generate_scenario(c);
    EXPECT_EQ(parse_scenario(scenario_to_json(s)), s) << to_string(kind);
  }
  EXPECT_THROW(parse_scenario(R"({"agents": []})"), ConfigError);
}
