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

#ifndef CPALIGN__SIM__SCENARIO_HPP_
#define CPALIGN__SIM__SCENARIO_HPP_

#include "cpalign/domain/domain.hpp"
#include "cpalign/pointcloud/pointcloud.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cpalign::sim
{

using domain::Pose2;
using pointcloud::OrientedBox;

enum class Template { straight, crossing, turning };

std::string to_string(Template t);
/// Throws std::invalid_argument on an unknown name.
Template template_from_string(const std::string & name);

struct RenderConfig
{
  /// Object surface points = max(1, round(surface_density * area / d^2)).
  double surface_density = 20000.0;
  double min_distance = 1.0;       // m, keeps the 1/d^2 law finite
  double ground_density = 0.05;    // points per m^2
  double ground_half_extent = 12.8;  // m, square around the agent
  double object_intensity = 0.6;
  double ground_intensity = 0.1;

  void validate() const;
  friend bool operator==(const RenderConfig &, const RenderConfig &) = default;
};

struct AgentSpec
{
  int id = 0;
  Pose2 pose;
};

struct ScenarioConfig
{
  Template kind = Template::crossing;
  std::uint64_t seed = 7;
  double duration = 2.0;      // s
  double frame_period = 0.1;  // s
  double speed = 4.0;         // m/s
  std::size_t object_count = 2;
  double yaw_rate = 0.3;      // rad/s, turning template only
  double length = 4.3;
  double width = 1.9;
  double height = 1.5;
  /// The first agent is the ego; the rest are static collaborators.
  std::vector<AgentSpec> agents = {{0, {0.0, 0.0, 0.0}}, {1, {4.0, -4.0, 1.5707963267948966}}};
  RenderConfig render;

  void validate() const;
};

struct AgentTrack
{
  int id = 0;
  std::vector<Pose2> poses;  // one per frame

  friend bool operator==(const AgentTrack &, const AgentTrack &) = default;
};

struct ObjectTrack
{
  std::vector<OrientedBox> states;  // world frame, one per frame
  double vx = 0.0;
  double vy = 0.0;
  double yaw_rate = 0.0;

  friend bool operator==(const ObjectTrack &, const ObjectTrack &) = default;
};

struct Scenario
{
  std::vector<AgentTrack> agents;
  std::vector<ObjectTrack> objects;
  double duration = 0.0;
  double frame_period = 0.1;
  std::uint64_t seed = 0;
  RenderConfig render;

  /// Throws std::invalid_argument when tracks disagree with duration / frame_period.
  void validate() const;
  std::size_t frame_count() const;
  /// Throws std::out_of_range for an unknown id.
  const AgentTrack & agent(int id) const;
  /// Linear interpolation between frame samples; throws outside [0, duration].
  Pose2 agent_pose(int id, double t) const;
  OrientedBox object_at(std::size_t index, double t) const;
  std::vector<OrientedBox> objects_at(double t) const;

  friend bool operator==(const Scenario &, const Scenario &) = default;
};

/// Object kinematics integrated at the frame period. Deterministic under the seed.
Scenario generate_scenario(const ScenarioConfig & config);

/// Box expressed in an agent frame.
OrientedBox to_agent_frame(const OrientedBox & world, const Pose2 & agent);

/// Surface samples of every object (top and four sides) plus ground points, in
/// the agent frame. Sample positions are seeded per (seed, agent, object) and do
/// not depend on t. Throws std::out_of_range for an unknown agent.
pointcloud::PointCloud render_pointcloud(const Scenario & scenario, int agent, double t);

/// Number of surface points one object receives at planar distance d.
std::size_t surface_point_count(const OrientedBox & box, double distance, const RenderConfig & render);

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__SCENARIO_HPP_
