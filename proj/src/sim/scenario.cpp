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

#include "cpalign/sim/scenario.hpp"

#include "cpalign/numerics/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cpalign::sim
{

namespace
{

constexpr double kTimeSlack = 1e-9;

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

double lerp_angle(double a, double b, double f)
{
  return pointcloud::normalize_angle(a + f * pointcloud::normalize_angle(b - a));
}

}  // namespace

std::string to_string(Template t)
{
  switch (t) {
    case Template::straight:
      return "straight";
    case Template::crossing:
      return "crossing";
    case Template::turning:
      return "turning";
  }
  return "unknown";
}

Template template_from_string(const std::string & name)
{
  if (name == "straight") return Template::straight;
  if (name == "crossing") return Template::crossing;
  if (name == "turning") return Template::turning;
  throw std::invalid_argument("unknown scenario template '" + name + "' (straight, crossing, turning)");
}

void RenderConfig::validate() const
{
  if (!finite_positive(surface_density) || !finite_positive(min_distance) || !finite_positive(ground_half_extent)) {
    throw std::invalid_argument("render config: densities and distances must be positive");
  }
  if (!std::isfinite(ground_density) || ground_density < 0.0) {
    throw std::invalid_argument("render config: ground density must be >= 0");
  }
  if (!std::isfinite(object_intensity) || !std::isfinite(ground_intensity)) {
    throw std::invalid_argument("render config: intensities must be finite");
  }
}

void ScenarioConfig::validate() const
{
  if (!finite_positive(frame_period)) throw std::invalid_argument("scenario: frame period must be > 0");
  if (!std::isfinite(duration) || duration < 0.0) throw std::invalid_argument("scenario: duration must be >= 0");
  const double frames = duration / frame_period;
  if (std::abs(frames - std::round(frames)) > 1e-6) {
    throw std::invalid_argument("scenario: duration must be a whole number of frame periods");
  }
  if (!std::isfinite(speed) || !std::isfinite(yaw_rate)) throw std::invalid_argument("scenario: kinematics must be finite");
  if (!finite_positive(length) || !finite_positive(width) || !finite_positive(height)) {
    throw std::invalid_argument("scenario: object dimensions must be positive");
  }
  if (agents.empty()) throw std::invalid_argument("scenario: at least one agent (the ego) is required");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    agents[i].pose.validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (agents[j].id == agents[i].id) {
        throw std::invalid_argument("scenario: duplicate agent id " + std::to_string(agents[i].id));
      }
    }
  }
  render.validate();
}

void Scenario::validate() const
{
  if (!finite_positive(frame_period)) throw std::invalid_argument("scenario: frame period must be > 0");
  const std::size_t n = frame_count();
  for (const auto & a : agents) {
    if (a.poses.size() != n) throw std::invalid_argument("scenario: agent track length disagrees with duration");
  }
  for (const auto & o : objects) {
    if (o.states.size() != n) throw std::invalid_argument("scenario: object track length disagrees with duration");
  }
  if (agents.empty()) throw std::invalid_argument("scenario: no agents");
  render.validate();
}

std::size_t Scenario::frame_count() const
{
  return static_cast<std::size_t>(std::llround(duration / frame_period)) + 1;
}

const AgentTrack & Scenario::agent(int id) const
{
  for (const auto & a : agents) {
    if (a.id == id) return a;
  }
  throw std::out_of_range("scenario: unknown agent " + std::to_string(id));
}

namespace
{

struct FrameBlend
{
  std::size_t k;
  double f;
};

FrameBlend locate(const Scenario & s, double t)
{
  if (!std::isfinite(t) || t < -kTimeSlack || t > s.duration + kTimeSlack) {
    throw std::invalid_argument(
      "scenario: time " + std::to_string(t) + " s outside [0, " + std::to_string(s.duration) + "]");
  }
  const double pos = std::clamp(t / s.frame_period, 0.0, static_cast<double>(s.frame_count() - 1));
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) return {static_cast<std::size_t>(nearest), 0.0};
  const auto k = static_cast<std::size_t>(std::floor(pos));
  return {k, pos - static_cast<double>(k)};
}

}  // namespace

Pose2 Scenario::agent_pose(int id, double t) const
{
  const auto & track = agent(id);
  const auto [k, f] = locate(*this, t);
  const auto & a = track.poses[k];
  if (f == 0.0) return a;
  const auto & b = track.poses[k + 1];
  return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), lerp_angle(a.yaw, b.yaw, f)};
}

OrientedBox Scenario::object_at(std::size_t index, double t) const
{
  const auto & track = objects.at(index);
  const auto [k, f] = locate(*this, t);
  OrientedBox box = track.states[k];
  if (f == 0.0) return box;
  const auto & b = track.states[k + 1];
  box.cx += f * (b.cx - box.cx);
  box.cy += f * (b.cy - box.cy);
  box.yaw = lerp_angle(box.yaw, b.yaw, f);
  return box;
}

std::vector<OrientedBox> Scenario::objects_at(double t) const
{
  std::vector<OrientedBox> out;
  out.reserve(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) out.push_back(object_at(i, t));
  return out;
}

Scenario generate_scenario(const ScenarioConfig & config)
{
  config.validate();
  Scenario s;
  s.duration = config.duration;
  s.frame_period = config.frame_period;
  s.seed = config.seed;
  s.render = config.render;
  const std::size_t frames = s.frame_count();

  for (const auto & a : config.agents) s.agents.push_back({a.id, std::vector<Pose2>(frames, a.pose)});

  // Box centres sit on 0.4 m cell centres so integer-cell motion stays grid aligned.
  for (std::size_t k = 0; k < config.object_count; ++k) {
    OrientedBox box;
    box.length = config.length;
    box.width = config.width;
    box.height = config.height;
    box.cz = config.height / 2.0;
    ObjectTrack track;
    const double lane = 4.0 * static_cast<double>(k / 2);
    switch (config.kind) {
      case Template::straight:
        box.cx = -8.2;
        box.cy = -2.2 + 4.0 * static_cast<double>(k);
        track.vx = config.speed;
        break;
      case Template::crossing:
        if (k % 2 == 0) {
          box.cx = -10.2;
          box.cy = 5.8 + lane;
          track.vx = config.speed;
        } else {
          box.cx = 5.8 + lane;
          box.cy = -10.2;
          box.yaw = std::numbers::pi / 2.0;
          track.vy = config.speed;
        }
        break;
      case Template::turning:
        box.cx = -6.2;
        box.cy = -6.2 + 4.0 * static_cast<double>(k);
        track.vx = config.speed;
        track.yaw_rate = config.yaw_rate;
        break;
    }
    track.states.reserve(frames);
    track.states.push_back(box);
    const double dt = config.frame_period;
    for (std::size_t f = 1; f < frames; ++f) {
      OrientedBox next = track.states.back();
      const double w = track.yaw_rate;
      if (w == 0.0) {
        next.cx += track.vx * dt;
        next.cy += track.vy * dt;
      } else {
        // Exact arc over one step at constant speed and yaw rate.
        const double v = std::hypot(track.vx, track.vy);
        const double h0 = std::atan2(track.vy, track.vx) + (next.yaw - track.states.front().yaw);
        next.cx += v / w * (std::sin(h0 + w * dt) - std::sin(h0));
        next.cy += v / w * (std::cos(h0) - std::cos(h0 + w * dt));
        next.yaw = pointcloud::normalize_angle(next.yaw + w * dt);
      }
      track.states.push_back(next);
    }
    s.objects.push_back(std::move(track));
  }
  s.validate();
  return s;
}

OrientedBox to_agent_frame(const OrientedBox & world, const Pose2 & agent)
{
  OrientedBox local = world;
  const auto c = agent.to_local({world.cx, world.cy});
  local.cx = c.x;
  local.cy = c.y;
  local.yaw = pointcloud::normalize_angle(world.yaw - agent.yaw);
  return local;
}

namespace
{

double surface_area(const OrientedBox & b)
{
  return b.length * b.width + 2.0 * b.height * (b.length + b.width);
}

}  // namespace

std::size_t surface_point_count(const OrientedBox & box, double distance, const RenderConfig & render)
{
  const double d = std::max(distance, render.min_distance);
  const double n = std::round(render.surface_density * surface_area(box) / (d * d));
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

pointcloud::PointCloud render_pointcloud(const Scenario & scenario, int agent, double t)
{
  const Pose2 pose = scenario.agent_pose(agent, t);
  const auto agent_key = static_cast<std::uint64_t>(static_cast<std::int64_t>(agent));
  const auto & render = scenario.render;
  pointcloud::PointCloud cloud;

  for (std::size_t i = 0; i < scenario.objects.size(); ++i) {
    const OrientedBox box = to_agent_frame(scenario.object_at(i, t), pose);
    const std::size_t n = surface_point_count(box, std::hypot(box.cx, box.cy), render);
    auto rng = numerics::make_rng(scenario.seed, {numerics::label_key("render.object"), agent_key, i});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double hl = box.length / 2.0, hw = box.width / 2.0, hh = box.height / 2.0;
    const double top = box.length * box.width;
    const double ends = box.width * box.height;   // one face at x = +-hl
    const double sides = box.length * box.height;  // one face at y = +-hw
    const double total = top + 2.0 * ends + 2.0 * sides;
    const double cs = std::cos(box.yaw), sn = std::sin(box.yaw);
    for (std::size_t k = 0; k < n; ++k) {
      const double pick = unit(rng) * total;
      const double u = unit(rng), v = unit(rng);
      double lx, ly, lz;
      if (pick < top) {
        lx = (2 * u - 1) * hl, ly = (2 * v - 1) * hw, lz = hh;
      } else if (pick < top + 2 * ends) {
        lx = pick < top + ends ? hl : -hl, ly = (2 * u - 1) * hw, lz = (2 * v - 1) * hh;
      } else {
        lx = (2 * u - 1) * hl, ly = pick < top + 2 * ends + sides ? hw : -hw, lz = (2 * v - 1) * hh;
      }
      cloud.push_back(
        {box.cx + cs * lx - sn * ly, box.cy + sn * lx + cs * ly, box.cz + lz, render.object_intensity});
    }
  }

  const double e = render.ground_half_extent;
  const auto ground = static_cast<std::size_t>(std::llround(render.ground_density * 4.0 * e * e));
  auto rng = numerics::make_rng(scenario.seed, {numerics::label_key("render.ground"), agent_key});
  std::uniform_real_distribution<double> across(-e, e);
  for (std::size_t k = 0; k < ground; ++k) {
    const double x = across(rng);
    const double y = across(rng);
    cloud.push_back({x, y, 0.0, render.ground_intensity});
  }
  return cloud;
}

}  // namespace cpalign::sim
