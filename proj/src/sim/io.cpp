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

#include "cpalign/sim/io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

namespace cpalign::sim
{

using nlohmann::json;

ConfigError::ConfigError(std::string path, const std::string & message)
: std::runtime_error("config: " + (path.empty() ? std::string("<root>") : path) + ": " + message),
  path_(std::move(path))
{
}

namespace
{

constexpr double kDeg = std::numbers::pi / 180.0;

std::string join(const std::string & path, const std::string & key)
{
  return path.empty() ? key : path + "." + key;
}

double as_number(const json & j, const std::string & path)
{
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

std::uint64_t as_uint(const json & j, const std::string & path)
{
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

int as_int(const json & j, const std::string & path)
{
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

bool as_bool(const json & j, const std::string & path)
{
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json & j, const std::string & path)
{
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> as_numbers(const json & j, const std::string & path, std::size_t exact = 0)
{
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  if (exact != 0 && j.size() != exact) throw ConfigError(path, "expected " + std::to_string(exact) + " numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

/// Tracks which keys of one object were consumed so leftovers can be rejected.
class Section
{
public:
  Section(const json & j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  void field(const char * key, const std::function<void(const json &, const std::string &)> & read)
  {
    seen_.insert(key);
    if (j_.contains(key)) read(j_.at(key), join(path_, key));
  }

  void number(const char * key, double & out)
  {
    field(key, [&](const json & j, const std::string & p) { out = as_number(j, p); });
  }

  void finish() const
  {
    for (const auto & item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(join(path_, item.key()), "unknown key");
    }
  }

private:
  const json & j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto checked(const std::string & path, F && f)
{
  try {
    return f();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::exception & e) {
    throw ConfigError(path, e.what());
  }
}

json parse_json(const std::string & text)
{
  try {
    return json::parse(text);
  } catch (const json::parse_error & e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
}

// --------------------------------------------------------------- sections

void read_render(const json & j, const std::string & path, RenderConfig & r)
{
  Section s(j, path);
  s.number("surface_density", r.surface_density);
  s.number("min_distance_m", r.min_distance);
  s.number("ground_density", r.ground_density);
  s.number("ground_half_extent_m", r.ground_half_extent);
  s.number("object_intensity", r.object_intensity);
  s.number("ground_intensity", r.ground_intensity);
  s.finish();
  checked(path, [&] { r.validate(); });
}

void read_scenario(const json & j, const std::string & path, ScenarioConfig & c)
{
  Section s(j, path);
  s.field("template", [&](const json & v, const std::string & p) {
    c.kind = checked(p, [&] { return template_from_string(as_string(v, p)); });
  });
  s.field("seed", [&](const json & v, const std::string & p) { c.seed = as_uint(v, p); });
  s.number("duration_s", c.duration);
  s.number("frame_period_s", c.frame_period);
  s.number("speed_mps", c.speed);
  s.field("objects", [&](const json & v, const std::string & p) { c.object_count = as_uint(v, p); });
  s.field("yaw_rate_dps", [&](const json & v, const std::string & p) { c.yaw_rate = as_number(v, p) * kDeg; });
  s.field("size_m", [&](const json & v, const std::string & p) {
    const auto d = as_numbers(v, p, 3);
    c.length = d[0], c.width = d[1], c.height = d[2];
  });
  s.field("agents", [&](const json & v, const std::string & p) {
    if (!v.is_array()) throw ConfigError(p, "expected an array of agents");
    c.agents.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string ap = p + "[" + std::to_string(i) + "]";
      AgentSpec a;
      Section as(v[i], ap);
      as.field("id", [&](const json & x, const std::string & xp) { a.id = as_int(x, xp); });
      as.number("x", a.pose.x);
      as.number("y", a.pose.y);
      as.field("yaw_deg", [&](const json & x, const std::string & xp) { a.pose.yaw = as_number(x, xp) * kDeg; });
      as.finish();
      c.agents.push_back(a);
    }
  });
  s.field("render", [&](const json & v, const std::string & p) { read_render(v, p, c.render); });
  s.finish();
  checked(path, [&] { c.validate(); });
}

void read_bev(const json & j, const std::string & path, bev::BevSpec & b)
{
  Section s(j, path);
  s.number("cell_m", b.cell);
  s.field("x_range_m", [&](const json & v, const std::string & p) {
    const auto r = as_numbers(v, p, 2);
    b.x_min = r[0], b.x_max = r[1];
  });
  s.field("y_range_m", [&](const json & v, const std::string & p) {
    const auto r = as_numbers(v, p, 2);
    b.y_min = r[0], b.y_max = r[1];
  });
  s.finish();
  checked(path, [&] { b.validate(); });
}

void read_phd(const json & j, const std::string & path, PhdSettings & phd)
{
  Section s(j, path);
  s.field("enabled", [&](const json & v, const std::string & p) { phd.enabled = as_bool(v, p); });
  s.number("distance_threshold_m", phd.config.distance_threshold);
  s.field("max_objects", [&](const json & v, const std::string & p) { phd.config.max_objects = as_uint(v, p); });
  s.number("alpha", phd.config.inner_scale);
  s.number("beta_in", phd.config.inner_ratio);
  s.number("beta_out", phd.config.outer_ratio);
  s.field("seed", [&](const json & v, const std::string & p) { phd.config.seed = as_uint(v, p); });
  s.finish();
  checked(path, [&] { phd.config.validate(); });
}

void read_ptam(const json & j, const std::string & path, PtamSettings & ptam, std::size_t & window)
{
  Section s(j, path);
  s.field("enabled", [&](const json & v, const std::string & p) { ptam.enabled = as_bool(v, p); });
  s.field("xi", [&](const json & v, const std::string & p) {
    const auto name = as_string(v, p);
    if (name == "oracle") ptam.xi = temporal::XiMode::oracle;
    else if (name == "learned") ptam.xi = temporal::XiMode::learned;
    else throw ConfigError(p, "expected \"oracle\" or \"learned\"");
  });
  s.field("flow", [&](const json & v, const std::string & p) {
    const auto name = as_string(v, p);
    if (name == "ideal") ptam.flow = FlowSource::ideal;
    else if (name == "estimated") ptam.flow = FlowSource::estimated;
    else throw ConfigError(p, "expected \"ideal\" or \"estimated\"");
  });
  s.field("stage1_source", [&](const json & v, const std::string & p) {
    const auto name = as_string(v, p);
    if (name == "previous") ptam.stage1_source = temporal::Stage1Source::previous;
    else if (name == "latest") ptam.stage1_source = temporal::Stage1Source::latest;
    else throw ConfigError(p, "expected \"previous\" or \"latest\"");
  });
  s.field("stage2_displacement", [&](const json & v, const std::string & p) {
    const auto name = as_string(v, p);
    if (name == "scaled") ptam.stage2_displacement = temporal::Stage2Displacement::scaled_stage2;
    else if (name == "literal") ptam.stage2_displacement = temporal::Stage2Displacement::stage1_literal;
    else throw ConfigError(p, "expected \"scaled\" or \"literal\"");
  });
  s.field("window", [&](const json & v, const std::string & p) {
    window = as_uint(v, p);
    if (window == 0) throw ConfigError(p, "window must be positive");
  });
  s.finish();
}

void read_ifam(const json & j, const std::string & path, IfamSettings & ifam)
{
  Section s(j, path);
  s.number("epsilon", ifam.epsilon);
  s.field("combine", [&](const json & v, const std::string & p) {
    const auto name = as_string(v, p);
    if (name == "add") ifam.combine = fusion::Combine::add;
    else if (name == "concat") ifam.combine = fusion::Combine::concat;
    else throw ConfigError(p, "expected \"add\" or \"concat\"");
  });
  s.finish();
}

void read_codec(const json & j, const std::string & path, CodecConfig & codec)
{
  Section s(j, path);
  s.field("mode", [&](const json & v, const std::string & p) {
    codec.mode = checked(p, [&] { return codec_from_string(as_string(v, p)); });
  });
  s.finish();
}

void read_sweep(const json & j, const std::string & path, SweepConfig & sw)
{
  Section s(j, path);
  s.field("tau_ms", [&](const json & v, const std::string & p) { sw.tau_ms = as_numbers(v, p); });
  s.field("sigma_local_m", [&](const json & v, const std::string & p) { sw.sigma_local_m = as_numbers(v, p); });
  s.field("sigma_head_deg", [&](const json & v, const std::string & p) { sw.sigma_head_deg = as_numbers(v, p); });
  s.field("frames_s", [&](const json & v, const std::string & p) { sw.frames_s = as_numbers(v, p); });
  s.field("threads", [&](const json & v, const std::string & p) { sw.threads = as_uint(v, p); });
  s.finish();
  checked(path, [&] { sw.validate(); });
}

std::string xi_name(temporal::XiMode m) { return m == temporal::XiMode::oracle ? "oracle" : "learned"; }

json ops_json(const temporal::OpCounts & o)
{
  return {{"mul", o.mul}, {"add", o.add}, {"sqrt", o.sqrt}, {"div", o.div}};
}

json box_json(const OrientedBox & b)
{
  return json::array({b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw});
}

}  // namespace

RunOptions HarnessConfig::run_options() const
{
  RunOptions o;
  o.phd = phd;
  o.ptam = ptam;
  o.codec = codec;
  o.window = window;
  return o;
}

HarnessConfig parse_config(const std::string & json_text)
{
  const json root = parse_json(json_text);
  HarnessConfig c;
  Section s(root, "");
  s.field("scenario", [&](const json & v, const std::string & p) { read_scenario(v, p, c.scenario); });
  s.field("bev", [&](const json & v, const std::string & p) { read_bev(v, p, c.bev); });
  s.field("phd", [&](const json & v, const std::string & p) { read_phd(v, p, c.phd); });
  s.field("ptam", [&](const json & v, const std::string & p) { read_ptam(v, p, c.ptam, c.window); });
  s.field("ifam", [&](const json & v, const std::string & p) { read_ifam(v, p, c.ifam); });
  s.field("codec", [&](const json & v, const std::string & p) { read_codec(v, p, c.codec); });
  s.field("sweep", [&](const json & v, const std::string & p) { read_sweep(v, p, c.sweep); });
  s.finish();
  return c;
}

HarnessConfig load_config(const std::filesystem::path & path)
{
  return parse_config(read_text(path));
}

std::string dump_config(const HarnessConfig & c)
{
  json agents = json::array();
  for (const auto & a : c.scenario.agents) {
    agents.push_back({{"id", a.id}, {"x", a.pose.x}, {"y", a.pose.y}, {"yaw_deg", a.pose.yaw / kDeg}});
  }
  const auto & r = c.scenario.render;
  json root = {
    {"scenario",
     {{"template", to_string(c.scenario.kind)},
      {"seed", c.scenario.seed},
      {"duration_s", c.scenario.duration},
      {"frame_period_s", c.scenario.frame_period},
      {"speed_mps", c.scenario.speed},
      {"objects", c.scenario.object_count},
      {"yaw_rate_dps", c.scenario.yaw_rate / kDeg},
      {"size_m", {c.scenario.length, c.scenario.width, c.scenario.height}},
      {"agents", agents},
      {"render",
       {{"surface_density", r.surface_density},
        {"min_distance_m", r.min_distance},
        {"ground_density", r.ground_density},
        {"ground_half_extent_m", r.ground_half_extent},
        {"object_intensity", r.object_intensity},
        {"ground_intensity", r.ground_intensity}}}}},
    {"bev", {{"cell_m", c.bev.cell}, {"x_range_m", {c.bev.x_min, c.bev.x_max}}, {"y_range_m", {c.bev.y_min, c.bev.y_max}}}},
    {"phd",
     {{"enabled", c.phd.enabled},
      {"distance_threshold_m", c.phd.config.distance_threshold},
      {"max_objects", c.phd.config.max_objects},
      {"alpha", c.phd.config.inner_scale},
      {"beta_in", c.phd.config.inner_ratio},
      {"beta_out", c.phd.config.outer_ratio},
      {"seed", c.phd.config.seed}}},
    {"ptam",
     {{"enabled", c.ptam.enabled},
      {"xi", xi_name(c.ptam.xi)},
      {"flow", c.ptam.flow == FlowSource::ideal ? "ideal" : "estimated"},
      {"stage1_source", c.ptam.stage1_source == temporal::Stage1Source::previous ? "previous" : "latest"},
      {"stage2_displacement",
       c.ptam.stage2_displacement == temporal::Stage2Displacement::scaled_stage2 ? "scaled" : "literal"},
      {"window", c.window}}},
    {"ifam", {{"epsilon", c.ifam.epsilon}, {"combine", c.ifam.combine == fusion::Combine::add ? "add" : "concat"}}},
    {"codec", {{"mode", to_string(c.codec.mode)}}},
    {"sweep",
     {{"tau_ms", c.sweep.tau_ms},
      {"sigma_local_m", c.sweep.sigma_local_m},
      {"sigma_head_deg", c.sweep.sigma_head_deg},
      {"frames_s", c.sweep.frames_s},
      {"threads", c.sweep.threads}}}};
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------- scenario

std::string scenario_to_json(const Scenario & s)
{
  json agents = json::array();
  for (const auto & a : s.agents) {
    json poses = json::array();
    for (const auto & p : a.poses) poses.push_back({p.x, p.y, p.yaw});
    agents.push_back({{"id", a.id}, {"poses", poses}});
  }
  json objects = json::array();
  for (const auto & o : s.objects) {
    json states = json::array();
    for (const auto & b : o.states) states.push_back(box_json(b));
    objects.push_back({{"vx", o.vx}, {"vy", o.vy}, {"yaw_rate", o.yaw_rate}, {"states", states}});
  }
  const auto & r = s.render;
  json root = {
    {"duration_s", s.duration},
    {"frame_period_s", s.frame_period},
    {"seed", s.seed},
    {"render",
     {{"surface_density", r.surface_density},
      {"min_distance_m", r.min_distance},
      {"ground_density", r.ground_density},
      {"ground_half_extent_m", r.ground_half_extent},
      {"object_intensity", r.object_intensity},
      {"ground_intensity", r.ground_intensity}}},
    {"agents", agents},
    {"objects", objects}};
  return root.dump(1) + "\n";
}

Scenario parse_scenario(const std::string & json_text)
{
  const json root = parse_json(json_text);
  Scenario sc;
  Section s(root, "");
  s.number("duration_s", sc.duration);
  s.number("frame_period_s", sc.frame_period);
  s.field("seed", [&](const json & v, const std::string & p) { sc.seed = as_uint(v, p); });
  s.field("render", [&](const json & v, const std::string & p) { read_render(v, p, sc.render); });
  s.field("agents", [&](const json & v, const std::string & p) {
    if (!v.is_array()) throw ConfigError(p, "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string ap = p + "[" + std::to_string(i) + "]";
      AgentTrack a;
      Section as(v[i], ap);
      as.field("id", [&](const json & x, const std::string & xp) { a.id = as_int(x, xp); });
      as.field("poses", [&](const json & x, const std::string & xp) {
        if (!x.is_array()) throw ConfigError(xp, "expected an array");
        for (std::size_t k = 0; k < x.size(); ++k) {
          const auto q = as_numbers(x[k], xp + "[" + std::to_string(k) + "]", 3);
          a.poses.push_back({q[0], q[1], q[2]});
        }
      });
      as.finish();
      sc.agents.push_back(std::move(a));
    }
  });
  s.field("objects", [&](const json & v, const std::string & p) {
    if (!v.is_array()) throw ConfigError(p, "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string op = p + "[" + std::to_string(i) + "]";
      ObjectTrack o;
      Section os(v[i], op);
      os.number("vx", o.vx);
      os.number("vy", o.vy);
      os.number("yaw_rate", o.yaw_rate);
      os.field("states", [&](const json & x, const std::string & xp) {
        if (!x.is_array()) throw ConfigError(xp, "expected an array");
        for (std::size_t k = 0; k < x.size(); ++k) {
          const std::string bp = xp + "[" + std::to_string(k) + "]";
          const auto q = as_numbers(x[k], bp, 7);
          OrientedBox b{q[0], q[1], q[2], q[3], q[4], q[5], q[6]};
          checked(bp, [&] { b.validate(); });
          o.states.push_back(b);
        }
      });
      os.finish();
      sc.objects.push_back(std::move(o));
    }
  });
  s.finish();
  checked("", [&] { sc.validate(); });
  return sc;
}

Scenario load_scenario(const std::filesystem::path & path)
{
  return parse_scenario(read_text(path));
}

// ------------------------------------------------------------------ reports

std::string report_to_json(const RunReport & r)
{
  json frames = json::array();
  for (const auto & f : r.frames) {
    json dets = json::array();
    for (const auto & d : f.detections) {
      dets.push_back({{"box", box_json(d.box)}, {"score", d.score}, {"cells", d.cells}});
    }
    json gts = json::array();
    for (const auto & g : f.ground_truth) gts.push_back(box_json(g));
    json codec = json::object();
    for (std::size_t i = 0; i < f.payload_names.size(); ++i) codec[f.payload_names[i]] = f.codec_mse[i];
    frames.push_back({
      {"t_s", f.t},
      {"compensated", f.compensated},
      {"noiseless", f.noiseless},
      {"collaborator_pose", {f.collaborator_pose.x, f.collaborator_pose.y, f.collaborator_pose.yaw}},
      {"detections", dets},
      {"ground_truth", gts},
      {"cosine_pre", f.cosine_pre},
      {"cosine_post", f.cosine_post},
      {"codec_mse", codec},
      {"xi", f.xi},
      {"max_displacement_cells", f.max_displacement_cells},
      {"mean_observability_weight", f.mean_observability_weight}});
  }
  auto matches = [](const std::vector<Match> & ms) {
    json out = json::array();
    for (const auto & m : ms) {
      out.push_back({
        {"frame", m.frame},
        {"detection", m.detection},
        {"ground_truth", m.ground_truth ? json(*m.ground_truth) : json(nullptr)},
        {"iou", m.iou},
        {"score", m.score},
        {"true_positive", m.true_positive}});
    }
    return out;
  };
  json root = {
    {"tau_ms", r.tau * 1000.0},
    {"sigma_local_m", r.noise.sigma_local},
    {"sigma_head_deg", r.noise.sigma_head_deg},
    {"ptam", r.ptam},
    {"xi_mode", r.xi_mode},
    {"codec", r.codec},
    {"ap50", r.detection.ap50},
    {"ap70", r.detection.ap70},
    {"mean_best_iou", r.detection.mean_best_iou},
    {"ground_truth_count", r.detection.ground_truth_count},
    {"matches50", matches(r.detection.matches50)},
    {"matches70", matches(r.detection.matches70)},
    {"cosine_pre", r.cosine_pre},
    {"cosine_post", r.cosine_post},
    {"codec_mse", r.codec_mse},
    {"ops", {{"global", ops_json(r.ops_global)}, {"blockwise", ops_json(r.ops_blockwise)}}},
    {"detector", r.detector_note},
    {"frames", frames}};
  return root.dump(2) + "\n";
}

std::string ops_to_json(const temporal::OpCounts & global, const temporal::OpCounts & blockwise, double ratio)
{
  json root = {{"global", ops_json(global)}, {"blockwise", ops_json(blockwise)}, {"mul_ratio", ratio}};
  return root.dump(2) + "\n";
}

std::string read_text(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace cpalign::sim
