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

#include "cpalign/sim/pipeline.hpp"

#include "cpalign/numerics/random.hpp"
#include "cpalign/sim/complexity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace cpalign::sim
{

using temporal::MotionField;

// ------------------------------------------------------------- ideal flow

namespace
{

bool in_dilated(const OrientedBox & b, double x, double y, double margin)
{
  const double dx = x - b.cx, dy = y - b.cy;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= b.length / 2.0 + margin && std::abs(ly) <= b.width / 2.0 + margin;
}

double snap(double v)
{
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

MotionField ideal_motion_field(
  std::span<const BoxMotion> motions, const bev::BevSpec & spec, std::size_t scale, double xi)
{
  spec.validate();
  if (scale > 2) throw std::invalid_argument("ideal_motion_field: scale must be 0, 1 or 2");
  const std::size_t h = spec.height() >> scale, w = spec.width() >> scale;
  auto field = MotionField::identity(h, w);
  if (!(xi > 0.0)) return field;
  const double cell = spec.cell * static_cast<double>(std::size_t{1} << scale);
  auto center_x = [&](std::size_t c) { return spec.x_min + (static_cast<double>(c) + 0.5) * cell; };
  auto center_y = [&](std::size_t r) { return spec.y_min + (static_cast<double>(r) + 0.5) * cell; };

  for (const auto & m : motions) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        if (in_dilated(m.from, center_x(c), center_y(r), cell)) field.weight.at(0, r, c) = 0.0;
      }
  }
  for (const auto & m : motions) {
    const double dx = snap((m.to.cx - m.from.cx) / cell) / xi;
    const double dy = snap((m.to.cy - m.from.cy) / cell) / xi;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        if (!in_dilated(m.to, center_x(c), center_y(r), cell)) continue;
        field.displacement.at(0, r, c) = dx;
        field.displacement.at(1, r, c) = dy;
        field.weight.at(0, r, c) = 1.0;
      }
  }
  return field;
}

std::array<MotionField, 3> ideal_motion_fields(
  std::span<const BoxMotion> motions, const bev::BevSpec & spec, double xi)
{
  return {
    ideal_motion_field(motions, spec, 0, xi), ideal_motion_field(motions, spec, 1, xi),
    ideal_motion_field(motions, spec, 2, xi)};
}

// ---------------------------------------------------------------- options

void RunOptions::validate() const
{
  if (!std::isfinite(tau) || tau < 0.0) throw std::invalid_argument("run options: tau must be >= 0");
  if (!std::isfinite(noise.sigma_local) || noise.sigma_local < 0.0 || !std::isfinite(noise.sigma_head_deg) ||
      noise.sigma_head_deg < 0.0) {
    throw std::invalid_argument("run options: noise sigmas must be >= 0");
  }
  if (window == 0) throw std::invalid_argument("run options: window must be positive");
  if (phd.enabled) phd.config.validate();
}

void SweepConfig::validate() const
{
  if (tau_ms.empty() || sigma_local_m.empty() || sigma_head_deg.empty() || frames_s.empty()) {
    throw std::invalid_argument("sweep: every grid axis needs at least one value");
  }
  for (double v : tau_ms)
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("sweep: tau values must be >= 0");
  for (double v : sigma_local_m)
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("sweep: sigma_local values must be >= 0");
  for (double v : sigma_head_deg)
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("sweep: sigma_head values must be >= 0");
}

// --------------------------------------------------------------- pipeline

Pipeline::Pipeline(
  bev::BevSpec spec, bev::Backbone backbone, bev::BevProjector projector, domain::ForegroundEstimator fg,
  temporal::PtamWeights ptam, fusion::IfamWeights ifam)
: spec_(spec),
  backbone_(std::move(backbone)),
  projector_(std::move(projector)),
  foreground_(std::move(fg)),
  ptam_(std::move(ptam)),
  ifam_(std::move(ifam))
{
  spec_.validate();
}

Pipeline Pipeline::analytic(std::uint64_t seed, const bev::BevSpec & spec, const IfamSettings & ifam)
{
  using numerics::derive_seed;
  using numerics::label_key;
  auto weights = fusion::IfamWeights::analytic(bev::kBevChannels, derive_seed(seed, {label_key("ifam")}));
  weights.aggregation = fusion::AggregationSpec::identity(bev::kBevChannels, ifam.combine);
  weights.aggregation.epsilon = static_cast<float>(ifam.epsilon);
  return Pipeline(
    spec, bev::Backbone::analytic(derive_seed(seed, {label_key("backbone")})),
    bev::BevProjector::analytic(derive_seed(seed, {label_key("bevproj")})),
    domain::ForegroundEstimator::analytic(bev::kBevChannels, derive_seed(seed, {label_key("fg")})),
    temporal::PtamWeights::analytic(derive_seed(seed, {label_key("ptam")})), std::move(weights));
}

Pipeline Pipeline::from_archive(const numerics::WeightArchive & archive, const bev::BevSpec & spec)
{
  return Pipeline(
    spec, bev::Backbone::from_archive(archive), bev::BevProjector::from_archive(archive),
    domain::ForegroundEstimator::from_archive(archive, bev::kBevChannels),
    temporal::PtamWeights::from_archive(archive), fusion::IfamWeights::from_archive(archive, bev::kBevChannels));
}

void Pipeline::store(numerics::WeightArchive & archive) const
{
  backbone_.store(archive);
  projector_.store(archive);
  foreground_.store(archive);
  ptam_.store(archive);
  ifam_.store(archive);
}

namespace
{

constexpr double kSlack = 1e-9;

int pick_collaborator(const Scenario & s, const RunOptions & o)
{
  if (s.agents.size() < 2) throw std::invalid_argument("run_pipeline: scenario needs a collaborator agent");
  if (o.collaborator) {
    if (*o.collaborator == s.agents.front().id) {
      throw std::invalid_argument("run_pipeline: the collaborator cannot be the ego");
    }
    s.agent(*o.collaborator);
    return *o.collaborator;
  }
  return s.agents[1].id;
}

std::vector<BoxMotion> motions_between(const Scenario & s, const Pose2 & frame, double t0, double t1)
{
  std::vector<BoxMotion> out;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    out.push_back({to_agent_frame(s.object_at(i, t0), frame), to_agent_frame(s.object_at(i, t1), frame)});
  }
  return out;
}

bev::MultiScaleFeatures scales_from(std::span<const Tensor3> tensors)
{
  bev::MultiScaleFeatures ms;
  for (std::size_t k = 0; k < 3; ++k) ms.scales[k] = tensors[k];
  return ms;
}

Tensor3 clamp_unit(Tensor3 t)
{
  for (double & v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

}  // namespace

EgoView Pipeline::observe_ego(const Scenario & scenario, double t, const PhdSettings & phd) const
{
  const int ego = scenario.agents.front().id;
  EgoView view;
  view.t = t;
  view.pose = scenario.agent_pose(ego, t);
  auto cloud = render_pointcloud(scenario, ego, t);
  for (const auto & b : scenario.objects_at(t)) view.ground_truth.push_back(to_agent_frame(b, view.pose));
  if (phd.enabled) {
    auto cfg = phd.config;
    const auto frame_key = static_cast<std::uint64_t>(std::llround(t / scenario.frame_period));
    cfg.seed = numerics::derive_seed(scenario.seed, {numerics::label_key("phd"), frame_key, cfg.seed});
    cloud = pointcloud::phd_apply(cloud, view.ground_truth, {0.0, 0.0}, cfg);
  }
  view.features = projector_.project(bev::featurize(cloud, spec_, backbone_));
  view.map = foreground_.estimate(view.features);
  view.refined = fusion::refine_agent(view.features, view.map, ifam_);
  return view;
}

FrameReport Pipeline::run(const Scenario & scenario, double t, const RunOptions & options, const EgoView * ego_view) const
{
  options.validate();
  const double dt = scenario.frame_period;
  const double t_latest = t - options.tau;
  const double t_previous = t_latest - dt;
  if (t_previous < -kSlack) {
    throw std::invalid_argument("run_pipeline: t must be at least tau + frame period");
  }
  const int collab = pick_collaborator(scenario, options);
  const auto frame_key = static_cast<std::uint64_t>(std::llround(t / dt));

  std::optional<EgoView> own;
  if (ego_view == nullptr) {
    own = observe_ego(scenario, t, options.phd);
    ego_view = &*own;
  } else if (std::abs(ego_view->t - t) > kSlack) {
    throw std::invalid_argument("run_pipeline: precomputed ego view is for another time");
  }

  FrameReport rep;
  rep.t = t;
  rep.tau = options.tau;
  rep.noiseless = options.noise.noiseless();
  rep.ground_truth = ego_view->ground_truth;
  const Pose2 ego_pose = ego_view->pose;

  // Collaborator: two past frames and, for the metric only, its frame at t.
  const Pose2 collab_pose = scenario.agent_pose(collab, t_latest);
  const auto ms_previous = bev::featurize(render_pointcloud(scenario, collab, t_previous), spec_, backbone_);
  const auto ms_latest = bev::featurize(render_pointcloud(scenario, collab, t_latest), spec_, backbone_);
  const auto ms_truth = bev::featurize(render_pointcloud(scenario, collab, t), spec_, backbone_);
  for (const auto & m : motions_between(scenario, collab_pose, t_latest, t)) {
    rep.max_displacement_cells = std::max(
      rep.max_displacement_cells, snap(std::hypot(m.to.cx - m.from.cx, m.to.cy - m.from.cy) / spec_.cell));
  }

  temporal::DelayContext ctx{options.tau, dt, options.ptam.xi};
  ctx.validate();
  rep.compensated = options.ptam.enabled && options.tau > 0.0;

  Payload payload;
  payload.delay = ctx;
  bev::MultiScaleFeatures received;
  if (rep.compensated) {
    temporal::PtamOptions popt;
    popt.stage1_source = options.ptam.stage1_source;
    popt.stage2_displacement = options.ptam.stage2_displacement;
    if (options.ptam.flow == FlowSource::ideal) {
      const auto m1 = motions_between(scenario, collab_pose, t_previous, t_latest);
      const auto m2 = motions_between(scenario, collab_pose, t_latest, t);
      popt.stage1_fields = ideal_motion_fields(m1, spec_, 1.0);
      popt.stage2_fields = ideal_motion_fields(m2, spec_, ctx.ratio());
    }
    auto partial = temporal::ptam_stage1(ms_previous, ms_latest, ptam_, popt);
    for (std::size_t k = 0; k < 3; ++k) {
      payload.names.push_back("intermediate.s" + std::to_string(k));
      payload.tensors.push_back(partial.intermediate.scales[k]);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      payload.names.push_back("stage1.s" + std::to_string(k) + ".displacement");
      payload.tensors.push_back(partial.stage1[k].displacement);
      payload.names.push_back("stage1.s" + std::to_string(k) + ".weight");
      payload.tensors.push_back(partial.stage1[k].weight);
    }
    const auto tx = transmit(payload, options.codec);
    partial.intermediate = scales_from(std::span(tx.received.tensors).first(3));
    for (std::size_t k = 0; k < 3; ++k) {
      partial.stage1[k].displacement = tx.received.tensors[3 + 2 * k];
      partial.stage1[k].weight = clamp_unit(tx.received.tensors[4 + 2 * k]);
    }
    rep.codec_mse = tx.mse;
    rep.codec_total_mse = tx.total_mse;
    const auto & reference =
      options.ptam.stage1_source == temporal::Stage1Source::previous ? ms_previous : ms_latest;
    temporal::ptam_stage2(partial, reference, ctx, ptam_, popt);
    rep.xi = partial.xi;
    received = std::move(partial.compensated);
  } else {
    for (std::size_t k = 0; k < 3; ++k) {
      payload.names.push_back("latest.s" + std::to_string(k));
      payload.tensors.push_back(ms_latest.scales[k]);
    }
    const auto tx = transmit(payload, options.codec);
    received = scales_from(tx.received.tensors);
    rep.codec_mse = tx.mse;
    rep.codec_total_mse = tx.total_mse;
  }
  rep.payload_names = payload.names;
  rep.cosine_pre = temporal::mean_window_cosine(ms_latest.scales[0], ms_truth.scales[0], options.window);
  rep.cosine_post = temporal::mean_window_cosine(received.scales[0], ms_truth.scales[0], options.window);
  const Tensor3 collab_bev = projector_.project(received);

  // Pose noise perturbs only what the ego believes about the collaborator.
  rep.collaborator_pose = collab_pose;
  if (!rep.noiseless) {
    auto rng = numerics::make_rng(scenario.seed, {numerics::label_key("pose.noise"), frame_key, options.stream});
    std::normal_distribution<double> n01(0.0, 1.0);
    rep.collaborator_pose.x += options.noise.sigma_local * n01(rng);
    rep.collaborator_pose.y += options.noise.sigma_local * n01(rng);
    rep.collaborator_pose.yaw += options.noise.sigma_head_deg * std::numbers::pi / 180.0 * n01(rng);
  }
  const auto resampler = domain::EgoResampler::build(rep.collaborator_pose, ego_pose, spec_);
  const auto collab_in_ego = resampler.apply(collab_bev);

  rep.ego_map = ego_view->map;
  const auto collab_map = resampler.apply(foreground_.estimate(collab_bev));
  rep.collaborator_map = collab_map.grid;
  const Tensor3 completed = domain::complete_voids(collab_map.grid, collab_map.valid, rep.ego_map);
  const Tensor3 weighting = domain::observability_weighting(rep.ego_map, completed);
  double wsum = 0.0;
  for (double v : weighting.data()) wsum += v;
  rep.mean_observability_weight = wsum / static_cast<double>(weighting.size());

  const std::array<Tensor3, 2> refined = {
    ego_view->refined,
    fusion::refine_agent(collab_in_ego.grid, collab_map.grid, ifam_)};
  const Tensor3 fused = fusion::fuse_agents(refined, ifam_.fusion);
  rep.fused_map = foreground_.estimate(fused);
  rep.detections = detect(rep.fused_map, spec_, options.detector);
  return rep;
}

FrameReport run_pipeline(const Scenario & scenario, double t, const RunOptions & options, const bev::BevSpec & spec)
{
  return Pipeline::analytic(scenario.seed, spec).run(scenario, t, options);
}

RunReport run_frames(
  const Pipeline & pipeline, const Scenario & scenario, std::span<const double> times, const RunOptions & options,
  std::span<const EgoView> egos)
{
  if (times.empty()) throw std::invalid_argument("run_frames: no frame times");
  if (!egos.empty() && egos.size() != times.size()) {
    throw std::invalid_argument("run_frames: one precomputed ego view per frame time is required");
  }
  RunReport report;
  report.tau = options.tau;
  report.noise = options.noise;
  report.ptam = options.ptam.enabled;
  report.xi_mode = options.ptam.xi == temporal::XiMode::oracle ? "oracle" : "learned";
  report.codec = to_string(options.codec.mode);
  std::vector<FrameDetections> pooled;
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto f = pipeline.run(scenario, times[i], options, egos.empty() ? nullptr : &egos[i]);
    pooled.push_back({f.detections, f.ground_truth});
    report.cosine_pre += f.cosine_pre;
    report.cosine_post += f.cosine_post;
    report.codec_mse += f.codec_total_mse;
    report.frames.push_back(std::move(f));
  }
  const double n = static_cast<double>(times.size());
  report.cosine_pre /= n;
  report.cosine_post /= n;
  report.codec_mse /= n;
  report.detection = evaluate_frames(pooled);
  const auto & s = pipeline.spec();
  const std::size_t l = std::min({options.window, s.height(), s.width()});
  report.ops_global = count_similarity_ops(bev::kScaleChannels[0], s.height(), s.width(), l, SimilarityMode::global);
  report.ops_blockwise =
    count_similarity_ops(bev::kScaleChannels[0], s.height(), s.width(), l, SimilarityMode::blockwise);
  return report;
}

// ------------------------------------------------------------------ sweep

std::vector<SweepRow> run_sweep(
  const Pipeline & pipeline, const Scenario & scenario, const SweepConfig & sweep, const RunOptions & base)
{
  sweep.validate();
  struct Point
  {
    double tau_ms, sigma_local, sigma_head;
  };
  std::vector<Point> grid;
  for (double sl : sweep.sigma_local_m)
    for (double sh : sweep.sigma_head_deg)
      for (double tau : sweep.tau_ms) grid.push_back({tau, sl, sh});

  std::vector<EgoView> egos;
  for (double t : sweep.frames_s) egos.push_back(pipeline.observe_ego(scenario, t, base.phd));

  std::vector<std::vector<SweepRow>> results(grid.size());
  auto evaluate = [&](std::size_t i) {
    const auto & p = grid[i];
    RunOptions opt = base;
    opt.tau = p.tau_ms / 1000.0;
    opt.noise = {p.sigma_local, p.sigma_head};
    opt.stream = i;
    opt.ptam.enabled = false;
    const auto baseline = run_frames(pipeline, scenario, sweep.frames_s, opt, egos);
    opt.ptam.enabled = true;
    const auto ptam = run_frames(pipeline, scenario, sweep.frames_s, opt, egos);
    double displacement = 0.0, weight = 0.0;
    for (const auto & f : ptam.frames) {
      displacement = std::max(displacement, f.max_displacement_cells);
      weight += f.mean_observability_weight / static_cast<double>(ptam.frames.size());
    }
    auto & rows = results[i];
    auto add = [&](const char * metric, double value) {
      rows.push_back({metric, value, p.tau_ms, p.sigma_local, p.sigma_head});
    };
    add("iou_baseline", baseline.detection.mean_best_iou);
    add("iou_ptam", ptam.detection.mean_best_iou);
    add("ap50_baseline", baseline.detection.ap50);
    add("ap70_baseline", baseline.detection.ap70);
    add("ap50_ptam", ptam.detection.ap50);
    add("ap70_ptam", ptam.detection.ap70);
    add("cosine_pre", ptam.cosine_pre);
    add("cosine_post", ptam.cosine_post);
    add("codec_mse_baseline", baseline.codec_mse);
    add("codec_mse_ptam", ptam.codec_mse);
    add("displacement_cells", displacement);
    add("observability_weight", weight);
  };

  std::size_t threads = sweep.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : sweep.threads;
  threads = std::min(threads, grid.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
          try {
            evaluate(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto & th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  std::vector<SweepRow> rows;
  for (auto & r : results) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

void write_csv(std::ostream & out, std::span<const SweepRow> rows)
{
  out << kCsvHeader << '\n';
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const auto & r : rows) {
    out << r.metric << ',' << r.value << ',' << r.tau_ms << ',' << r.sigma_local_m << ',' << r.sigma_head_deg << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace cpalign::sim
