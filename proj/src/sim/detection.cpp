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

#include "cpalign/sim/detection.hpp"

#include "cpalign/domain/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cpalign::sim
{

using pointcloud::Vec2;

std::vector<Detection> detect(const Tensor3 & map, const bev::BevSpec & spec, const DetectorConfig & config)
{
  const std::size_t h = spec.height(), w = spec.width();
  if (map.channels() != 1 || map.height() != h || map.width() != w) {
    throw numerics::ShapeError("detect: map " + map.shape_string() + " does not match the BEV grid");
  }
  std::vector<char> seen(h * w, 0);
  std::vector<std::size_t> stack;
  std::vector<Detection> out;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (seen[start] || !(map.data()[start] > config.threshold)) continue;
    std::size_t r0 = h, r1 = 0, c0 = w, c1 = 0, cells = 0;
    double sum = 0.0;
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t r = i / w, c = i % w;
      r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
      sum += map.data()[i];
      ++cells;
      auto visit = [&](std::size_t j) {
        if (!seen[j] && map.data()[j] > config.threshold) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (r > 0) visit(i - w);
      if (r + 1 < h) visit(i + w);
      if (c > 0) visit(i - 1);
      if (c + 1 < w) visit(i + 1);
    }
    if (cells < config.min_cells) continue;
    Detection d;
    d.cells = cells;
    d.score = sum / static_cast<double>(cells);
    const double x0 = spec.x_min + static_cast<double>(c0) * spec.cell;
    const double x1 = spec.x_min + static_cast<double>(c1 + 1) * spec.cell;
    const double y0 = spec.y_min + static_cast<double>(r0) * spec.cell;
    const double y1 = spec.y_min + static_cast<double>(r1 + 1) * spec.cell;
    d.box.cx = 0.5 * (x0 + x1);
    d.box.cy = 0.5 * (y0 + y1);
    d.box.length = x1 - x0;
    d.box.width = y1 - y0;
    d.box.height = config.box_height;
    d.box.cz = config.box_height / 2.0;
    out.push_back(d);
  }
  return out;
}

namespace
{

double polygon_area(const std::vector<Vec2> & p)
{
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto & u = p[i];
    const auto & v = p[(i + 1) % p.size()];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman against a convex, counter-clockwise clip polygon.
std::vector<Vec2> clip(std::vector<Vec2> subject, const std::vector<Vec2> & clipper)
{
  for (std::size_t e = 0; e < clipper.size() && !subject.empty(); ++e) {
    const Vec2 a = clipper[e], b = clipper[(e + 1) % clipper.size()];
    auto side = [&](const Vec2 & p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); };
    std::vector<Vec2> next;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2 p = subject[i], q = subject[(i + 1) % subject.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0.0) next.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    subject = std::move(next);
  }
  return subject;
}

}  // namespace

double bev_iou(const OrientedBox & a, const OrientedBox & b)
{
  const double area_a = a.length * a.width;
  const double area_b = b.length * b.width;
  const auto inter_poly = clip(a.corners(), b.corners());
  const double inter = inter_poly.size() < 3 ? 0.0 : polygon_area(inter_poly);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::vector<Match> match_detections(std::span<const FrameDetections> frames, double iou_threshold)
{
  std::vector<Match> all;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t d = 0; d < frames[f].detections.size(); ++d) {
      Match m;
      m.frame = f;
      m.detection = d;
      m.score = frames[f].detections[d].score;
      all.push_back(m);
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Match & x, const Match & y) { return x.score > y.score; });
  std::vector<std::vector<char>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].ground_truth.size(), 0);
  for (auto & m : all) {
    const auto & frame = frames[m.frame];
    const auto & det = frame.detections[m.detection].box;
    double best = 0.0;
    std::optional<std::size_t> pick;
    for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
      if (taken[m.frame][g]) continue;
      const double iou = bev_iou(det, frame.ground_truth[g]);
      if (iou > best) best = iou, pick = g;
    }
    m.iou = best;
    if (pick && best >= iou_threshold) {
      m.ground_truth = pick;
      m.true_positive = true;
      taken[m.frame][*pick] = 1;
    }
  }
  return all;
}

double eleven_point_ap(std::span<const Match> matches, std::size_t ground_truth_count)
{
  if (ground_truth_count == 0) return 0.0;
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matches[a].score > matches[b].score;
  });
  std::vector<std::pair<double, double>> curve;  // (recall, precision)
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (matches[order[k]].true_positive ? tp : fp) += 1;
    const bool group_end = k + 1 == order.size() || matches[order[k + 1]].score != matches[order[k]].score;
    if (group_end) {
      curve.emplace_back(
        static_cast<double>(tp) / static_cast<double>(ground_truth_count),
        static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
  }
  double ap = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double p = 0.0;
    for (auto [rec, prec] : curve) {
      if (rec >= r - 1e-12) p = std::max(p, prec);
    }
    ap += p;
  }
  return std::min(1.0, ap / 11.0);
}

DetectionEval evaluate_frames(std::span<const FrameDetections> frames)
{
  DetectionEval ev;
  for (const auto & f : frames) {
    ev.ground_truth_count += f.ground_truth.size();
    for (const auto & g : f.ground_truth) {
      double best = 0.0;
      for (const auto & d : f.detections) best = std::max(best, bev_iou(d.box, g));
      ev.best_iou.push_back(best);
    }
  }
  ev.matches50 = match_detections(frames, 0.5);
  ev.matches70 = match_detections(frames, 0.7);
  ev.ap50 = eleven_point_ap(ev.matches50, ev.ground_truth_count);
  ev.ap70 = eleven_point_ap(ev.matches70, ev.ground_truth_count);
  if (!ev.best_iou.empty()) {
    ev.mean_best_iou =
      std::accumulate(ev.best_iou.begin(), ev.best_iou.end(), 0.0) / static_cast<double>(ev.best_iou.size());
  }
  return ev;
}

DetectionEval evaluate_detection(
  const Tensor3 & map, std::span<const OrientedBox> ground_truth, const bev::BevSpec & spec,
  const DetectorConfig & config)
{
  domain::validate_observability(map, "evaluate_detection");
  FrameDetections frame{detect(map, spec, config), {ground_truth.begin(), ground_truth.end()}};
  return evaluate_frames(std::span<const FrameDetections>(&frame, 1));
}

}  // namespace cpalign::sim
