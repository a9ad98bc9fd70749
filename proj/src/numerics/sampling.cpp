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

#include "cpalign/numerics/sampling.hpp"

#include <cmath>
#include <string>

namespace cpalign::numerics
{

BilinearTaps bilinear_taps(std::size_t height, std::size_t width, double row, double col)
{
  BilinearTaps t;
  if (!std::isfinite(row) || !std::isfinite(col)) return t;
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  const double fr = row - r0;
  const double fc = col - c0;
  const double wr[2] = {1.0 - fr, fr};
  const double wc[2] = {1.0 - fc, fc};
  for (int dr = 0; dr < 2; ++dr) {
    const double r = r0 + dr;
    if (r < 0.0 || r >= static_cast<double>(height) || wr[dr] == 0.0) continue;
    for (int dc = 0; dc < 2; ++dc) {
      const double c = c0 + dc;
      if (c < 0.0 || c >= static_cast<double>(width) || wc[dc] == 0.0) continue;
      t.index[t.count] = static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
      t.weight[t.count] = wr[dr] * wc[dc];
      ++t.count;
    }
  }
  return t;
}

Tensor3 apply_plan(const Tensor3 & in, const SamplingPlan & plan)
{
  if (in.height() != plan.height || in.width() != plan.width ||
      plan.taps.size() != plan.height * plan.width) {
    throw ShapeError(
      "apply_plan: input " + in.shape_string() + " does not match a " +
      std::to_string(plan.height) + "x" + std::to_string(plan.width) + " sampling plan");
  }
  Tensor3 out(in.channels(), in.height(), in.width());
  const std::size_t plane = in.plane_size();
  const auto src = in.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < in.channels(); ++c) {
    const double * s = src.data() + c * plane;
    double * d = dst.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const auto & t = plan.taps[i];
      double acc = 0.0;
      for (std::size_t k = 0; k < t.count; ++k) acc += t.weight[k] * s[t.index[k]];
      d[i] = acc;
    }
  }
  return out;
}

}  // namespace cpalign::numerics
