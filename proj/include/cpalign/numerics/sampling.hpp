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

#ifndef CPALIGN__NUMERICS__SAMPLING_HPP_
#define CPALIGN__NUMERICS__SAMPLING_HPP_

#include "cpalign/numerics/tensor.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace cpalign::numerics
{

/// Up to four bilinear taps into one H x W plane. Taps that fall outside the
/// plane are dropped, which is zero padding.
struct BilinearTaps
{
  std::array<std::size_t, 4> index{};
  std::array<double, 4> weight{};
  std::size_t count = 0;
};

/// Taps for continuous (row, col), where integers are cell centers.
BilinearTaps bilinear_taps(std::size_t height, std::size_t width, double row, double col);

/// One tap set per output cell, applied identically to every channel.
struct SamplingPlan
{
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<BilinearTaps> taps;  // row-major, height * width
};

/// out(c, i) = sum_k weight_k * in(c, index_k). `in` must share the plan's plane.
Tensor3 apply_plan(const Tensor3 & in, const SamplingPlan & plan);

}  // namespace cpalign::numerics

#endif  // CPALIGN__NUMERICS__SAMPLING_HPP_
