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

#include "cpalign/sim/complexity.hpp"

#include <algorithm>
#include <stdexcept>

namespace cpalign::sim
{

std::string to_string(SimilarityMode mode)
{
  return mode == SimilarityMode::global ? "global" : "blockwise";
}

std::uint64_t window_count(std::size_t height, std::size_t width, std::size_t l)
{
  if (l == 0 || l > std::min(height, width)) {
    throw std::invalid_argument("window_count: window size must lie in [1, min(H, W)]");
  }
  const std::uint64_t primary = (height / l) * (width / l);
  const std::uint64_t offset = ((height - l) / l) * ((width - l) / l);
  return primary + offset;
}

namespace
{

temporal::OpCounts per_area(std::uint64_t c, std::uint64_t area)
{
  return {(3 * c + 2) * area, (3 * c - 1) * area, 2 * area, area};
}

}  // namespace

temporal::OpCounts count_similarity_ops(
  std::size_t channels, std::size_t height, std::size_t width, std::size_t l, SimilarityMode mode)
{
  if (channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("count_similarity_ops: dims must be positive");
  }
  if (mode == SimilarityMode::global) return per_area(channels, std::uint64_t{height} * width);
  const std::uint64_t windows = window_count(height, width, l);
  auto ops = per_area(channels, std::uint64_t{l} * l);
  ops.mul *= windows;
  ops.add *= windows;
  ops.sqrt *= windows;
  ops.div *= windows;
  return ops;
}

}  // namespace cpalign::sim
