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

#ifndef CPALIGN__SIM__COMPLEXITY_HPP_
#define CPALIGN__SIM__COMPLEXITY_HPP_

#include "cpalign/temporal/temporal.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace cpalign::sim
{

enum class SimilarityMode { global, blockwise };

std::string to_string(SimilarityMode mode);

/// Closed-form cost of the cosine-similarity loss.
///   global:    mul (3C+2)HW, add (3C-1)HW, sqrt 2HW, div HW
///   blockwise: (|W1| + |W2|) windows, each costing the global terms with H = W = l,
///              |W1| = floor(H/l) floor(W/l), |W2| = floor((H-l)/l) floor((W-l)/l).
/// `l` is ignored in global mode. Throws std::invalid_argument on zero dims or l > min(H, W).
temporal::OpCounts count_similarity_ops(
  std::size_t channels, std::size_t height, std::size_t width, std::size_t l, SimilarityMode mode);

/// |W1| + |W2| for the given dims.
std::uint64_t window_count(std::size_t height, std::size_t width, std::size_t l);

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__COMPLEXITY_HPP_
