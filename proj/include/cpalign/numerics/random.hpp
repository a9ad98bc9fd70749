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

#ifndef CPALIGN__NUMERICS__RANDOM_HPP_
#define CPALIGN__NUMERICS__RANDOM_HPP_

#include "cpalign/numerics/conv.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cpalign::numerics
{

using Rng = std::mt19937_64;

/// Mixes a base seed with a path of stream keys so independent consumers
/// (agents, frames, layers) draw from non-overlapping streams.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {});

/// Stable 64-bit key for a string label (FNV-1a).
std::uint64_t label_key(std::string_view label);

/// He-normal weights (std = sqrt(2 / fan_in)) rounded through float32 so they
/// survive a weight-archive roundtrip unchanged. Bias is zeroed.
void fill_he(ConvSpec & spec, Rng & rng);
void fill_he(DenseLayer & layer, Rng & rng);

Tensor3 random_tensor(
  std::size_t c, std::size_t h, std::size_t w, Rng & rng, double lo = -1.0, double hi = 1.0);

}  // namespace cpalign::numerics

#endif  // CPALIGN__NUMERICS__RANDOM_HPP_
