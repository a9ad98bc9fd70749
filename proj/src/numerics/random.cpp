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

#include "cpalign/numerics/random.hpp"

#include <cmath>
#include <string_view>

namespace cpalign::numerics
{

namespace
{

std::uint64_t splitmix(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
{
  std::uint64_t s = splitmix(seed);
  for (auto k : keys) {
    s = splitmix(s ^ splitmix(k + 0x632be59bd9b4e019ULL));
  }
  return s;
}

Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
{
  return Rng(derive_seed(seed, keys));
}

std::uint64_t label_key(std::string_view label)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void fill_he(ConvSpec & spec, Rng & rng)
{
  const double fan_in = static_cast<double>(spec.in_channels / spec.groups * spec.kernel_h * spec.kernel_w);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double & w : spec.weights) {
    w = static_cast<float>(dist(rng));
  }
  std::fill(spec.bias.begin(), spec.bias.end(), 0.0);
}

void fill_he(DenseLayer & layer, Rng & rng)
{
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.in)));
  layer.weights.resize(layer.in * layer.out);
  for (double & w : layer.weights) {
    w = static_cast<float>(dist(rng));
  }
  layer.bias.assign(layer.out, 0.0);
}

Tensor3 random_tensor(std::size_t c, std::size_t h, std::size_t w, Rng & rng, double lo, double hi)
{
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor3 t(c, h, w);
  for (double & v : t.data()) {
    v = dist(rng);
  }
  return t;
}

}  // namespace cpalign::numerics
