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

#ifndef CPALIGN__NUMERICS__WEIGHTS_IO_HPP_
#define CPALIGN__NUMERICS__WEIGHTS_IO_HPP_

#include "cpalign/numerics/conv.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpalign::numerics
{

// Archive layout (all integers little-endian):
//   "CPAW" | version u16 | entry count u32
//   per entry: name length u16 | UTF-8 name | rank u8 | dims u32 x rank | float32 x prod(dims)
inline constexpr std::uint16_t kArchiveVersion = 1;

class ArchiveError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor
{
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  friend bool operator==(const NamedTensor &, const NamedTensor &) = default;
};

using WeightArchive = std::map<std::string, NamedTensor>;

std::vector<std::uint8_t> encode_archive(const WeightArchive & archive);
WeightArchive decode_archive(std::span<const std::uint8_t> bytes);

void write_archive(std::ostream & out, const WeightArchive & archive);
WeightArchive read_archive(std::istream & in);
void save_archive(const std::filesystem::path & path, const WeightArchive & archive);
WeightArchive load_archive(const std::filesystem::path & path);

/// Throws ArchiveError listing every name in `required` absent from `archive`.
void require_names(const WeightArchive & archive, std::span<const std::string> required);

/// Stores `<prefix>.weight` (rank 4) and `<prefix>.bias` (rank 1).
void store_conv(WeightArchive & archive, const std::string & prefix, const ConvSpec & spec);

/// Fills `layout`'s weights and bias from `<prefix>.weight` / `<prefix>.bias`.
/// The stored dims must match the layout's geometry.
ConvSpec fetch_conv(const WeightArchive & archive, const std::string & prefix, ConvSpec layout);

/// Transposed-conv variants: weight dims are (in, out / groups, kh, kw).
void store_transposed_conv(WeightArchive & archive, const std::string & prefix, const ConvSpec & spec);
ConvSpec fetch_transposed_conv(
  const WeightArchive & archive, const std::string & prefix, ConvSpec layout);

/// Conv weight/bias names for a prefix, for require_names.
std::vector<std::string> conv_names(const std::string & prefix);

void store_vector(WeightArchive & archive, const std::string & name, std::span<const double> v);
std::vector<double> fetch_vector(
  const WeightArchive & archive, const std::string & name, std::size_t expected_length);

void store_mlp(WeightArchive & archive, const std::string & prefix, const MlpSpec & spec);
MlpSpec fetch_mlp(const WeightArchive & archive, const std::string & prefix, MlpSpec layout);

}  // namespace cpalign::numerics

#endif  // CPALIGN__NUMERICS__WEIGHTS_IO_HPP_
