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

#ifndef CPALIGN__NUMERICS__TENSOR_HPP_
#define CPALIGN__NUMERICS__TENSOR_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpalign::numerics
{

/// Raised when tensor shapes disagree with an operation's contract.
class ShapeError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces a NaN or infinity.
class NumericError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// C x H x W grid of reals stored channel-major, then row, then column.
class Tensor3
{
public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double> & values() const & { return data_; }
  std::vector<double> values() && { return std::move(data_); }

  double & at(std::size_t c, std::size_t y, std::size_t x)
  {
    return data_[(c * height_ + y) * width_ + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const
  {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<double> channel(std::size_t c)
  {
    return std::span<double>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<const double> channel(std::size_t c) const
  {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }

  bool same_shape(const Tensor3 & other) const
  {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool same_plane(const Tensor3 & other) const
  {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor3 &, const Tensor3 &) = default;

private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

void require_same_shape(const Tensor3 & a, const Tensor3 & b, const char * what);
void require_finite(const Tensor3 & t, const char * what);

Tensor3 add(const Tensor3 & a, const Tensor3 & b);
Tensor3 subtract(const Tensor3 & a, const Tensor3 & b);
Tensor3 multiply(const Tensor3 & a, const Tensor3 & b);
Tensor3 scale(const Tensor3 & a, double factor);

// a + factor * b
Tensor3 axpy(const Tensor3 & a, double factor, const Tensor3 & b);

/// Multiplies every channel of `t` by the single-channel map `m`.
Tensor3 multiply_map(const Tensor3 & t, const Tensor3 & m);

Tensor3 concat_channels(const Tensor3 & a, const Tensor3 & b);
Tensor3 concat_channels(std::span<const Tensor3> parts);
Tensor3 slice_channels(const Tensor3 & t, std::size_t begin, std::size_t count);

double dot(const Tensor3 & a, const Tensor3 & b);
double max_abs_difference(const Tensor3 & a, const Tensor3 & b);

double sigmoid(double x);
void apply_relu(Tensor3 & t);
void apply_sigmoid(Tensor3 & t);

/// Numerically stable softmax of a short vector.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace cpalign::numerics

#endif  // CPALIGN__NUMERICS__TENSOR_HPP_
