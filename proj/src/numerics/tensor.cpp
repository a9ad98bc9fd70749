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

#include "cpalign/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cpalign::numerics
{

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill)
: channels_(channels), height_(height), width_(width), data_(channels * height * width, fill)
{
}

Tensor3::Tensor3(
  std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data)
: channels_(channels), height_(height), width_(width), data_(std::move(data))
{
  if (data_.size() != channels * height * width) {
    std::ostringstream os;
    os << "tensor data length " << data_.size() << " does not match shape " << channels << "x"
       << height << "x" << width;
    throw ShapeError(os.str());
  }
}

bool Tensor3::all_finite() const
{
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor3::shape_string() const
{
  std::ostringstream os;
  os << channels_ << "x" << height_ << "x" << width_;
  return os.str();
}

void require_same_shape(const Tensor3 & a, const Tensor3 & b, const char * what)
{
  if (!a.same_shape(b)) {
    throw ShapeError(
      std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

void require_finite(const Tensor3 & t, const char * what)
{
  if (!t.all_finite()) {
    throw NumericError(std::string(what) + ": produced non-finite values");
  }
}

namespace
{

template <typename Op>
Tensor3 zip(const Tensor3 & a, const Tensor3 & b, const char * what, Op op)
{
  require_same_shape(a, b, what);
  Tensor3 out(a.channels(), a.height(), a.width());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = op(x[i], y[i]);
  }
  return out;
}

}  // namespace

Tensor3 add(const Tensor3 & a, const Tensor3 & b)
{
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor3 subtract(const Tensor3 & a, const Tensor3 & b)
{
  return zip(a, b, "subtract", [](double x, double y) { return x - y; });
}

Tensor3 multiply(const Tensor3 & a, const Tensor3 & b)
{
  return zip(a, b, "multiply", [](double x, double y) { return x * y; });
}

Tensor3 scale(const Tensor3 & a, double factor)
{
  Tensor3 out = a;
  for (double & v : out.data()) {
    v *= factor;
  }
  return out;
}

Tensor3 axpy(const Tensor3 & a, double factor, const Tensor3 & b)
{
  return zip(a, b, "axpy", [factor](double x, double y) { return x + factor * y; });
}

Tensor3 multiply_map(const Tensor3 & t, const Tensor3 & m)
{
  if (m.channels() != 1 || !t.same_plane(m)) {
    throw ShapeError(
      "multiply_map: expected 1x" + std::to_string(t.height()) + "x" + std::to_string(t.width()) +
      " map, got " + m.shape_string());
  }
  Tensor3 out = t;
  auto mp = m.channel(0);
  for (std::size_t c = 0; c < t.channels(); ++c) {
    auto ch = out.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      ch[i] *= mp[i];
    }
  }
  return out;
}

Tensor3 concat_channels(const Tensor3 & a, const Tensor3 & b)
{
  const Tensor3 parts[] = {a, b};
  return concat_channels(parts);
}

Tensor3 concat_channels(std::span<const Tensor3> parts)
{
  if (parts.empty()) {
    throw ShapeError("concat_channels: nothing to concatenate");
  }
  std::size_t total = 0;
  for (const auto & p : parts) {
    if (!p.same_plane(parts.front())) {
      throw ShapeError(
        "concat_channels: spatial mismatch " + p.shape_string() + " vs " +
        parts.front().shape_string());
    }
    total += p.channels();
  }
  std::vector<double> data;
  data.reserve(total * parts.front().plane_size());
  for (const auto & p : parts) {
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return Tensor3(total, parts.front().height(), parts.front().width(), std::move(data));
}

Tensor3 slice_channels(const Tensor3 & t, std::size_t begin, std::size_t count)
{
  if (begin + count > t.channels()) {
    throw ShapeError(
      "slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
      ") exceeds " + t.shape_string());
  }
  const auto plane = t.plane_size();
  std::vector<double> data(
    t.data().begin() + static_cast<std::ptrdiff_t>(begin * plane),
    t.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * plane));
  return Tensor3(count, t.height(), t.width(), std::move(data));
}

double dot(const Tensor3 & a, const Tensor3 & b)
{
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a.data()[i] * b.data()[i];
  }
  return acc;
}

double max_abs_difference(const Tensor3 & a, const Tensor3 & b)
{
  require_same_shape(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double sigmoid(double x)
{
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void apply_relu(Tensor3 & t)
{
  for (double & v : t.data()) {
    v = std::max(v, 0.0);
  }
}

void apply_sigmoid(Tensor3 & t)
{
  for (double & v : t.data()) {
    v = sigmoid(v);
  }
}

std::vector<double> softmax(std::span<const double> logits)
{
  std::vector<double> out(logits.size());
  if (logits.empty()) {
    return out;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double & v : out) {
    v /= total;
  }
  return out;
}

}  // namespace cpalign::numerics
