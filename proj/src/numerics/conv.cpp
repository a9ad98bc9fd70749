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

#include "cpalign/numerics/conv.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <sstream>
#include <string>

namespace cpalign::numerics
{

namespace
{

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Columns of the im2col buffer materialized at once; bounds scratch memory.
constexpr std::size_t kColumnBlock = 2048;

std::string geometry(const ConvSpec & s)
{
  std::ostringstream os;
  os << "out=" << s.out_channels << " in=" << s.in_channels << " k=" << s.kernel_h << "x"
     << s.kernel_w << " stride=" << s.stride << " pad=" << s.padding << " groups=" << s.groups;
  return os.str();
}

void check_common(const ConvSpec & s)
{
  if (s.groups == 0 || s.stride == 0 || s.kernel_h == 0 || s.kernel_w == 0) {
    throw ShapeError("conv spec has zero groups, stride, or kernel: " + geometry(s));
  }
  if (s.in_channels % s.groups != 0 || s.out_channels % s.groups != 0) {
    throw ShapeError("conv channels not divisible by groups: " + geometry(s));
  }
  if (s.bias.size() != s.out_channels) {
    throw ShapeError(
      "conv bias length " + std::to_string(s.bias.size()) + " != out_channels (" + geometry(s) +
      ")");
  }
}

void add_bias(Tensor3 & out, const std::vector<double> & bias)
{
  for (std::size_t c = 0; c < out.channels(); ++c) {
    if (bias[c] == 0.0) {
      continue;
    }
    for (double & v : out.channel(c)) {
      v += bias[c];
    }
  }
}

}  // namespace

ConvSpec ConvSpec::zeros(
  std::size_t out_channels, std::size_t in_channels, std::size_t kernel, std::size_t stride,
  std::size_t padding, std::size_t groups, Activation activation)
{
  ConvSpec s;
  s.out_channels = out_channels;
  s.in_channels = in_channels;
  s.kernel_h = kernel;
  s.kernel_w = kernel;
  s.stride = stride;
  s.padding = padding;
  s.groups = groups;
  s.activation = activation;
  s.weights.assign(s.weight_count(), 0.0);
  s.bias.assign(out_channels, 0.0);
  return s;
}

void ConvSpec::validate() const
{
  check_common(*this);
  if (weights.size() != weight_count()) {
    throw ShapeError(
      "conv weight length " + std::to_string(weights.size()) + " != " +
      std::to_string(weight_count()) + " (" + geometry(*this) + ")");
  }
}

void apply_activation(Tensor3 & t, Activation activation)
{
  switch (activation) {
    case Activation::none:
      break;
    case Activation::relu:
      apply_relu(t);
      break;
    case Activation::sigmoid:
      apply_sigmoid(t);
      break;
  }
}

Tensor3 conv2d(const Tensor3 & input, const ConvSpec & spec)
{
  spec.validate();
  if (input.channels() != spec.in_channels) {
    throw ShapeError(
      "conv2d: input has " + std::to_string(input.channels()) + " channels, spec expects " +
      std::to_string(spec.in_channels) + " (input " + input.shape_string() + ")");
  }
  const auto in_h = static_cast<std::ptrdiff_t>(input.height());
  const auto in_w = static_cast<std::ptrdiff_t>(input.width());
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto kh = static_cast<std::ptrdiff_t>(spec.kernel_h);
  const auto kw = static_cast<std::ptrdiff_t>(spec.kernel_w);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  if (in_h + 2 * pad < kh || in_w + 2 * pad < kw) {
    throw ShapeError(
      "conv2d: kernel larger than padded input " + input.shape_string() + " (" + geometry(spec) +
      ")");
  }
  const auto out_h = static_cast<std::size_t>((in_h + 2 * pad - kh) / stride + 1);
  const auto out_w = static_cast<std::size_t>((in_w + 2 * pad - kw) / stride + 1);
  Tensor3 out(spec.out_channels, out_h, out_w);

  const std::size_t in_per_group = spec.in_channels / spec.groups;
  const std::size_t out_per_group = spec.out_channels / spec.groups;
  const std::size_t patch = in_per_group * spec.kernel_h * spec.kernel_w;
  const std::size_t columns = out_h * out_w;
  const bool pointwise = spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 &&
                         spec.padding == 0;

  std::vector<double> scratch;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    ConstRowMap w(
      spec.weights.data() + g * out_per_group * patch, static_cast<Eigen::Index>(out_per_group),
      static_cast<Eigen::Index>(patch));
    double * out_base = out.data().data() + g * out_per_group * columns;

    if (pointwise) {
      ConstRowMap x(
        input.data().data() + g * in_per_group * columns, static_cast<Eigen::Index>(in_per_group),
        static_cast<Eigen::Index>(columns));
      RowMap y(out_base, static_cast<Eigen::Index>(out_per_group), static_cast<Eigen::Index>(columns));
      y.noalias() = w * x;
      continue;
    }

    for (std::size_t col0 = 0; col0 < columns; col0 += kColumnBlock) {
      const std::size_t block = std::min(kColumnBlock, columns - col0);
      scratch.assign(patch * block, 0.0);
      for (std::size_t ci = 0; ci < in_per_group; ++ci) {
        auto plane = input.channel(g * in_per_group + ci);
        for (std::ptrdiff_t ky = 0; ky < kh; ++ky) {
          for (std::ptrdiff_t kx = 0; kx < kw; ++kx) {
            const std::size_t row = (ci * spec.kernel_h + static_cast<std::size_t>(ky)) *
                                      spec.kernel_w +
                                    static_cast<std::size_t>(kx);
            double * dst = scratch.data() + row * block;
            for (std::size_t j = 0; j < block; ++j) {
              const std::size_t col = col0 + j;
              const auto oy = static_cast<std::ptrdiff_t>(col / out_w);
              const auto ox = static_cast<std::ptrdiff_t>(col % out_w);
              const std::ptrdiff_t iy = oy * stride - pad + ky;
              const std::ptrdiff_t ix = ox * stride - pad + kx;
              if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w) {
                dst[j] = plane[static_cast<std::size_t>(iy * in_w + ix)];
              }
            }
          }
        }
      }
      ConstRowMap cols(scratch.data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(block));
      Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>> y(
        out_base + col0, static_cast<Eigen::Index>(out_per_group), static_cast<Eigen::Index>(block),
        Eigen::OuterStride<>(static_cast<Eigen::Index>(columns)));
      y.noalias() = w * cols;
    }
  }
  add_bias(out, spec.bias);
  apply_activation(out, spec.activation);
  require_finite(out, "conv2d");
  return out;
}

Tensor3 transposed_conv2d(const Tensor3 & input, const ConvSpec & spec)
{
  check_common(spec);
  const std::size_t in_per_group = spec.in_channels / spec.groups;
  const std::size_t out_per_group = spec.out_channels / spec.groups;
  const std::size_t taps = spec.kernel_h * spec.kernel_w;
  const std::size_t expected = spec.in_channels * out_per_group * taps;
  if (spec.weights.size() != expected) {
    throw ShapeError(
      "transposed conv weight length " + std::to_string(spec.weights.size()) + " != " +
      std::to_string(expected) + " (" + geometry(spec) + ")");
  }
  if (input.channels() != spec.in_channels) {
    throw ShapeError(
      "transposed_conv2d: input has " + std::to_string(input.channels()) +
      " channels, spec expects " + std::to_string(spec.in_channels));
  }
  const auto in_h = static_cast<std::ptrdiff_t>(input.height());
  const auto in_w = static_cast<std::ptrdiff_t>(input.width());
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto kh = static_cast<std::ptrdiff_t>(spec.kernel_h);
  const auto kw = static_cast<std::ptrdiff_t>(spec.kernel_w);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  const std::ptrdiff_t out_h = (in_h - 1) * stride - 2 * pad + kh;
  const std::ptrdiff_t out_w = (in_w - 1) * stride - 2 * pad + kw;
  if (in_h == 0 || in_w == 0 || out_h <= 0 || out_w <= 0) {
    throw ShapeError(
      "transposed_conv2d: non-positive output for input " + input.shape_string() + " (" +
      geometry(spec) + ")");
  }
  Tensor3 out(spec.out_channels, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w));
  const std::size_t in_columns = input.plane_size();
  const std::size_t rows = out_per_group * taps;

  std::vector<double> cols(rows * in_columns);
  for (std::size_t g = 0; g < spec.groups; ++g) {
    ConstRowMap w(
      spec.weights.data() + g * in_per_group * rows, static_cast<Eigen::Index>(in_per_group),
      static_cast<Eigen::Index>(rows));
    ConstRowMap x(
      input.data().data() + g * in_per_group * in_columns, static_cast<Eigen::Index>(in_per_group),
      static_cast<Eigen::Index>(in_columns));
    RowMap c(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(in_columns));
    c.noalias() = w.transpose() * x;

    for (std::size_t co = 0; co < out_per_group; ++co) {
      auto plane = out.channel(g * out_per_group + co);
      for (std::ptrdiff_t ky = 0; ky < kh; ++ky) {
        for (std::ptrdiff_t kx = 0; kx < kw; ++kx) {
          const std::size_t row =
            (co * spec.kernel_h + static_cast<std::size_t>(ky)) * spec.kernel_w +
            static_cast<std::size_t>(kx);
          const double * src = cols.data() + row * in_columns;
          for (std::ptrdiff_t iy = 0; iy < in_h; ++iy) {
            const std::ptrdiff_t oy = iy * stride - pad + ky;
            if (oy < 0 || oy >= out_h) {
              continue;
            }
            for (std::ptrdiff_t ix = 0; ix < in_w; ++ix) {
              const std::ptrdiff_t ox = ix * stride - pad + kx;
              if (ox < 0 || ox >= out_w) {
                continue;
              }
              plane[static_cast<std::size_t>(oy * out_w + ox)] +=
                src[static_cast<std::size_t>(iy * in_w + ix)];
            }
          }
        }
      }
    }
  }
  add_bias(out, spec.bias);
  apply_activation(out, spec.activation);
  require_finite(out, "transposed_conv2d");
  return out;
}

void MlpSpec::validate() const
{
  if (layers.empty()) {
    throw ShapeError("mlp has no layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto & l = layers[i];
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out) {
      throw ShapeError("mlp layer " + std::to_string(i) + " buffers do not match its widths");
    }
    if (i > 0 && layers[i - 1].out != l.in) {
      throw ShapeError(
        "mlp layer " + std::to_string(i) + " expects width " + std::to_string(l.in) +
        " but previous layer emits " + std::to_string(layers[i - 1].out));
    }
  }
}

std::vector<double> mlp_forward(std::span<const double> input, const MlpSpec & spec)
{
  spec.validate();
  if (input.size() != spec.input_width()) {
    throw ShapeError(
      "mlp input width " + std::to_string(input.size()) + " != " +
      std::to_string(spec.input_width()));
  }
  std::vector<double> x(input.begin(), input.end());
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto & l = spec.layers[li];
    std::vector<double> y(l.bias);
    for (std::size_t o = 0; o < l.out; ++o) {
      for (std::size_t i = 0; i < l.in; ++i) {
        y[o] += l.weights[o * l.in + i] * x[i];
      }
      if (li + 1 < spec.layers.size()) {
        y[o] = std::max(y[o], 0.0);
      }
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace cpalign::numerics
