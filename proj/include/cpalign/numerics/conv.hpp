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

#ifndef CPALIGN__NUMERICS__CONV_HPP_
#define CPALIGN__NUMERICS__CONV_HPP_

#include "cpalign/numerics/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace cpalign::numerics
{

enum class Activation { none, relu, sigmoid };

/// One convolution layer.
///
/// For conv2d the weights are laid out [out][in / groups][kh][kw]. For
/// transposed_conv2d they are laid out [in][out / groups][kh][kw], so the
/// same buffer serves as the adjoint of the forward convolution with in and
/// out swapped.
struct ConvSpec
{
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::none;

  /// Allocates zeroed weights and bias for the given geometry.
  static ConvSpec zeros(
    std::size_t out_channels, std::size_t in_channels, std::size_t kernel, std::size_t stride = 1,
    std::size_t padding = 0, std::size_t groups = 1, Activation activation = Activation::none);

  std::size_t weight_count() const
  {
    return out_channels * (groups == 0 ? 0 : in_channels / groups) * kernel_h * kernel_w;
  }

  double & weight(std::size_t o, std::size_t i_in_group, std::size_t ky, std::size_t kx)
  {
    return weights[((o * (in_channels / groups) + i_in_group) * kernel_h + ky) * kernel_w + kx];
  }
  double weight(std::size_t o, std::size_t i_in_group, std::size_t ky, std::size_t kx) const
  {
    return weights[((o * (in_channels / groups) + i_in_group) * kernel_h + ky) * kernel_w + kx];
  }

  /// Throws ShapeError when group divisibility or buffer lengths are violated.
  void validate() const;
};

/// Zero-padded cross-correlation. Output side = (in + 2 pad - k) / stride + 1.
Tensor3 conv2d(const Tensor3 & input, const ConvSpec & spec);

/// Gradient of conv2d with respect to its input, plus bias.
/// Output side = (in - 1) * stride - 2 pad + k.
Tensor3 transposed_conv2d(const Tensor3 & input, const ConvSpec & spec);

void apply_activation(Tensor3 & t, Activation activation);

struct DenseLayer
{
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // [out][in]
  std::vector<double> bias;
};

/// Fully connected stack; hidden layers use relu, the last layer is linear.
struct MlpSpec
{
  std::vector<DenseLayer> layers;

  void validate() const;
  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_width() const { return layers.empty() ? 0 : layers.back().out; }
};

std::vector<double> mlp_forward(std::span<const double> input, const MlpSpec & spec);

}  // namespace cpalign::numerics

#endif  // CPALIGN__NUMERICS__CONV_HPP_
