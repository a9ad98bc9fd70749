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

#ifndef CPALIGN__SIM__CODEC_HPP_
#define CPALIGN__SIM__CODEC_HPP_

#include "cpalign/numerics/tensor.hpp"
#include "cpalign/temporal/temporal.hpp"

#include <string>
#include <vector>

namespace cpalign::sim
{

using numerics::Tensor3;

enum class CodecMode { identity, fp16, int8 };

std::string to_string(CodecMode mode);
/// Throws std::invalid_argument on an unknown name.
CodecMode codec_from_string(const std::string & name);

/// int8 uses one symmetric scale per tensor, max|x| / 127.
struct CodecConfig
{
  CodecMode mode = CodecMode::identity;
};

/// Quantize then dequantize one tensor. fp16 saturates at +-65504.
Tensor3 quantize_dequantize(const Tensor3 & t, CodecMode mode);

/// max|x| / 127, or 0 for an all-zero tensor.
double int8_scale(const Tensor3 & t);

struct Payload
{
  std::vector<std::string> names;
  std::vector<Tensor3> tensors;
  temporal::DelayContext delay;
};

struct Transmission
{
  Payload received;
  std::vector<double> mse;  // per tensor
  /// Element-weighted mean over the whole payload.
  double total_mse = 0.0;
};

/// Throws std::invalid_argument when names and tensors disagree in count.
Transmission transmit(const Payload & payload, const CodecConfig & codec);

}  // namespace cpalign::sim

#endif  // CPALIGN__SIM__CODEC_HPP_
