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

#include "cpalign/sim/codec.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cpalign::sim
{

std::string to_string(CodecMode mode)
{
  switch (mode) {
    case CodecMode::identity:
      return "identity";
    case CodecMode::fp16:
      return "fp16";
    case CodecMode::int8:
      return "int8";
  }
  return "unknown";
}

CodecMode codec_from_string(const std::string & name)
{
  if (name == "identity") return CodecMode::identity;
  if (name == "fp16") return CodecMode::fp16;
  if (name == "int8") return CodecMode::int8;
  throw std::invalid_argument("unknown codec mode '" + name + "' (identity, fp16, int8)");
}

double int8_scale(const Tensor3 & t)
{
  double max_abs = 0.0;
  for (double v : t.data()) max_abs = std::max(max_abs, std::abs(v));
  return max_abs / 127.0;
}

Tensor3 quantize_dequantize(const Tensor3 & t, CodecMode mode)
{
  Tensor3 out = t;
  switch (mode) {
    case CodecMode::identity:
      break;
    case CodecMode::fp16: {
      constexpr double kHalfMax = 65504.0;
      for (double & v : out.data()) {
        v = static_cast<double>(static_cast<float>(Eigen::half(static_cast<float>(std::clamp(v, -kHalfMax, kHalfMax)))));
      }
      break;
    }
    case CodecMode::int8: {
      const double scale = int8_scale(t);
      if (scale == 0.0) break;
      for (double & v : out.data()) v = std::clamp(std::round(v / scale), -127.0, 127.0) * scale;
      break;
    }
  }
  return out;
}

Transmission transmit(const Payload & payload, const CodecConfig & codec)
{
  if (payload.names.size() != payload.tensors.size()) {
    throw std::invalid_argument("transmit: payload names and tensors differ in count");
  }
  payload.delay.validate();
  Transmission tx;
  tx.received.names = payload.names;
  tx.received.delay = payload.delay;
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto & t : payload.tensors) {
    auto r = quantize_dequantize(t, codec.mode);
    double e = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = r.data()[i] - t.data()[i];
      e += d * d;
    }
    sq += e;
    count += t.size();
    tx.mse.push_back(t.size() == 0 ? 0.0 : e / static_cast<double>(t.size()));
    tx.received.tensors.push_back(std::move(r));
  }
  tx.total_mse = count == 0 ? 0.0 : sq / static_cast<double>(count);
  return tx;
}

}  // namespace cpalign::sim
