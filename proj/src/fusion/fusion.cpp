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

#include "cpalign/fusion/fusion.hpp"

#include "cpalign/numerics/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cpalign::fusion
{

using numerics::ConvSpec;
using numerics::ShapeError;

namespace
{

void require_map(const Tensor3 & map, const Tensor3 & features, const char * what)
{
  if (map.channels() != 1 || !map.same_plane(features)) {
    throw ShapeError(
      std::string(what) + ": map " + map.shape_string() + " does not cover " + features.shape_string());
  }
}

}  // namespace

ForegroundSplit split_foreground(const Tensor3 & features, const Tensor3 & observability)
{
  require_map(observability, features, "split_foreground");
  ForegroundSplit s;
  s.back = numerics::subtract(features, numerics::multiply_map(features, observability));
  // With |H*M| <= |H|, H - back is exact (Dekker), so fore + back reproduces H bit for bit.
  s.fore = numerics::subtract(features, s.back);
  return s;
}

// -------------------------------------------------------------- struct conv

std::array<double, 9> rotate90(const std::array<double, 9> & k)
{
  std::array<double, 9> out{};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) out[r * 3 + c] = k[c * 3 + (2 - r)];
  return out;
}

StructKernels StructKernels::zeros(std::size_t channels, std::size_t groups)
{
  if (groups == 0) groups = channels;
  StructKernels k;
  k.base = ConvSpec::zeros(channels, channels, 3, 1, 1, groups);
  for (auto & b : k.bias) b.assign(channels, 0.0);
  k.validate();
  return k;
}

StructKernels StructKernels::analytic(std::size_t channels, std::uint64_t seed, std::size_t groups)
{
  auto k = zeros(channels, groups);
  auto rng = numerics::make_rng(seed, {numerics::label_key("ifam.struct")});
  numerics::fill_he(k.base, rng);
  const std::size_t per_out = k.base.weight_count() / channels;
  std::fill_n(k.base.weights.begin() + static_cast<std::ptrdiff_t>(bev::kOccupancyCarrier * per_out), per_out, 0.0);
  return k;
}

void StructKernels::validate() const
{
  base.validate();
  if (base.kernel_h != 3 || base.kernel_w != 3 || base.padding != 1 || base.stride != 1 ||
      base.in_channels != base.out_channels) {
    throw ShapeError("struct kernels: base bank must be C -> C, 3x3, stride 1, padding 1");
  }
  for (const auto & b : bias) {
    if (b.size() != base.out_channels) {
      throw ShapeError("struct kernels: every bank needs " + std::to_string(base.out_channels) + " biases");
    }
  }
}

ConvSpec StructKernels::bank(StructBank which) const
{
  ConvSpec out = base;
  out.activation = numerics::Activation::none;
  out.bias = bias[static_cast<std::size_t>(which)];
  for (std::size_t off = 0; off < out.weights.size(); off += 9) {
    std::array<double, 9> k;
    std::copy_n(base.weights.begin() + static_cast<std::ptrdiff_t>(off), 9, k.begin());
    std::array<double, 9> d = k;
    switch (which) {
      case StructBank::vanilla:
        break;
      case StructBank::center_surround: {
        double surround = 0.0;
        for (std::size_t i = 0; i < 9; ++i)
          if (i != 4) surround += k[i];
        d[4] = -surround;
        break;
      }
      case StructBank::horizontal:
        for (std::size_t r = 0; r < 3; ++r) {
          d[r * 3 + 1] = 0.0;
          d[r * 3 + 2] = -k[r * 3];
        }
        break;
      case StructBank::vertical:
        for (std::size_t c = 0; c < 3; ++c) {
          d[3 + c] = 0.0;
          d[6 + c] = -k[c];
        }
        break;
      case StructBank::angular: {
        const auto rot = rotate90(k);
        for (std::size_t i = 0; i < 9; ++i) d[i] = k[i] - rot[i];
        break;
      }
    }
    std::copy(d.begin(), d.end(), out.weights.begin() + static_cast<std::ptrdiff_t>(off));
  }
  return out;
}

ConvSpec StructKernels::fused() const
{
  ConvSpec out = bank(StructBank::vanilla);
  for (std::size_t b = 1; b < kStructBanks; ++b) {
    const auto other = bank(static_cast<StructBank>(b));
    for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] += other.weights[i];
    for (std::size_t i = 0; i < out.bias.size(); ++i) out.bias[i] += other.bias[i];
  }
  return out;
}

Tensor3 struct_conv(const Tensor3 & fore, const StructKernels & kernels, StructPath path)
{
  kernels.validate();
  if (fore.channels() != kernels.base.in_channels) {
    throw ShapeError(
      "struct_conv: kernels expect " + std::to_string(kernels.base.in_channels) + " channels, got " +
      fore.shape_string());
  }
  if (path == StructPath::fused) return numerics::conv2d(fore, kernels.fused());
  Tensor3 acc = numerics::conv2d(fore, kernels.bank(StructBank::vanilla));
  for (std::size_t b = 1; b < kStructBanks; ++b) {
    acc = numerics::add(acc, numerics::conv2d(fore, kernels.bank(static_cast<StructBank>(b))));
  }
  return acc;
}

// ------------------------------------------------------------------ shuffle

namespace
{

void require_groups(std::size_t n, std::size_t groups, const char * what)
{
  if (groups == 0 || n % groups != 0) {
    throw std::invalid_argument(
      std::string(what) + ": " + std::to_string(groups) + " groups do not divide " + std::to_string(n) +
      " channels");
  }
}

Tensor3 permute_channels(const Tensor3 & t, std::size_t groups, bool inverse)
{
  const std::size_t n = t.channels();
  require_groups(n, groups, "channel_shuffle");
  Tensor3 out(n, t.height(), t.width());
  const std::size_t plane = t.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = (i % groups) * (n / groups) + i / groups;
    const std::size_t from = inverse ? i : src;
    const std::size_t to = inverse ? src : i;
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(from * plane), plane,
                out.data().begin() + static_cast<std::ptrdiff_t>(to * plane));
  }
  return out;
}

}  // namespace

Tensor3 channel_shuffle(const Tensor3 & t, std::size_t groups)
{
  return permute_channels(t, groups, false);
}

Tensor3 channel_unshuffle(const Tensor3 & t, std::size_t groups)
{
  return permute_channels(t, groups, true);
}

// ------------------------------------------------------------- verification

VerificationSpec VerificationSpec::zeros(
  std::size_t channels, std::size_t shuffle_groups, std::size_t conv_groups, bool single_channel)
{
  using numerics::Activation;
  VerificationSpec s;
  const std::size_t reduced = std::max<std::size_t>(1, 2 * channels / 16);
  s.spatial = ConvSpec::zeros(1, 2, 7, 1, 3, 1, Activation::sigmoid);
  s.channel_reduce = ConvSpec::zeros(reduced, 2 * channels, 1, 1, 0, 1, Activation::relu);
  s.channel_expand = ConvSpec::zeros(2 * channels, reduced, 1, 1, 0, 1, Activation::sigmoid);
  s.shuffle_groups = shuffle_groups;
  s.group_conv = single_channel
                   ? ConvSpec::zeros(1, 4 * channels, 1, 1, 0, 1, Activation::sigmoid)
                   : ConvSpec::zeros(channels, 4 * channels, 1, 1, 0, conv_groups, Activation::sigmoid);
  s.validate(channels);
  return s;
}

VerificationSpec VerificationSpec::analytic(std::size_t channels, std::uint64_t seed)
{
  auto s = zeros(channels);
  auto rng = numerics::make_rng(seed, {numerics::label_key("ifam.verify")});
  numerics::fill_he(s.spatial, rng);
  numerics::fill_he(s.channel_reduce, rng);
  numerics::fill_he(s.channel_expand, rng);
  numerics::fill_he(s.group_conv, rng);
  return s;
}

void VerificationSpec::validate(std::size_t channels) const
{
  require_groups(4 * channels, shuffle_groups, "verification shuffle");
  const std::size_t out = group_conv.out_channels;
  if (out != channels && out != 1) {
    throw std::invalid_argument("verification: group conv must produce C or 1 channels");
  }
  if (group_conv.in_channels != 4 * channels) {
    throw std::invalid_argument("verification: group conv must read 4C channels");
  }
  require_groups(4 * channels, group_conv.groups, "verification group conv");
  require_groups(out, group_conv.groups, "verification group conv output");
  group_conv.validate();
  spatial.validate();
  channel_reduce.validate();
  channel_expand.validate();
  if (spatial.in_channels != 2 || spatial.out_channels != 1 || channel_reduce.in_channels != 2 * channels ||
      channel_expand.out_channels != 2 * channels || channel_expand.in_channels != channel_reduce.out_channels) {
    throw ShapeError("verification: attention layers do not match " + std::to_string(channels) + " channels");
  }
}

Attention verification_attention(const Tensor3 & fore, const Tensor3 & enhanced, const VerificationSpec & spec)
{
  numerics::require_same_shape(fore, enhanced, "verification");
  const Tensor3 cat = numerics::concat_channels(fore, enhanced);
  const std::size_t n = cat.channels(), plane = cat.plane_size();

  Tensor3 pooled(2, cat.height(), cat.width());
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = -std::numeric_limits<double>::infinity(), sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double v = cat.data()[c * plane + i];
      mx = std::max(mx, v);
      sum += v;
    }
    pooled.data()[i] = mx;
    pooled.data()[plane + i] = sum / static_cast<double>(n);
  }
  auto spatial = spec.spatial;
  spatial.activation = numerics::Activation::sigmoid;

  Tensor3 gap(n, 1, 1);
  for (std::size_t c = 0; c < n; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += cat.data()[c * plane + i];
    gap.data()[c] = acc / static_cast<double>(plane);
  }
  auto reduce = spec.channel_reduce;
  reduce.activation = numerics::Activation::relu;
  auto expand = spec.channel_expand;
  expand.activation = numerics::Activation::sigmoid;
  return {numerics::conv2d(pooled, spatial), numerics::conv2d(numerics::conv2d(gap, reduce), expand)};
}

Tensor3 verification_weights(const Tensor3 & fore, const Tensor3 & enhanced, const VerificationSpec & spec)
{
  spec.validate(fore.channels());
  const auto att = verification_attention(fore, enhanced, spec);
  const Tensor3 cat = numerics::concat_channels(fore, enhanced);
  const std::size_t n = cat.channels(), plane = cat.plane_size();
  // W_init: the spatial map broadcast over channels plus the per-channel weight.
  Tensor3 init(n, cat.height(), cat.width());
  for (std::size_t c = 0; c < n; ++c) {
    const double wc = att.channel.data()[c];
    for (std::size_t i = 0; i < plane; ++i) init.data()[c * plane + i] = att.spatial.data()[i] + wc;
  }
  auto gconv = spec.group_conv;
  gconv.activation = numerics::Activation::sigmoid;
  return numerics::conv2d(channel_shuffle(numerics::concat_channels(cat, init), spec.shuffle_groups), gconv);
}

// -------------------------------------------------------------- aggregation

AggregationSpec AggregationSpec::identity(std::size_t channels, Combine combine)
{
  AggregationSpec s;
  s.combine = combine;
  const std::size_t parts = combine == Combine::add ? 1 : 3;
  s.mix = ConvSpec::zeros(channels, parts * channels, 1);
  for (std::size_t p = 0; p < parts; ++p)
    for (std::size_t c = 0; c < channels; ++c) s.mix.weight(c, p * channels + c, 0, 0) = 1.0;
  return s;
}

void AggregationSpec::validate(std::size_t channels) const
{
  mix.validate();
  const std::size_t parts = combine == Combine::add ? 1 : 3;
  if (mix.kernel_h != 1 || mix.kernel_w != 1 || mix.out_channels != channels ||
      mix.in_channels != parts * channels) {
    throw ShapeError(
      "aggregation: mixing conv must be 1x1 from " + std::to_string(parts * channels) + " to " +
      std::to_string(channels) + " channels");
  }
  if (!std::isfinite(epsilon)) throw std::invalid_argument("aggregation: epsilon must be finite");
}

Tensor3 aggregate_instance(
  const Tensor3 & fore, const Tensor3 & enhanced, const Tensor3 & back, const Tensor3 & verification,
  const AggregationSpec & spec)
{
  numerics::require_same_shape(fore, enhanced, "aggregate_instance");
  numerics::require_same_shape(fore, back, "aggregate_instance");
  spec.validate(fore.channels());
  Tensor3 blend(fore.channels(), fore.height(), fore.width());
  if (verification.channels() == fore.channels() && verification.same_plane(fore)) {
    for (std::size_t i = 0; i < blend.size(); ++i) {
      const double w = verification.data()[i];
      blend.data()[i] = w * fore.data()[i] + (1.0 - w) * enhanced.data()[i];
    }
  } else {
    require_map(verification, fore, "aggregate_instance");
    const std::size_t plane = fore.plane_size();
    for (std::size_t i = 0; i < blend.size(); ++i) {
      const double w = verification.data()[i % plane];
      blend.data()[i] = w * fore.data()[i] + (1.0 - w) * enhanced.data()[i];
    }
  }
  const Tensor3 combined = spec.combine == Combine::add
                             ? numerics::add(numerics::add(blend, fore), enhanced)
                             : numerics::concat_channels(std::array<Tensor3, 3>{blend, fore, enhanced});
  auto mix = spec.mix;
  mix.activation = numerics::Activation::none;
  return numerics::axpy(numerics::conv2d(combined, mix), spec.epsilon, back);
}

Tensor3 fuse_agents(std::span<const Tensor3> agents, const ConvSpec & fusion)
{
  if (agents.empty()) throw std::invalid_argument("fuse_agents: no agents");
  Tensor3 state = agents.front();
  for (std::size_t a = 1; a < agents.size(); ++a) {
    numerics::require_same_shape(state, agents[a], "fuse_agents");
    if (fusion.in_channels != 2 * state.channels() || fusion.out_channels != state.channels()) {
      throw ShapeError(
        "fuse_agents: fusion conv must map " + std::to_string(2 * state.channels()) + " to " +
        std::to_string(state.channels()) + " channels");
    }
    state = numerics::conv2d(numerics::concat_channels(state, agents[a]), fusion);
  }
  return state;
}

ConvSpec summing_fusion(std::size_t channels)
{
  auto c = ConvSpec::zeros(channels, 2 * channels, 1);
  for (std::size_t o = 0; o < channels; ++o) {
    c.weight(o, o, 0, 0) = 1.0;
    c.weight(o, channels + o, 0, 0) = 1.0;
  }
  return c;
}

// ------------------------------------------------------------------ weights

namespace
{

AggregationSpec aggregation_default(std::size_t channels)
{
  auto a = AggregationSpec::identity(channels);
  a.epsilon = static_cast<float>(a.epsilon);  // archive precision
  return a;
}

}  // namespace

IfamWeights IfamWeights::analytic(std::size_t channels, std::uint64_t seed)
{
  return {
    StructKernels::analytic(channels, seed), VerificationSpec::analytic(channels, seed),
    aggregation_default(channels), summing_fusion(channels)};
}

IfamWeights IfamWeights::from_archive(const numerics::WeightArchive & archive, std::size_t channels)
{
  std::vector<std::string> names = {"ifam.struct.base.weight", "ifam.eps"};
  for (std::size_t b = 0; b < kStructBanks; ++b) names.push_back("ifam.struct.bias" + std::to_string(b));
  for (const char * p : {"ifam.verify.spatial", "ifam.verify.channel_reduce", "ifam.verify.channel_expand",
                         "ifam.verify.group_conv", "ifam.aggregate.mix", "ifam.fuse"}) {
    for (auto & n : numerics::conv_names(p)) names.push_back(n);
  }
  numerics::require_names(archive, names);

  IfamWeights w = analytic(channels, 0);
  auto base_layout = w.kernels.base;
  const auto & stored = archive.at("ifam.struct.base.weight");
  if (stored.dims.size() == 4 && stored.dims[1] != 0) {
    base_layout.groups = channels / stored.dims[1];
  }
  w.kernels.base.groups = base_layout.groups;
  // Bias is not stored with the base bank; give fetch_conv a placeholder.
  numerics::WeightArchive view;
  view["k.weight"] = stored;
  view["k.bias"] = numerics::NamedTensor{{static_cast<std::uint32_t>(channels)}, std::vector<float>(channels)};
  base_layout.weights.assign(base_layout.weight_count(), 0.0);
  w.kernels.base = numerics::fetch_conv(view, "k", base_layout);
  for (std::size_t b = 0; b < kStructBanks; ++b) {
    w.kernels.bias[b] = numerics::fetch_vector(archive, "ifam.struct.bias" + std::to_string(b), channels);
  }

  auto & v = w.verification;
  v.spatial = numerics::fetch_conv(archive, "ifam.verify.spatial", v.spatial);
  v.channel_reduce = numerics::fetch_conv(archive, "ifam.verify.channel_reduce", v.channel_reduce);
  v.channel_expand = numerics::fetch_conv(archive, "ifam.verify.channel_expand", v.channel_expand);
  const auto & gw = archive.at("ifam.verify.group_conv.weight");
  if (gw.dims.size() == 4) {
    v.group_conv.out_channels = gw.dims[0];
    v.group_conv.groups = gw.dims[1] == 0 ? 1 : 4 * channels / gw.dims[1];
    v.group_conv.weights.assign(v.group_conv.weight_count(), 0.0);
    v.group_conv.bias.assign(v.group_conv.out_channels, 0.0);
  }
  v.group_conv = numerics::fetch_conv(archive, "ifam.verify.group_conv", v.group_conv);
  if (archive.count("ifam.verify.shuffle_groups")) {
    v.shuffle_groups = static_cast<std::size_t>(
      numerics::fetch_vector(archive, "ifam.verify.shuffle_groups", 1)[0]);
  }

  const auto & mw = archive.at("ifam.aggregate.mix.weight");
  const bool concat = mw.dims.size() == 4 && mw.dims[1] == 3 * channels;
  w.aggregation = AggregationSpec::identity(channels, concat ? Combine::concat : Combine::add);
  w.aggregation.mix = numerics::fetch_conv(archive, "ifam.aggregate.mix", w.aggregation.mix);
  w.aggregation.epsilon = numerics::fetch_vector(archive, "ifam.eps", 1)[0];
  w.fusion = numerics::fetch_conv(archive, "ifam.fuse", w.fusion);

  w.kernels.validate();
  w.verification.validate(channels);
  w.aggregation.validate(channels);
  return w;
}

void IfamWeights::store(numerics::WeightArchive & archive) const
{
  numerics::store_conv(archive, "ifam.struct.base", kernels.base);
  archive.erase("ifam.struct.base.bias");
  for (std::size_t b = 0; b < kStructBanks; ++b) {
    numerics::store_vector(archive, "ifam.struct.bias" + std::to_string(b), kernels.bias[b]);
  }
  numerics::store_conv(archive, "ifam.verify.spatial", verification.spatial);
  numerics::store_conv(archive, "ifam.verify.channel_reduce", verification.channel_reduce);
  numerics::store_conv(archive, "ifam.verify.channel_expand", verification.channel_expand);
  numerics::store_conv(archive, "ifam.verify.group_conv", verification.group_conv);
  const std::vector<double> groups = {static_cast<double>(verification.shuffle_groups)};
  numerics::store_vector(archive, "ifam.verify.shuffle_groups", groups);
  numerics::store_conv(archive, "ifam.aggregate.mix", aggregation.mix);
  const std::vector<double> eps = {aggregation.epsilon};
  numerics::store_vector(archive, "ifam.eps", eps);
  numerics::store_conv(archive, "ifam.fuse", fusion);
}

Tensor3 refine_agent(const Tensor3 & features, const Tensor3 & observability, const IfamWeights & weights)
{
  const auto split = split_foreground(features, observability);
  const Tensor3 enhanced = struct_conv(split.fore, weights.kernels);
  const Tensor3 verify = verification_weights(split.fore, enhanced, weights.verification);
  return aggregate_instance(split.fore, enhanced, split.back, verify, weights.aggregation);
}

// --------------------------------------------------------------------- loss

Tensor3 rasterize_footprints(std::span<const pointcloud::OrientedBox> boxes, const bev::BevSpec & spec)
{
  Tensor3 out(1, spec.height(), spec.width());
  for (const auto & box : boxes) {
    box.validate();
    for (std::size_t r = 0; r < spec.height(); ++r)
      for (std::size_t c = 0; c < spec.width(); ++c) {
        if (box.contains_planar(spec.cell_center_x(c), spec.cell_center_y(r))) out.at(0, r, c) = 1.0;
      }
  }
  return out;
}

namespace
{

constexpr double kProbFloor = 1e-12;

double focal_derivative(double p, double y)
{
  const double pos = 0.25 * (2.0 * (1.0 - p) * std::log(p) - (1.0 - p) * (1.0 - p) / p);
  const double neg = -0.75 * (2.0 * p * std::log1p(-p) - p * p / (1.0 - p));
  return y * pos + (1.0 - y) * neg;
}

}  // namespace

double focal_term(double p, double y)
{
  p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  return -(y * 0.25 * (1.0 - p) * (1.0 - p) * std::log(p) + (1.0 - y) * 0.75 * p * p * std::log1p(-p));
}

FocalLoss foreground_loss(const Tensor3 & prediction, const Tensor3 & labels)
{
  numerics::require_same_shape(prediction, labels, "foreground_loss");
  numerics::require_finite(prediction, "foreground_loss prediction");
  double positives = 0.0;
  for (double y : labels.values()) positives += y;
  const double norm = std::max(positives, 1.0);
  FocalLoss out;
  out.grad = Tensor3(prediction.channels(), prediction.height(), prediction.width());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double y = labels.data()[i];
    const double w = (2.0 * y + (1.0 - y)) / norm;
    const double raw = prediction.data()[i];
    const double p = std::clamp(raw, kProbFloor, 1.0 - kProbFloor);
    out.loss += w * focal_term(p, y);
    // Zero gradient where the clamp is active.
    out.grad.data()[i] = (p == raw) ? w * focal_derivative(p, y) : 0.0;
  }
  return out;
}

FocalLoss foreground_loss(
  const Tensor3 & prediction, std::span<const pointcloud::OrientedBox> boxes, const bev::BevSpec & spec)
{
  return foreground_loss(prediction, rasterize_footprints(boxes, spec));
}

}  // namespace cpalign::fusion
