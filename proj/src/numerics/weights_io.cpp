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

#include "cpalign/numerics/weights_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

namespace cpalign::numerics
{

namespace
{

constexpr std::array<std::uint8_t, 4> kMagic = {'C', 'P', 'A', 'W'};

class Writer
{
public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v)
  {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v)
  {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader
{
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return bytes_[pos_++]; }
  std::uint16_t u16()
  {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++] << (8 * i));
    return v;
  }
  std::uint32_t u32()
  {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text(std::size_t n)
  {
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string dims_string(std::span<const std::uint32_t> dims)
{
  std::ostringstream os;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    os << (i ? "x" : "") << dims[i];
  }
  return os.str();
}

}  // namespace

std::size_t NamedTensor::element_count() const
{
  return std::accumulate(
    dims.begin(), dims.end(), std::size_t{1}, std::multiplies<std::size_t>());
}

std::vector<std::uint8_t> encode_archive(const WeightArchive & archive)
{
  if (archive.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ArchiveError("archive has too many entries");
  }
  Writer w;
  w.bytes(kMagic);
  w.u16(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(archive.size()));
  for (const auto & [name, t] : archive) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ArchiveError("tensor name too long: " + name.substr(0, 64) + "...");
    }
    if (t.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ArchiveError("tensor '" + name + "' has too many dims");
    }
    if (t.element_count() != t.values.size()) {
      throw ArchiveError(
        "tensor '" + name + "' declares " + dims_string(t.dims) + " but holds " +
        std::to_string(t.values.size()) + " values");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t *>(name.data()), name.size()));
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

WeightArchive decode_archive(std::span<const std::uint8_t> bytes)
{
  Reader r(bytes);
  if (!r.has(kMagic.size() + 6) || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ArchiveError("not a weight archive: bad magic");
  }
  r.text(kMagic.size());
  const auto version = r.u16();
  if (version != kArchiveVersion) {
    throw ArchiveError("unsupported archive version " + std::to_string(version));
  }
  const auto count = r.u32();
  WeightArchive archive;
  for (std::uint32_t e = 0; e < count; ++e) {
    if (!r.has(2)) {
      throw ArchiveError("truncated archive: entry " + std::to_string(e) + " header missing");
    }
    const auto name_len = r.u16();
    if (!r.has(name_len + 1u)) {
      throw ArchiveError("truncated archive: name of entry " + std::to_string(e) + " cut short");
    }
    std::string name = r.text(name_len);
    const auto rank = r.u8();
    if (!r.has(4u * rank)) {
      throw ArchiveError("truncated archive: dims of tensor '" + name + "' cut short");
    }
    NamedTensor t;
    t.dims.resize(rank);
    for (auto & d : t.dims) d = r.u32();
    const std::size_t n = t.element_count();
    if (r.remaining() / 4 < n) {
      throw ArchiveError(
        "tensor '" + name + "' declares " + dims_string(t.dims) + " (" + std::to_string(n) +
        " floats) but only " + std::to_string(r.remaining() / 4) + " remain in the payload");
    }
    t.values.resize(n);
    for (auto & v : t.values) v = r.f32();
    if (!archive.emplace(name, std::move(t)).second) {
      throw ArchiveError("duplicate tensor '" + name + "' in archive");
    }
  }
  if (r.remaining() != 0) {
    throw ArchiveError(
      "archive has " + std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  return archive;
}

void write_archive(std::ostream & out, const WeightArchive & archive)
{
  const auto bytes = encode_archive(archive);
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw ArchiveError("failed writing weight archive");
  }
}

WeightArchive read_archive(std::istream & in)
{
  std::vector<std::uint8_t> bytes(
    (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

void save_archive(const std::filesystem::path & path, const WeightArchive & archive)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ArchiveError("cannot open " + path.string() + " for writing");
  }
  write_archive(out, archive);
}

WeightArchive load_archive(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ArchiveError("cannot open " + path.string());
  }
  return read_archive(in);
}

void require_names(const WeightArchive & archive, std::span<const std::string> required)
{
  std::vector<std::string> missing;
  for (const auto & name : required) {
    if (!archive.contains(name)) {
      missing.push_back(name);
    }
  }
  if (!missing.empty()) {
    std::string msg = "weight archive is missing " + std::to_string(missing.size()) + " tensor(s):";
    for (const auto & m : missing) {
      msg += " " + m;
    }
    throw ArchiveError(msg);
  }
}

namespace
{

NamedTensor to_named(std::vector<std::uint32_t> dims, std::span<const double> v)
{
  NamedTensor t;
  t.dims = std::move(dims);
  t.values.reserve(v.size());
  for (double x : v) {
    t.values.push_back(static_cast<float>(x));
  }
  return t;
}

const NamedTensor & lookup(const WeightArchive & archive, const std::string & name)
{
  auto it = archive.find(name);
  if (it == archive.end()) {
    throw ArchiveError("weight archive is missing 1 tensor(s): " + name);
  }
  return it->second;
}

void expect_dims(
  const std::string & name, const NamedTensor & t, const std::vector<std::uint32_t> & dims)
{
  if (t.dims != dims) {
    throw ArchiveError(
      "tensor '" + name + "' has dims " + dims_string(t.dims) + ", expected " + dims_string(dims));
  }
}

std::vector<double> widen(const NamedTensor & t)
{
  return std::vector<double>(t.values.begin(), t.values.end());
}

}  // namespace

void store_conv(WeightArchive & archive, const std::string & prefix, const ConvSpec & spec)
{
  const auto out = static_cast<std::uint32_t>(spec.out_channels);
  const auto in = static_cast<std::uint32_t>(spec.in_channels / spec.groups);
  archive[prefix + ".weight"] = to_named(
    {out, in, static_cast<std::uint32_t>(spec.kernel_h), static_cast<std::uint32_t>(spec.kernel_w)},
    spec.weights);
  archive[prefix + ".bias"] = to_named({out}, spec.bias);
}

ConvSpec fetch_conv(const WeightArchive & archive, const std::string & prefix, ConvSpec layout)
{
  const auto wname = prefix + ".weight";
  const auto bname = prefix + ".bias";
  const auto & w = lookup(archive, wname);
  const auto & b = lookup(archive, bname);
  expect_dims(
    wname, w,
    {static_cast<std::uint32_t>(layout.out_channels),
     static_cast<std::uint32_t>(layout.in_channels / layout.groups),
     static_cast<std::uint32_t>(layout.kernel_h), static_cast<std::uint32_t>(layout.kernel_w)});
  expect_dims(bname, b, {static_cast<std::uint32_t>(layout.out_channels)});
  layout.weights = widen(w);
  layout.bias = widen(b);
  return layout;
}

void store_transposed_conv(
  WeightArchive & archive, const std::string & prefix, const ConvSpec & spec)
{
  archive[prefix + ".weight"] = to_named(
    {static_cast<std::uint32_t>(spec.in_channels),
     static_cast<std::uint32_t>(spec.out_channels / spec.groups),
     static_cast<std::uint32_t>(spec.kernel_h), static_cast<std::uint32_t>(spec.kernel_w)},
    spec.weights);
  archive[prefix + ".bias"] = to_named({static_cast<std::uint32_t>(spec.out_channels)}, spec.bias);
}

ConvSpec fetch_transposed_conv(
  const WeightArchive & archive, const std::string & prefix, ConvSpec layout)
{
  const auto wname = prefix + ".weight";
  const auto bname = prefix + ".bias";
  const auto & w = lookup(archive, wname);
  const auto & b = lookup(archive, bname);
  expect_dims(
    wname, w,
    {static_cast<std::uint32_t>(layout.in_channels),
     static_cast<std::uint32_t>(layout.out_channels / layout.groups),
     static_cast<std::uint32_t>(layout.kernel_h), static_cast<std::uint32_t>(layout.kernel_w)});
  expect_dims(bname, b, {static_cast<std::uint32_t>(layout.out_channels)});
  layout.weights = widen(w);
  layout.bias = widen(b);
  return layout;
}

std::vector<std::string> conv_names(const std::string & prefix)
{
  return {prefix + ".weight", prefix + ".bias"};
}

void store_vector(WeightArchive & archive, const std::string & name, std::span<const double> v)
{
  archive[name] = to_named({static_cast<std::uint32_t>(v.size())}, v);
}

std::vector<double> fetch_vector(
  const WeightArchive & archive, const std::string & name, std::size_t expected_length)
{
  const auto & t = lookup(archive, name);
  expect_dims(name, t, {static_cast<std::uint32_t>(expected_length)});
  return widen(t);
}

void store_mlp(WeightArchive & archive, const std::string & prefix, const MlpSpec & spec)
{
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto & l = spec.layers[i];
    const auto p = prefix + ".fc" + std::to_string(i);
    archive[p + ".weight"] =
      to_named({static_cast<std::uint32_t>(l.out), static_cast<std::uint32_t>(l.in)}, l.weights);
    archive[p + ".bias"] = to_named({static_cast<std::uint32_t>(l.out)}, l.bias);
  }
}

MlpSpec fetch_mlp(const WeightArchive & archive, const std::string & prefix, MlpSpec layout)
{
  for (std::size_t i = 0; i < layout.layers.size(); ++i) {
    auto & l = layout.layers[i];
    const auto p = prefix + ".fc" + std::to_string(i);
    const auto & w = lookup(archive, p + ".weight");
    expect_dims(p + ".weight", w, {static_cast<std::uint32_t>(l.out), static_cast<std::uint32_t>(l.in)});
    l.weights = widen(w);
    l.bias = fetch_vector(archive, p + ".bias", l.out);
  }
  return layout;
}

}  // namespace cpalign::numerics
