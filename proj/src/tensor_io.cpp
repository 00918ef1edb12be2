/* Copyright (c) 2026 The im2win-conv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "im2win/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace im2win {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("truncated header reading ") + what);
  }
  return to_little(v);
}

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;

}  // namespace

void write_tensor(const Tensor4& t, std::ostream& out) {
  out.write(kFixtureMagic, 4);
  put<std::uint32_t>(out, kFixtureVersion);
  const Dims4& d = t.dims();
  for (std::uint64_t v : {d.d0, d.d1, d.d2, d.d3}) put<std::uint64_t>(out, v);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  } else {
    for (float v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("write failed");
}

void write_tensor(const Tensor4& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(t, out);
}

Tensor4 read_tensor(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFixtureMagic, 4) != 0) {
    throw FormatError("bad magic, expected WCT4");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kFixtureVersion) {
    throw FormatError("unsupported fixture version " + std::to_string(version));
  }
  std::array<std::uint64_t, 4> dims{};
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = get<std::uint64_t>(in, "dims");
    if (d == 0) throw FormatError("zero dimension in header");
    if (d > kMaxElements || count > kMaxElements / d) {
      throw FormatError("dimension product overflows");
    }
    count *= d;
  }
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != count * sizeof(float)) {
    throw FormatError("truncated payload: header declares " + std::to_string(count) +
                      " values, file holds " + std::to_string(got / sizeof(float)));
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : data) v = to_little(v);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after payload");
  }
  return Tensor4({dims[0], dims[1], dims[2], dims[3]}, std::move(data));
}

Tensor4 read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace im2win
