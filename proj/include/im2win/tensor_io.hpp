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

#pragma once

#include <filesystem>
#include <iosfwd>

#include "im2win/tensor.hpp"

namespace im2win {

// Fixture layout (little-endian): "WCT4", u32 version = 1, four u64 dims,
// then d0*d1*d2*d3 binary32 values in row-major order.
inline constexpr char kFixtureMagic[4] = {'W', 'C', 'T', '4'};
inline constexpr std::uint32_t kFixtureVersion = 1;
inline constexpr std::size_t kFixtureHeaderBytes = 4 + 4 + 4 * 8;

void write_tensor(const Tensor4& t, std::ostream& out);
void write_tensor(const Tensor4& t, const std::filesystem::path& path);

// Throws FormatError on bad magic/version, zero or overflowing dims, a
// truncated payload, or trailing bytes.
Tensor4 read_tensor(std::istream& in);
Tensor4 read_tensor(const std::filesystem::path& path);

}  // namespace im2win
