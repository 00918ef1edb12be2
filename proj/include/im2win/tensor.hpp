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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace im2win {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filter does not fit the input, zero stride, and similar.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A run would need more memory than allowed.
class ResourceError : public Error {
 public:
  using Error::Error;
};

struct Dims4 {
  std::size_t d0 = 0, d1 = 0, d2 = 0, d3 = 0;

  std::size_t count() const noexcept { return d0 * d1 * d2 * d3; }
  friend bool operator==(const Dims4&, const Dims4&) = default;
};

std::string to_string(const Dims4& d);

// View of one batch element (C x H x W) of an NCHW tensor.
struct ImageView {
  std::span<const float> data;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  float at(std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data[(c * height + h) * width + w];
  }
};

/// Dense 4-D tensor of 32-bit reals, row-major with d3 fastest.
///
/// Used for input (N, C_i, H_i, W_i), filter (C_o, C_i, H_f, W_f) and
/// output (N, C_o, H_o, W_o).
class Tensor4 {
 public:
  Tensor4() = default;
  // Zero-filled.
  explicit Tensor4(const Dims4& dims);
  Tensor4(const Dims4& dims, std::vector<float> data);

  const Dims4& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t offset(std::size_t a, std::size_t b, std::size_t c,
                     std::size_t d) const noexcept {
    return ((a * dims_.d1 + b) * dims_.d2 + c) * dims_.d3 + d;
  }
  std::array<std::size_t, 4> unravel(std::size_t flat) const noexcept;

  float& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
    return data_[offset(a, b, c, d)];
  }
  float operator()(std::size_t a, std::size_t b, std::size_t c,
                   std::size_t d) const noexcept {
    return data_[offset(a, b, c, d)];
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  ImageView image(std::size_t a) const;
  std::span<float> image_data(std::size_t a);

 private:
  Dims4 dims_{};
  std::vector<float> data_;
};

/// Row-major 2-D matrix (im2col matrix, unfolded filter, GEMM result).
class Mat2 {
 public:
  Mat2() = default;
  Mat2(std::size_t rows, std::size_t cols);
  Mat2(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  static Mat2 identity(std::size_t n);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<float> data_;
};

/// Filter geometry and stride of an unpadded, undilated convolution.
struct ConvParams {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t h_f = 1;
  std::size_t w_f = 1;
  std::size_t stride = 1;

  void validate() const;
};

struct OutputDims {
  std::size_t h_o = 0, w_o = 0;
  friend bool operator==(const OutputDims&, const OutputDims&) = default;
};

// h_o = (h_i - h_f) / s + 1, likewise for w_o. Throws GeometryError when the
// filter does not fit.
OutputDims output_dims(std::size_t h_i, std::size_t w_i, const ConvParams& p);

/// Every derived extent of one convolution problem.
struct ConvGeometry {
  std::size_t n = 0, c_i = 0, h_i = 0, w_i = 0;
  std::size_t c_o = 0, h_f = 0, w_f = 0, stride = 1;
  std::size_t h_o = 0, w_o = 0;
  // Source-column span of one output row: (w_o - 1) * s + w_f.
  std::size_t w_eff = 0;

  Dims4 input_dims() const noexcept { return {n, c_i, h_i, w_i}; }
  Dims4 filter_dims() const noexcept { return {c_o, c_i, h_f, w_f}; }
  Dims4 output_dims() const noexcept { return {n, c_o, h_o, w_o}; }
};

ConvGeometry make_geometry(const Dims4& input, const ConvParams& p);
// Also checks that the filter dims equal (C_o, C_i, H_f, W_f).
ConvGeometry make_geometry(const Dims4& input, const Dims4& filter, const ConvParams& p);

/// max over elements of |a-b| / max(|a|, |b|, 1).
double max_rel_diff(std::span<const float> a, std::span<const float> b);
double max_rel_diff(const Tensor4& a, const Tensor4& b);

bool bit_equal(const Tensor4& a, const Tensor4& b) noexcept;

// Uniform reals in [lo, hi) from a seeded 64-bit Mersenne Twister.
void fill_uniform(std::span<float> out, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f);
Tensor4 random_tensor(const Dims4& dims, std::uint64_t seed);
// 0, 1, 2, ... in row-major order.
Tensor4 iota_tensor(const Dims4& dims);

}  // namespace im2win
