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

#include "im2win/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace im2win {

std::string to_string(const Dims4& d) {
  return std::to_string(d.d0) + "x" + std::to_string(d.d1) + "x" + std::to_string(d.d2) + "x" +
         std::to_string(d.d3);
}

namespace {

void check_positive(const Dims4& dims) {
  if (dims.d0 == 0 || dims.d1 == 0 || dims.d2 == 0 || dims.d3 == 0) {
    throw ShapeError("tensor dims must be positive, got " + to_string(dims));
  }
}

}  // namespace

Tensor4::Tensor4(const Dims4& dims) : dims_(dims) {
  check_positive(dims);
  data_.assign(dims.count(), 0.0f);
}

Tensor4::Tensor4(const Dims4& dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  check_positive(dims);
  if (data_.size() != dims.count()) {
    throw ShapeError("tensor " + to_string(dims) + " needs " + std::to_string(dims.count()) +
                     " values, got " + std::to_string(data_.size()));
  }
}

std::array<std::size_t, 4> Tensor4::unravel(std::size_t flat) const noexcept {
  std::array<std::size_t, 4> idx{};
  idx[3] = flat % dims_.d3;
  flat /= dims_.d3;
  idx[2] = flat % dims_.d2;
  flat /= dims_.d2;
  idx[1] = flat % dims_.d1;
  idx[0] = flat / dims_.d1;
  return idx;
}

ImageView Tensor4::image(std::size_t a) const {
  if (a >= dims_.d0) {
    throw IndexError("batch index " + std::to_string(a) + " out of range");
  }
  const std::size_t plane = dims_.d1 * dims_.d2 * dims_.d3;
  return ImageView{std::span<const float>(data_).subspan(a * plane, plane), dims_.d1, dims_.d2,
                   dims_.d3};
}

std::span<float> Tensor4::image_data(std::size_t a) {
  if (a >= dims_.d0) {
    throw IndexError("batch index " + std::to_string(a) + " out of range");
  }
  const std::size_t plane = dims_.d1 * dims_.d2 * dims_.d3;
  return std::span<float>(data_).subspan(a * plane, plane);
}

Mat2::Mat2(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dims must be positive");
  }
  data_.assign(rows * cols, 0.0f);
}

Mat2::Mat2(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dims must be positive");
  }
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " got " + std::to_string(data_.size()) + " values");
  }
}

Mat2 Mat2::identity(std::size_t n) {
  Mat2 m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

void ConvParams::validate() const {
  if (stride == 0) throw GeometryError("stride must be >= 1");
  if (c_in == 0 || c_out == 0 || h_f == 0 || w_f == 0) {
    throw GeometryError("channel counts and filter extents must be >= 1");
  }
}

OutputDims output_dims(std::size_t h_i, std::size_t w_i, const ConvParams& p) {
  p.validate();
  if (p.h_f > h_i || p.w_f > w_i) {
    throw GeometryError("filter " + std::to_string(p.h_f) + "x" + std::to_string(p.w_f) +
                        " larger than input " + std::to_string(h_i) + "x" + std::to_string(w_i));
  }
  return {(h_i - p.h_f) / p.stride + 1, (w_i - p.w_f) / p.stride + 1};
}

ConvGeometry make_geometry(const Dims4& input, const ConvParams& p) {
  check_positive(input);
  if (input.d1 != p.c_in) {
    throw ShapeError("input has " + std::to_string(input.d1) + " channels, params say " +
                     std::to_string(p.c_in));
  }
  const OutputDims od = output_dims(input.d2, input.d3, p);
  ConvGeometry g;
  g.n = input.d0;
  g.c_i = input.d1;
  g.h_i = input.d2;
  g.w_i = input.d3;
  g.c_o = p.c_out;
  g.h_f = p.h_f;
  g.w_f = p.w_f;
  g.stride = p.stride;
  g.h_o = od.h_o;
  g.w_o = od.w_o;
  g.w_eff = (od.w_o - 1) * p.stride + p.w_f;
  return g;
}

ConvGeometry make_geometry(const Dims4& input, const Dims4& filter, const ConvParams& p) {
  ConvGeometry g = make_geometry(input, p);
  if (filter != g.filter_dims()) {
    throw ShapeError("filter dims " + to_string(filter) + " do not match expected " +
                     to_string(g.filter_dims()));
  }
  return g;
}

double max_rel_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ShapeError("max_rel_diff: size mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    const double denom = std::max({std::fabs(x), std::fabs(y), 1.0});
    const double d = std::fabs(x - y) / denom;
    // NaN never compares greater; surface it explicitly.
    if (std::isnan(d)) return d;
    worst = std::max(worst, d);
  }
  return worst;
}

double max_rel_diff(const Tensor4& a, const Tensor4& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("max_rel_diff: dims " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
  return max_rel_diff(a.data(), b.data());
}

bool bit_equal(const Tensor4& a, const Tensor4& b) noexcept {
  return a.dims() == b.dims() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

void fill_uniform(std::span<float> out, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (float& v : out) v = dist(rng);
}

Tensor4 random_tensor(const Dims4& dims, std::uint64_t seed) {
  Tensor4 t(dims);
  fill_uniform(t.data(), seed);
  return t;
}

Tensor4 iota_tensor(const Dims4& dims) {
  Tensor4 t(dims);
  float v = 0.0f;
  for (float& x : t.data()) x = v++;
  return t;
}

}  // namespace im2win
