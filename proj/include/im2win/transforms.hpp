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

#include <cstdint>
#include <string_view>

#include "im2win/parallel.hpp"
#include "im2win/tensor.hpp"

namespace im2win {

/// Window-ordered copy of an NCHW input, shape (N, C_i, H_o, H_f * w_eff).
///
/// Row m of channel r holds the H_f input rows m*s .. m*s+H_f-1, interleaved
/// column by column: element (i, r, m, c*H_f + u) is I(i, r, m*s + u, c). The
/// window of output column n therefore occupies the contiguous slice
/// [n*s*H_f, n*s*H_f + H_f*W_f) of the row, and neighbouring windows overlap.
/// Only the w_eff = (W_o-1)*s + W_f columns that some window touches are
/// stored; w_eff == W_i whenever (W_i - W_f) is a multiple of s.
class Im2winTensor {
 public:
  Im2winTensor() = default;
  explicit Im2winTensor(const ConvGeometry& g);

  const ConvGeometry& geometry() const noexcept { return geom_; }
  std::size_t n() const noexcept { return geom_.n; }
  std::size_t c_i() const noexcept { return geom_.c_i; }
  std::size_t h_o() const noexcept { return geom_.h_o; }
  std::size_t w_eff() const noexcept { return geom_.w_eff; }
  std::size_t row_len() const noexcept { return geom_.h_f * geom_.w_eff; }
  std::size_t size() const noexcept { return data_.size(); }
  Dims4 dims() const noexcept { return {geom_.n, geom_.c_i, geom_.h_o, row_len()}; }

  std::size_t offset(std::size_t i, std::size_t r, std::size_t m, std::size_t col) const noexcept {
    return ((i * geom_.c_i + r) * geom_.h_o + m) * row_len() + col;
  }
  float at(std::size_t i, std::size_t r, std::size_t m, std::size_t col) const noexcept {
    return data_[offset(i, r, m, col)];
  }

  // Offset of tap (f_h, f_w) of the window producing output (o_h, o_w).
  std::size_t window_offset(std::size_t i_n, std::size_t i_c, std::size_t o_h, std::size_t f_h,
                            std::size_t f_w, std::size_t o_w) const noexcept {
    return offset(i_n, i_c, o_h, (o_w * geom_.stride + f_w) * geom_.h_f + f_h);
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  // The tensor as a plain (N, C_i, H_o, row_len) Tensor4 copy.
  Tensor4 to_tensor() const;

 private:
  ConvGeometry geom_{};
  std::vector<float> data_;
};

// M(m*W_o + n, (r*H_f + u)*W_f + v) = I'(r, m*s + u, n*s + v).
Mat2 im2col(const ImageView& image, const ConvParams& p);

// N((r*H_f + u)*W_f + v, j) = F(j, r, u, v).
Mat2 filter_to_matrix(const Tensor4& filter, const ConvParams& p);

// O(j, m, n) = R'(m*w_o + n, j), written into one (C_o, h_o, w_o) image.
void output_from_matrix(const Mat2& r_prime, std::size_t h_o, std::size_t w_o,
                        std::span<float> out_image);
Tensor4 output_from_matrix(const Mat2& r_prime, std::size_t h_o, std::size_t w_o);

Im2winTensor im2win(const Tensor4& input, const ConvParams& p, const ExecPolicy& exec = {});

// Checked read of input element (i_n, i_c, o_h*s + f_h, o_w*s + f_w) through
// the window layout.
float im2win_gather(const Im2winTensor& t, std::size_t i_n, std::size_t i_c, std::size_t o_h,
                    std::size_t f_h, std::size_t f_w, std::size_t o_w);

enum class Layout { raw, im2col, im2win };

std::string_view layout_name(Layout l) noexcept;

/// Elements materialised by a layout, for the whole batch of `input`:
///   raw    = N*C_i*H_i*W_i
///   im2col = N*(H_o*W_o)*(C_i*H_f*W_f)
///   im2win = N*C_i*H_o*H_f*w_eff
std::uint64_t footprint_elems(Layout layout, const Dims4& input, const ConvParams& p);

}  // namespace im2win
