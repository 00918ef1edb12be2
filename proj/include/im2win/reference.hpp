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

#include "im2win/parallel.hpp"
#include "im2win/tensor.hpp"
#include "im2win/transforms.hpp"

namespace im2win {

/// GEMM view of a convolution: M = C_o, N = N_i*H_o*W_o, K = C_i*H_f*W_f.
struct GemmDims {
  std::size_t m = 0, n = 0, k = 0;
  friend bool operator==(const GemmDims&, const GemmDims&) = default;
};

GemmDims gemm_dims(const ConvGeometry& g) noexcept;

struct NIndex {
  std::size_t i_n = 0, o_h = 0, o_w = 0;
  friend bool operator==(const NIndex&, const NIndex&) = default;
};
struct KIndex {
  std::size_t i_c = 0, f_h = 0, f_w = 0;
  friend bool operator==(const KIndex&, const KIndex&) = default;
};

// Index recovery by the div/mod rules of the implicit-GEMM loop nest.
inline NIndex decompose_n(std::size_t n, const ConvGeometry& g) noexcept {
  const std::size_t plane = g.h_o * g.w_o;
  const std::size_t rem = n % plane;
  return {n / plane, rem / g.w_o, rem % g.w_o};
}
inline KIndex decompose_k(std::size_t k, const ConvGeometry& g) noexcept {
  const std::size_t taps = g.h_f * g.w_f;
  const std::size_t rem = k % taps;
  return {k / taps, rem / g.w_f, rem % g.w_f};
}
inline std::size_t compose_n(const NIndex& x, const ConvGeometry& g) noexcept {
  return (x.i_n * g.h_o + x.o_h) * g.w_o + x.o_w;
}
inline std::size_t compose_k(const KIndex& x, const ConvGeometry& g) noexcept {
  return (x.i_c * g.h_f + x.f_h) * g.w_f + x.f_w;
}

// Every kernel below sums over k = (r, u, v) in ascending order starting from
// +0.0f with separate multiply and add, so they agree bit for bit.

/// Seven-loop direct convolution:
/// O(i,j,m,n) = sum_{r,u,v} I(i, r, m*s+u, n*s+v) * F(j, r, u, v).
Tensor4 conv_direct(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                    const ExecPolicy& exec = {});

/// C = A * B with 32-bit accumulation in ascending k.
Mat2 gemm(const Mat2& a, const Mat2& b, const ExecPolicy& exec = {});

/// Explicit lowering, one image at a time: im2col, GEMM against the unfolded
/// filter, reshape back to NCHW.
Tensor4 conv_im2col_gemm(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                         const ExecPolicy& exec = {});

/// Implicit GEMM: M/N/K loop nest that recovers tensor indices on the fly and
/// never materialises a matrix.
Tensor4 conv_implicit_gemm(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                           const ExecPolicy& exec = {});

/// Basic im2win convolution: one work item per (m, n) output element, looping
/// over K and reading the input only through the window tensor.
Tensor4 conv_im2win_basic(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                          const ExecPolicy& exec = {});
Tensor4 conv_im2win_basic(const Im2winTensor& win, const Tensor4& filter,
                          const ExecPolicy& exec = {});

}  // namespace im2win
