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

#include "im2win/reference.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>

namespace im2win {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

GemmDims gemm_dims(const ConvGeometry& g) noexcept {
  return {g.c_o, g.n * g.h_o * g.w_o, g.c_i * g.h_f * g.w_f};
}

Tensor4 conv_direct(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                    const ExecPolicy& exec) {
  const ConvGeometry g = make_geometry(input.dims(), filter.dims(), p);
  const auto t0 = Clock::now();
  Tensor4 out(g.output_dims());
  const float* in = input.data().data();
  const float* flt = filter.data().data();
  float* dst = out.data().data();
  const std::size_t s = g.stride;

  // One task per output row (i, j, m); the n loop is innermost so each
  // element still sees its (r, u, v) terms in ascending order.
  const std::size_t rows = g.n * g.c_o * g.h_o;
  parallel_for(rows, resolve_workers(exec), [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<float> acc(g.w_o);
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t m = row % g.h_o;
      const std::size_t j = (row / g.h_o) % g.c_o;
      const std::size_t i = row / (g.h_o * g.c_o);
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (std::size_t r = 0; r < g.c_i; ++r) {
        const float* in_plane = in + (i * g.c_i + r) * g.h_i * g.w_i;
        const float* f_plane = flt + (j * g.c_i + r) * g.h_f * g.w_f;
        for (std::size_t u = 0; u < g.h_f; ++u) {
          const float* in_row = in_plane + (m * s + u) * g.w_i;
          for (std::size_t v = 0; v < g.w_f; ++v) {
            const float w = f_plane[u * g.w_f + v];
            const float* x = in_row + v;
            for (std::size_t n = 0; n < g.w_o; ++n) acc[n] += x[n * s] * w;
          }
        }
      }
      std::copy(acc.begin(), acc.end(), dst + row * g.w_o);
    }
  });
  if (exec.times) exec.times->compute_s += seconds_since(t0);
  return out;
}

Mat2 gemm(const Mat2& a, const Mat2& b, const ExecPolicy& exec) {
  if (a.cols() != b.rows()) {
    throw ShapeError("gemm inner dims differ: " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Mat2 c(m, n);
  constexpr std::size_t kRowBlock = 16;
  constexpr std::size_t kDepthBlock = 256;
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  const std::size_t row_blocks = (m + kRowBlock - 1) / kRowBlock;
  parallel_for(row_blocks, resolve_workers(exec), [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t rb = begin; rb < end; ++rb) {
      const std::size_t i0 = rb * kRowBlock, i1 = std::min(m, i0 + kRowBlock);
      // k blocks ascend in the outer loop and k ascends inside each block.
      for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(k, k0 + kDepthBlock);
        for (std::size_t i = i0; i < i1; ++i) {
          float* crow = pc + i * n;
          for (std::size_t kk = k0; kk < k1; ++kk) {
            const float aik = pa[i * k + kk];
            const float* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
          }
        }
      }
    }
  });
  return c;
}

Tensor4 conv_im2col_gemm(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                         const ExecPolicy& exec) {
  const ConvGeometry g = make_geometry(input.dims(), filter.dims(), p);
  Tensor4 out(g.output_dims());
  auto t0 = Clock::now();
  const Mat2 fmat = filter_to_matrix(filter, p);
  double transform_s = seconds_since(t0);
  double compute_s = 0.0;
  // One image's im2col matrix alive at a time.
  for (std::size_t i = 0; i < g.n; ++i) {
    t0 = Clock::now();
    const Mat2 cols = im2col(input.image(i), p);
    transform_s += seconds_since(t0);
    t0 = Clock::now();
    const Mat2 r = gemm(cols, fmat, exec);
    output_from_matrix(r, g.h_o, g.w_o, out.image_data(i));
    compute_s += seconds_since(t0);
  }
  if (exec.times) {
    exec.times->transform_s += transform_s;
    exec.times->compute_s += compute_s;
  }
  return out;
}

Tensor4 conv_implicit_gemm(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                           const ExecPolicy& exec) {
  const ConvGeometry g = make_geometry(input.dims(), filter.dims(), p);
  const auto t0 = Clock::now();
  Tensor4 out(g.output_dims());
  const GemmDims d = gemm_dims(g);
  const float* in = input.data().data();
  const float* flt = filter.data().data();
  float* dst = out.data().data();

  // 32-bit index arithmetic in the k loop; K is far below 2^32 for any layer.
  const auto hw_o = static_cast<std::uint32_t>(g.h_o * g.w_o);
  const auto w_o = static_cast<std::uint32_t>(g.w_o);
  const auto taps = static_cast<std::uint32_t>(g.h_f * g.w_f);
  const auto w_f = static_cast<std::uint32_t>(g.w_f);
  const auto k_total = static_cast<std::uint32_t>(d.k);
  const std::size_t s = g.stride;

  parallel_for(d.m * d.n, resolve_workers(exec), [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t item = begin; item < end; ++item) {
      const std::size_t m = item / d.n;
      const std::size_t n = item % d.n;
      const std::size_t o_c = m;
      const std::size_t o_n = n / hw_o;
      const std::size_t o_h = (n % hw_o) / w_o;
      const std::size_t o_w = (n % hw_o) % w_o;
      float acc = 0.0f;
      for (std::uint32_t k = 0; k < k_total; ++k) {
        const std::uint32_t f_c = k / taps;
        const std::uint32_t k_res = k % taps;
        const std::uint32_t f_h = k_res / w_f;
        const std::uint32_t f_w = k_res % w_f;
        const std::size_t i_h = o_h * s + f_h;
        const std::size_t i_w = o_w * s + f_w;
        acc += in[((o_n * g.c_i + f_c) * g.h_i + i_h) * g.w_i + i_w] *
               flt[((o_c * g.c_i + f_c) * g.h_f + f_h) * g.w_f + f_w];
      }
      dst[((o_n * g.c_o + o_c) * g.h_o + o_h) * g.w_o + o_w] = acc;
    }
  });
  if (exec.times) exec.times->compute_s += seconds_since(t0);
  return out;
}

Tensor4 conv_im2win_basic(const Im2winTensor& win, const Tensor4& filter, const ExecPolicy& exec) {
  const ConvGeometry& g = win.geometry();
  if (filter.dims() != g.filter_dims()) {
    throw ShapeError("filter dims " + to_string(filter.dims()) + " do not match " +
                     to_string(g.filter_dims()));
  }
  const auto t0 = Clock::now();
  Tensor4 out(g.output_dims());
  const GemmDims d = gemm_dims(g);
  const float* flt = filter.data().data();
  const float* src = win.data().data();
  float* dst = out.data().data();

  const auto hw_o = static_cast<std::uint32_t>(g.h_o * g.w_o);
  const auto w_o = static_cast<std::uint32_t>(g.w_o);
  const auto taps = static_cast<std::uint32_t>(g.h_f * g.w_f);
  const auto w_f = static_cast<std::uint32_t>(g.w_f);
  const auto k_total = static_cast<std::uint32_t>(d.k);

  // Work item (m, n) owns output element (o_n, m, o_h, o_w).
  parallel_for(d.m * d.n, resolve_workers(exec), [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t item = begin; item < end; ++item) {
      const std::size_t m = item / d.n;
      const std::size_t n = item % d.n;
      const std::size_t o_n = n / hw_o;
      const std::size_t o_h = (n % hw_o) / w_o;
      const std::size_t o_w = (n % hw_o) % w_o;
      const float* f_row = flt + m * d.k;
      float acc = 0.0f;
      for (std::uint32_t k = 0; k < k_total; ++k) {
        const std::uint32_t f_c = k / taps;
        const std::uint32_t k_res = k % taps;
        const std::uint32_t f_h = k_res / w_f;
        const std::uint32_t f_w = k_res % w_f;
        acc += src[win.window_offset(o_n, f_c, o_h, f_h, f_w, o_w)] * f_row[k];
      }
      dst[((o_n * g.c_o + m) * g.h_o + o_h) * g.w_o + o_w] = acc;
    }
  });
  if (exec.times) exec.times->compute_s += seconds_since(t0);
  return out;
}

Tensor4 conv_im2win_basic(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                          const ExecPolicy& exec) {
  make_geometry(input.dims(), filter.dims(), p);
  const auto t0 = Clock::now();
  const Im2winTensor win = im2win(input, p, exec);
  if (exec.times) exec.times->transform_s += seconds_since(t0);
  return conv_im2win_basic(win, filter, exec);
}

}  // namespace im2win
