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

#include "im2win/transforms.hpp"

namespace im2win {

Im2winTensor::Im2winTensor(const ConvGeometry& g)
    : geom_(g), data_(g.n * g.c_i * g.h_o * g.h_f * g.w_eff, 0.0f) {}

Tensor4 Im2winTensor::to_tensor() const {
  return Tensor4(dims(), data_);
}

Mat2 im2col(const ImageView& image, const ConvParams& p) {
  const ConvGeometry g = make_geometry({1, image.channels, image.height, image.width}, p);
  const std::size_t k = g.c_i * g.h_f * g.w_f;
  Mat2 m(g.h_o * g.w_o, k);
  for (std::size_t oh = 0; oh < g.h_o; ++oh) {
    for (std::size_t ow = 0; ow < g.w_o; ++ow) {
      float* row = m.data().data() + (oh * g.w_o + ow) * k;
      for (std::size_t r = 0; r < g.c_i; ++r) {
        for (std::size_t u = 0; u < g.h_f; ++u) {
          for (std::size_t v = 0; v < g.w_f; ++v) {
            *row++ = image.at(r, oh * g.stride + u, ow * g.stride + v);
          }
        }
      }
    }
  }
  return m;
}

Mat2 filter_to_matrix(const Tensor4& filter, const ConvParams& p) {
  p.validate();
  const Dims4 expect{p.c_out, p.c_in, p.h_f, p.w_f};
  if (filter.dims() != expect) {
    throw ShapeError("filter dims " + to_string(filter.dims()) + " do not match " +
                     to_string(expect));
  }
  const std::size_t k = p.c_in * p.h_f * p.w_f;
  Mat2 n(k, p.c_out);
  // F is (C_o, K) row-major, so this is a transpose.
  const auto src = filter.data();
  for (std::size_t j = 0; j < p.c_out; ++j) {
    for (std::size_t kk = 0; kk < k; ++kk) n(kk, j) = src[j * k + kk];
  }
  return n;
}

void output_from_matrix(const Mat2& r_prime, std::size_t h_o, std::size_t w_o,
                        std::span<float> out_image) {
  if (r_prime.rows() != h_o * w_o) {
    throw ShapeError("result matrix has " + std::to_string(r_prime.rows()) + " rows, expected " +
                     std::to_string(h_o * w_o));
  }
  const std::size_t c_o = r_prime.cols();
  if (out_image.size() != c_o * h_o * w_o) {
    throw ShapeError("output image size mismatch");
  }
  const std::size_t plane = h_o * w_o;
  for (std::size_t pix = 0; pix < plane; ++pix) {
    for (std::size_t j = 0; j < c_o; ++j) out_image[j * plane + pix] = r_prime(pix, j);
  }
}

Tensor4 output_from_matrix(const Mat2& r_prime, std::size_t h_o, std::size_t w_o) {
  if (h_o == 0 || w_o == 0) throw ShapeError("output extents must be positive");
  Tensor4 out({1, r_prime.cols(), h_o, w_o});
  output_from_matrix(r_prime, h_o, w_o, out.data());
  return out;
}

Im2winTensor im2win(const Tensor4& input, const ConvParams& p, const ExecPolicy& exec) {
  const ConvGeometry g = make_geometry(input.dims(), p);
  Im2winTensor t(g);
  const std::size_t h_f = g.h_f;
  const std::size_t rows = g.n * g.c_i * g.h_o;
  const auto src = input.data();
  auto dst = t.data();
  // Each (image, channel, output row) is an independent pure copy.
  parallel_for(rows, resolve_workers(exec), [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t m = row % g.h_o;
      const std::size_t plane = row / g.h_o;  // i * C_i + r
      const float* in_plane = src.data() + plane * g.h_i * g.w_i;
      float* out = dst.data() + row * t.row_len();
      for (std::size_t u = 0; u < h_f; ++u) {
        const float* in_row = in_plane + (m * g.stride + u) * g.w_i;
        for (std::size_t c = 0; c < g.w_eff; ++c) out[c * h_f + u] = in_row[c];
      }
    }
  });
  return t;
}

float im2win_gather(const Im2winTensor& t, std::size_t i_n, std::size_t i_c, std::size_t o_h,
                    std::size_t f_h, std::size_t f_w, std::size_t o_w) {
  const ConvGeometry& g = t.geometry();
  if (i_n >= g.n || i_c >= g.c_i || o_h >= g.h_o || f_h >= g.h_f || f_w >= g.w_f ||
      o_w >= g.w_o) {
    throw IndexError("im2win_gather index out of range");
  }
  return t.data()[t.window_offset(i_n, i_c, o_h, f_h, f_w, o_w)];
}

std::string_view layout_name(Layout l) noexcept {
  switch (l) {
    case Layout::raw: return "raw";
    case Layout::im2col: return "im2col";
    case Layout::im2win: return "im2win";
  }
  return "?";
}

std::uint64_t footprint_elems(Layout layout, const Dims4& input, const ConvParams& p) {
  const ConvGeometry g = make_geometry(input, p);
  const std::uint64_t n = g.n;
  switch (layout) {
    case Layout::raw:
      return n * g.c_i * g.h_i * g.w_i;
    case Layout::im2col:
      return n * (std::uint64_t{g.h_o} * g.w_o) * (std::uint64_t{g.c_i} * g.h_f * g.w_f);
    case Layout::im2win:
      return n * g.c_i * g.h_o * g.h_f * g.w_eff;
  }
  return 0;
}

}  // namespace im2win
