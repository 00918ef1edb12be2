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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "im2win/transforms.hpp"

namespace im2win {
namespace {

// C_i = H_i = W_i = 3, 2x2 filter, s = 1, input values 0..26.
const ConvParams kTiny{3, 1, 2, 2, 1};
Tensor4 tiny_input() { return iota_tensor({1, 3, 3, 3}); }

TEST(Im2col, TinyHas48Elements) {
  const Mat2 m = im2col(tiny_input().image(0), kTiny);
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 12u);
  EXPECT_EQ(m.size(), 48u);
}

TEST(Im2col, SingleElement) {
  const Tensor4 t({1, 1, 1, 1}, {3.5f});
  const Mat2 m = im2col(t.image(0), {1, 1, 1, 1, 1});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m(0, 0), 3.5f);
}

TEST(Im2col, TinyFirstRowIsWindowZero) {
  const Tensor4 in = tiny_input();
  const Mat2 m = im2col(in.image(0), kTiny);
  std::size_t col = 0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t u = 0; u < 2; ++u)
      for (std::size_t v = 0; v < 2; ++v) EXPECT_EQ(m(0, col++), in(0, r, u, v));
}

TEST(Im2col, MatchesIndexFormulaWithStride) {
  const Tensor4 in = random_tensor({1, 2, 11, 9}, 4);
  const ConvParams p{2, 1, 3, 2, 3};
  const ConvGeometry g = make_geometry(in.dims(), p);
  const Mat2 m = im2col(in.image(0), p);
  ASSERT_EQ(m.rows(), g.h_o * g.w_o);
  for (std::size_t mm = 0; mm < g.h_o; ++mm)
    for (std::size_t n = 0; n < g.w_o; ++n)
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t u = 0; u < 3; ++u)
          for (std::size_t v = 0; v < 2; ++v)
            ASSERT_EQ(m(mm * g.w_o + n, (r * 3 + u) * 2 + v), in(0, r, mm * 3 + u, n * 3 + v));
}

TEST(FilterToMatrix, SingleUnfold) {
  const Tensor4 f({1, 1, 2, 2}, {1, 2, 3, 4});
  const Mat2 m = filter_to_matrix(f, {1, 1, 2, 2, 1});
  ASSERT_EQ(m.rows(), 4u);
  ASSERT_EQ(m.cols(), 1u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m(k, 0), static_cast<float>(k + 1));
}

TEST(FilterToMatrix, TinyTwoOutputChannels) {
  const Mat2 m = filter_to_matrix(random_tensor({2, 3, 2, 2}, 1), {3, 2, 2, 2, 1});
  EXPECT_EQ(m.rows(), 12u);
  EXPECT_EQ(m.cols(), 2u);
}

TEST(FilterToMatrix, ExhaustiveIndexCheck) {
  const Tensor4 f = random_tensor({4, 3, 3, 3}, 2);
  const Mat2 m = filter_to_matrix(f, {3, 4, 3, 3, 1});
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t v = 0; v < 3; ++v) ASSERT_EQ(m(r * 9 + u * 3 + v, j), f(j, r, u, v));
}

TEST(FilterToMatrix, DimMismatch) {
  EXPECT_THROW(filter_to_matrix(Tensor4({4, 3, 3, 3}), {3, 4, 2, 2, 1}), ShapeError);
}

TEST(OutputFromMatrix, Scalar) {
  const Tensor4 o = output_from_matrix(Mat2(1, 1, {7.0f}), 1, 1);
  EXPECT_EQ(o.dims(), (Dims4{1, 1, 1, 1}));
  EXPECT_EQ(o(0, 0, 0, 0), 7.0f);
}

TEST(OutputFromMatrix, ChannelPlaneIsColumn) {
  const Mat2 r(4, 2, {0, 10, 1, 11, 2, 12, 3, 13});
  const Tensor4 o = output_from_matrix(r, 2, 2);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 2; ++n) EXPECT_EQ(o(0, 1, m, n), 10.0f + m * 2 + n);
}

TEST(OutputFromMatrix, InverseFlattening) {
  Mat2 r(9, 5);
  fill_uniform(r.data(), 3);
  const Tensor4 o = output_from_matrix(r, 3, 3);
  Mat2 back(9, 5);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t n = 0; n < 3; ++n) back(m * 3 + n, j) = o(0, j, m, n);
  EXPECT_TRUE(std::equal(r.data().begin(), r.data().end(), back.data().begin()));
}

TEST(OutputFromMatrix, ShapeMismatch) {
  EXPECT_THROW(output_from_matrix(Mat2(8, 2), 3, 3), ShapeError);
}

TEST(Im2win, TinyHas36Elements) {
  const Im2winTensor t = im2win(tiny_input(), kTiny);
  EXPECT_EQ(t.size(), 36u);
  EXPECT_EQ(t.dims(), (Dims4{1, 3, 2, 6}));
}

TEST(Im2win, TinyLayoutValues) {
  // Channel 0, row 0 interleaves input rows 0 and 1 column by column.
  const Im2winTensor t = im2win(tiny_input(), kTiny);
  const std::vector<float> row0{0, 3, 1, 4, 2, 5};
  const std::vector<float> row1{3, 6, 4, 7, 5, 8};
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(t.at(0, 0, 0, c), row0[c]);
    EXPECT_EQ(t.at(0, 0, 1, c), row1[c]);
    EXPECT_EQ(t.at(0, 2, 1, c), row1[c] + 18);
  }
}

TEST(Im2win, SingleWindowIsColumnMajorPermutation) {
  const Tensor4 in = iota_tensor({1, 2, 4, 3});
  const Im2winTensor t = im2win(in, {2, 1, 4, 3, 1});
  ASSERT_EQ(t.size(), in.size());
  std::multiset<float> a(in.data().begin(), in.data().end());
  std::multiset<float> b(t.data().begin(), t.data().end());
  EXPECT_EQ(a, b);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t u = 0; u < 4; ++u) EXPECT_EQ(t.at(0, r, 0, c * 4 + u), in(0, r, u, c));
}

TEST(Im2win, Conv1ElementCount) {
  const ConvParams p{3, 96, 11, 11, 4};
  const Im2winTensor t = im2win(Tensor4({1, 3, 227, 227}), p);
  EXPECT_EQ(t.size(), 412005u);
  EXPECT_EQ(t.size(), 3u * 55 * 11 * 227);
}

TEST(Im2win, InvariantsOnRandomGeometries) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 12), small(1, 3), stride(1, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng);
    std::uniform_int_distribution<std::size_t> fh(1, h), fw(1, w);
    const ConvParams p{small(rng), 1, fh(rng), fw(rng), stride(rng)};
    const Tensor4 in = random_tensor({small(rng), p.c_in, h, w}, trial);
    const ConvGeometry g = make_geometry(in.dims(), p);
    const Im2winTensor t = im2win(in, p);
    ASSERT_EQ(t.size(), g.n * g.c_i * g.h_o * g.h_f * g.w_eff);
    if ((w - p.w_f) % p.stride == 0) {
      ASSERT_EQ(g.w_eff, w);
    }
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t r = 0; r < g.c_i; ++r)
        for (std::size_t m = 0; m < g.h_o; ++m) {
          for (std::size_t c = 0; c < g.w_eff; ++c)
            for (std::size_t u = 0; u < g.h_f; ++u)
              ASSERT_EQ(t.at(i, r, m, c * g.h_f + u), in(i, r, m * g.stride + u, c));
          // Window n is the contiguous slice starting at n*s*H_f.
          for (std::size_t n = 0; n < g.w_o; ++n)
            for (std::size_t v = 0; v < g.w_f; ++v)
              for (std::size_t u = 0; u < g.h_f; ++u)
                ASSERT_EQ(t.at(i, r, m, n * g.stride * g.h_f + v * g.h_f + u),
                          in(i, r, m * g.stride + u, n * g.stride + v));
        }
  }
}

TEST(Im2win, WorkerCountDoesNotChangeLayout) {
  const Tensor4 in = random_tensor({2, 3, 17, 15}, 8);
  const ConvParams p{3, 1, 4, 3, 2};
  const Im2winTensor a = im2win(in, p, {1});
  const Im2winTensor b = im2win(in, p, {3});
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Im2winGather, FirstElement) {
  const Im2winTensor t = im2win(random_tensor({1, 2, 5, 5}, 1), {2, 1, 3, 3, 1});
  EXPECT_EQ(im2win_gather(t, 0, 0, 0, 0, 0, 0), t.data()[0]);
}

TEST(Im2winGather, TinySecondWindow) {
  const Im2winTensor t = im2win(tiny_input(), kTiny);
  // Window (m=0, n=1) covers rows 0..1, columns 1..2 of every channel.
  std::vector<float> got;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t u = 0; u < 2; ++u)
      for (std::size_t v = 0; v < 2; ++v) got.push_back(im2win_gather(t, 0, r, 0, u, v, 1));
  const std::vector<float> want{1, 2, 4, 5, 10, 11, 13, 14, 19, 20, 22, 23};
  EXPECT_EQ(got, want);
}

TEST(Im2winGather, MatchesDirectIndexing) {
  const Tensor4 in = random_tensor({2, 3, 19, 23}, 5);
  const ConvParams p{3, 1, 5, 4, 3};
  const ConvGeometry g = make_geometry(in.dims(), p);
  const Im2winTensor t = im2win(in, p);
  std::mt19937 rng(6);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = pick(g.n), c = pick(g.c_i), oh = pick(g.h_o), fh = pick(g.h_f),
                      fw = pick(g.w_f), ow = pick(g.w_o);
    ASSERT_EQ(im2win_gather(t, n, c, oh, fh, fw, ow),
              in(n, c, oh * g.stride + fh, ow * g.stride + fw));
  }
}

TEST(Im2winGather, OutOfRange) {
  const Im2winTensor t = im2win(tiny_input(), kTiny);
  EXPECT_THROW(im2win_gather(t, 1, 0, 0, 0, 0, 0), IndexError);
  EXPECT_THROW(im2win_gather(t, 0, 3, 0, 0, 0, 0), IndexError);
  EXPECT_THROW(im2win_gather(t, 0, 0, 2, 0, 0, 0), IndexError);
  EXPECT_THROW(im2win_gather(t, 0, 0, 0, 2, 0, 0), IndexError);
  EXPECT_THROW(im2win_gather(t, 0, 0, 0, 0, 2, 0), IndexError);
  EXPECT_THROW(im2win_gather(t, 0, 0, 0, 0, 0, 2), IndexError);
}

TEST(Footprint, TinyCounts) {
  EXPECT_EQ(footprint_elems(Layout::raw, {1, 3, 3, 3}, kTiny), 27u);
  EXPECT_EQ(footprint_elems(Layout::im2col, {1, 3, 3, 3}, kTiny), 48u);
  EXPECT_EQ(footprint_elems(Layout::im2win, {1, 3, 3, 3}, kTiny), 36u);
}

TEST(Footprint, Conv1Counts) {
  const ConvParams p{3, 96, 11, 11, 4};
  EXPECT_EQ(footprint_elems(Layout::raw, {1, 3, 227, 227}, p), 154587u);
  EXPECT_EQ(footprint_elems(Layout::im2col, {1, 3, 227, 227}, p), 1098075u);
  EXPECT_EQ(footprint_elems(Layout::im2win, {1, 3, 227, 227}, p), 412005u);
}

TEST(Footprint, OneByOneFilterDuplicatesNothing) {
  const Dims4 in{2, 5, 7, 6};
  const ConvParams p{5, 3, 1, 1, 1};
  const auto raw = footprint_elems(Layout::raw, in, p);
  EXPECT_EQ(footprint_elems(Layout::im2col, in, p), raw);
  EXPECT_EQ(footprint_elems(Layout::im2win, in, p), raw);
}

TEST(Footprint, MatchesMaterialization) {
  std::mt19937 rng(21);
  std::uniform_int_distribution<std::size_t> dim(2, 14), stride(1, 4);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng);
    const ConvParams p{2, 1, std::uniform_int_distribution<std::size_t>(1, h)(rng),
                       std::uniform_int_distribution<std::size_t>(1, w)(rng), stride(rng)};
    const Tensor4 in({2, 2, h, w});
    EXPECT_EQ(footprint_elems(Layout::im2col, in.dims(), p),
              2 * im2col(in.image(0), p).size());
    EXPECT_EQ(footprint_elems(Layout::im2win, in.dims(), p), im2win(in, p).size());
  }
}

TEST(Footprint, GeometryErrorPropagates) {
  EXPECT_THROW(footprint_elems(Layout::im2win, {1, 1, 2, 2}, {1, 1, 3, 3, 1}), GeometryError);
}

}  // namespace
}  // namespace im2win
