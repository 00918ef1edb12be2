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

#include "im2win/reference.hpp"
#include "im2win/transforms.hpp"

namespace im2win {
namespace {

// Independent scalar oracle for the convolution sum.
Tensor4 naive_conv(const Tensor4& in, const Tensor4& f, std::size_t s) {
  const ConvParams p{in.dims().d1, f.dims().d0, f.dims().d2, f.dims().d3, s};
  const ConvGeometry g = make_geometry(in.dims(), f.dims(), p);
  Tensor4 out(g.output_dims());
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.c_o; ++j)
      for (std::size_t m = 0; m < g.h_o; ++m)
        for (std::size_t n = 0; n < g.w_o; ++n) {
          float acc = 0.0f;
          for (std::size_t r = 0; r < g.c_i; ++r)
            for (std::size_t u = 0; u < g.h_f; ++u)
              for (std::size_t v = 0; v < g.w_f; ++v)
                acc += in(i, r, m * s + u, n * s + v) * f(j, r, u, v);
          out(i, j, m, n) = acc;
        }
  return out;
}

using Kernel = Tensor4 (*)(const Tensor4&, const Tensor4&, const ConvParams&, const ExecPolicy&);

Tensor4 basic(const Tensor4& in, const Tensor4& f, const ConvParams& p, const ExecPolicy& e) {
  return conv_im2win_basic(in, f, p, e);
}

struct NamedKernel {
  const char* name;
  Kernel fn;
};

const NamedKernel kKernels[] = {
    {"direct", &conv_direct},
    {"im2col-gemm", &conv_im2col_gemm},
    {"implicit-gemm", &conv_implicit_gemm},
    {"im2win-basic", &basic},
};

class AllKernels : public ::testing::TestWithParam<NamedKernel> {};

TEST_P(AllKernels, SumOfFourOnes) {
  const Tensor4 in({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  const Tensor4 f({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  const Tensor4 out = GetParam().fn(in, f, {1, 1, 2, 2, 1}, {});
  ASSERT_EQ(out.dims(), (Dims4{1, 1, 1, 1}));
  EXPECT_EQ(out(0, 0, 0, 0), 4.0f);
}

TEST_P(AllKernels, IdentityFilter) {
  const Tensor4 in = iota_tensor({1, 1, 3, 3});
  const Tensor4 f({1, 1, 1, 1}, {1.0f});
  EXPECT_TRUE(bit_equal(GetParam().fn(in, f, {1, 1, 1, 1, 1}, {}), in));
}

TEST_P(AllKernels, TinyWindowSums) {
  const Tensor4 in = iota_tensor({1, 3, 3, 3});
  const Tensor4 f({2, 3, 2, 2}, std::vector<float>(24, 1.0f));
  const Tensor4 out = GetParam().fn(in, f, {3, 2, 2, 2, 1}, {});
  ASSERT_EQ(out.dims(), (Dims4{1, 2, 2, 2}));
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t n = 0; n < 2; ++n) {
        float want = 0;
        for (std::size_t r = 0; r < 3; ++r)
          for (std::size_t u = 0; u < 2; ++u)
            for (std::size_t v = 0; v < 2; ++v) want += in(0, r, m + u, n + v);
        EXPECT_EQ(out(0, j, m, n), want);
      }
}

TEST_P(AllKernels, OneByOneFilterMixesChannels) {
  const Tensor4 in = random_tensor({2, 3, 4, 5}, 1);
  const Tensor4 f = random_tensor({2, 3, 1, 1}, 2);
  const ConvParams p{3, 2, 1, 1, 1};
  EXPECT_TRUE(bit_equal(GetParam().fn(in, f, p, {}), conv_direct(in, f, p, {})));
}

TEST_P(AllKernels, BitEqualToNaiveOracleOnRandomGeometries) {
  std::mt19937 rng(17);
  std::uniform_int_distribution<std::size_t> dim(1, 13), ch(1, 4), stride(1, 4);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng);
    const ConvParams p{ch(rng), ch(rng), std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(h, 7))(rng),
                       std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(w, 7))(rng),
                       stride(rng)};
    const Tensor4 in = random_tensor({ch(rng), p.c_in, h, w}, 100 + trial);
    const Tensor4 f = random_tensor({p.c_out, p.c_in, p.h_f, p.w_f}, 200 + trial);
    ASSERT_TRUE(bit_equal(GetParam().fn(in, f, p, {}), naive_conv(in, f, p.stride)))
        << "trial " << trial;
  }
}

TEST_P(AllKernels, GeometryErrors) {
  const ConvParams p{1, 1, 3, 3, 1};
  EXPECT_THROW(GetParam().fn(Tensor4({1, 1, 2, 2}), Tensor4({1, 1, 3, 3}), p, {}), GeometryError);
  EXPECT_THROW(GetParam().fn(Tensor4({1, 2, 4, 4}), Tensor4({1, 1, 3, 3}), p, {}), ShapeError);
}

TEST_P(AllKernels, WorkerCountIndependent) {
  const Tensor4 in = random_tensor({2, 5, 13, 11}, 3);
  const Tensor4 f = random_tensor({6, 5, 3, 2}, 4);
  const ConvParams p{5, 6, 3, 2, 2};
  const Tensor4 one = GetParam().fn(in, f, p, {1});
  EXPECT_TRUE(bit_equal(GetParam().fn(in, f, p, {2}), one));
  EXPECT_TRUE(bit_equal(GetParam().fn(in, f, p, {7}), one));
  EXPECT_TRUE(bit_equal(GetParam().fn(in, f, p, {1}), one));
}

TEST_P(AllKernels, ReportsPhaseTimes) {
  PhaseTimes times;
  GetParam().fn(random_tensor({1, 2, 8, 8}, 1), random_tensor({2, 2, 3, 3}, 2), {2, 2, 3, 3, 1},
                {0, &times});
  EXPECT_GE(times.compute_s, 0.0);
  EXPECT_GE(times.transform_s, 0.0);
  EXPECT_GT(times.compute_s + times.transform_s, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Reference, AllKernels, ::testing::ValuesIn(kKernels),
                         [](const auto& info) {
                           std::string n = info.param.name;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });

TEST(Gemm, IdentityTimesRandomIsExact) {
  Mat2 b(4, 3);
  fill_uniform(b.data(), 5);
  const Mat2 c = gemm(Mat2::identity(4), b);
  EXPECT_TRUE(std::equal(c.data().begin(), c.data().end(), b.data().begin()));
}

TEST(Gemm, TwoByTwo) {
  const Mat2 c = gemm(Mat2(2, 2, {1, 2, 3, 4}), Mat2(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(c(0, 0), 19.0f);
  EXPECT_EQ(c(0, 1), 22.0f);
  EXPECT_EQ(c(1, 0), 43.0f);
  EXPECT_EQ(c(1, 1), 50.0f);
}

TEST(Gemm, ZerosTimesAnything) {
  Mat2 b(5, 300);
  fill_uniform(b.data(), 6);
  const Mat2 c = gemm(Mat2(7, 5), b);
  for (float v : c.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Gemm, MatchesTripleLoopAcrossBlocks) {
  Mat2 a(37, 530), b(530, 19);
  fill_uniform(a.data(), 7);
  fill_uniform(b.data(), 8);
  const Mat2 c = gemm(a, b, {2});
  for (std::size_t i = 0; i < 37; ++i)
    for (std::size_t j = 0; j < 19; ++j) {
      float acc = 0;
      for (std::size_t k = 0; k < 530; ++k) acc += a(i, k) * b(k, j);
      ASSERT_EQ(c(i, j), acc);
    }
}

TEST(Gemm, InnerDimMismatch) { EXPECT_THROW(gemm(Mat2(2, 3), Mat2(2, 3)), ShapeError); }

TEST(Im2colGemm, RandomSmallWithinTolerance) {
  const Tensor4 in = random_tensor({2, 3, 16, 16}, 9);
  const Tensor4 f = random_tensor({4, 3, 3, 3}, 10);
  const ConvParams p{3, 4, 3, 3, 1};
  EXPECT_LE(max_rel_diff(conv_im2col_gemm(in, f, p), conv_direct(in, f, p)), 1e-4);
}

TEST(Im2colGemm, Conv5Geometry) {
  const Tensor4 in = random_tensor({1, 96, 24, 24}, 11);
  const Tensor4 f = random_tensor({256, 96, 5, 5}, 12);
  const ConvParams p{96, 256, 5, 5, 1};
  EXPECT_LE(max_rel_diff(conv_im2col_gemm(in, f, p), conv_direct(in, f, p)), 1e-4);
}

TEST(Im2colGemm, DirectAgreementOnSmallRandomInput) {
  const Tensor4 in = random_tensor({2, 3, 8, 8}, 13);
  const Tensor4 f = random_tensor({2, 3, 3, 3}, 14);
  const ConvParams p{3, 2, 3, 3, 1};
  EXPECT_LE(max_rel_diff(conv_direct(in, f, p), conv_im2col_gemm(in, f, p)), 1e-4);
}

TEST(ImplicitGemm, TinyGeometryBitEqualToDirect) {
  const Tensor4 in = random_tensor({1, 3, 3, 3}, 15);
  const Tensor4 f = random_tensor({2, 3, 2, 2}, 16);
  const ConvParams p{3, 2, 2, 2, 1};
  EXPECT_TRUE(bit_equal(conv_implicit_gemm(in, f, p), conv_direct(in, f, p)));
}

TEST(ImplicitGemm, Conv12Geometry) {
  const Tensor4 in = random_tensor({2, 512, 7, 7}, 17);
  const Tensor4 f = random_tensor({512, 512, 3, 3}, 18);
  const ConvParams p{512, 512, 3, 3, 1};
  EXPECT_LE(max_rel_diff(conv_implicit_gemm(in, f, p), conv_direct(in, f, p)), 1e-4);
}

TEST(GemmDims, IndexRecoveryRoundTrips) {
  const ConvGeometry g = make_geometry({3, 4, 11, 9}, {5, 4, 3, 2}, {4, 5, 3, 2, 2});
  const GemmDims d = gemm_dims(g);
  EXPECT_EQ(d.m, 5u);
  EXPECT_EQ(d.n, 3u * g.h_o * g.w_o);
  EXPECT_EQ(d.k, 4u * 3 * 2);
  for (std::size_t n = 0; n < d.n; ++n) {
    const NIndex ni = decompose_n(n, g);
    ASSERT_LT(ni.o_h, g.h_o);
    ASSERT_LT(ni.o_w, g.w_o);
    ASSERT_EQ(compose_n(ni, g), n);
  }
  for (std::size_t k = 0; k < d.k; ++k) {
    const KIndex ki = decompose_k(k, g);
    ASSERT_LT(ki.f_h, g.h_f);
    ASSERT_EQ(compose_k(ki, g), k);
  }
}

TEST(Im2winBasic, AcceptsPrebuiltWindowTensor) {
  const Tensor4 in = random_tensor({2, 3, 12, 10}, 19);
  const Tensor4 f = random_tensor({4, 3, 3, 3}, 20);
  const ConvParams p{3, 4, 3, 3, 2};
  const Im2winTensor win = im2win(in, p);
  EXPECT_TRUE(bit_equal(conv_im2win_basic(win, f), conv_direct(in, f, p)));
  EXPECT_THROW(conv_im2win_basic(win, Tensor4({4, 3, 2, 3})), ShapeError);
}

}  // namespace
}  // namespace im2win
