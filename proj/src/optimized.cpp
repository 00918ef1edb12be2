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

#include "im2win/optimized.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <experimental/simd>
#include <mutex>
#include <vector>

namespace im2win {

namespace stdx = std::experimental;
using Vec8 = stdx::fixed_size_simd<float, kVectorWidth>;

// ---------------------------------------------------------------------------
// TilePlan

namespace {

constexpr std::size_t kMaxBlockExtent = 4096;
constexpr std::size_t kMaxTileElems = 1024;

std::size_t round_up(std::size_t x, std::size_t m) { return (x + m - 1) / m * m; }

}  // namespace

void TilePlan::validate() const {
  const TilePlan p = normalized();
  if (p.m_b == 0 || p.n_b == 0 || p.k_b == 0 || p.m_t == 0 || p.n_t == 0) {
    throw ConfigError("tile plan extents must be >= 1: " + to_string());
  }
  if (p.m_b % p.m_t != 0 || p.n_b % p.n_t != 0) {
    throw ConfigError("micro tile must divide block tile: " + to_string());
  }
  if (p.m_b > kMaxBlockExtent || p.n_b > kMaxBlockExtent || p.k_b > kMaxBlockExtent ||
      p.m_t * p.n_t > kMaxTileElems) {
    throw ConfigError("tile plan too large: " + to_string());
  }
}

TilePlan TilePlan::normalized() const {
  TilePlan p = *this;
  if (!p.micro_kernel) p.m_t = p.n_t = 1;
  return p;
}

std::size_t TilePlan::workers_per_block() const {
  const TilePlan p = normalized();
  return (p.m_b / p.m_t) * (p.n_b / p.n_t);
}

TilePlan TilePlan::parse(std::string_view text) {
  std::array<std::size_t, 5> v{};
  std::size_t i = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (true) {
    if (i == v.size()) throw ConfigError("plan needs 5 comma-separated integers");
    auto [next, ec] = std::from_chars(p, end, v[i]);
    if (ec != std::errc{}) throw ConfigError("bad plan: '" + std::string(text) + "'");
    ++i;
    if (next == end) break;
    if (*next != ',') throw ConfigError("bad plan: '" + std::string(text) + "'");
    p = next + 1;
  }
  if (i != v.size()) throw ConfigError("plan needs 5 comma-separated integers");
  TilePlan plan;
  plan.m_b = v[0];
  plan.n_b = v[1];
  plan.k_b = v[2];
  plan.m_t = v[3];
  plan.n_t = v[4];
  plan.validate();
  return plan;
}

std::string TilePlan::to_string() const {
  return std::to_string(m_b) + "," + std::to_string(n_b) + "," + std::to_string(k_b) + "," +
         std::to_string(m_t) + "," + std::to_string(n_t);
}

TilePlan default_plan(const GemmDims& dims) {
  TilePlan p;
  // 128-element shared panels along N, 8-wide register vectors.
  if (dims.m >= kVectorWidth) {
    p.m_t = kVectorWidth;
    p.m_b = std::min<std::size_t>(64, round_up(dims.m, kVectorWidth));
  } else {
    p.m_t = p.m_b = std::max<std::size_t>(1, dims.m);
  }
  if (dims.n >= kVectorWidth) {
    p.n_t = kVectorWidth;
    p.n_b = std::min<std::size_t>(128, round_up(dims.n, kVectorWidth));
  } else {
    p.n_t = p.n_b = std::max<std::size_t>(1, dims.n);
  }
  p.k_b = std::clamp<std::size_t>(dims.k, 1, 16);
  return p;
}

KernelCounters& KernelCounters::operator+=(const KernelCounters& o) {
  global_input_reads += o.global_input_reads;
  global_filter_reads += o.global_filter_reads;
  global_reads_in_k_loop += o.global_reads_in_k_loop;
  scratch_reads += o.scratch_reads;
  panel_stages += o.panel_stages;
  panel_prefetches += o.panel_prefetches;
  register_loads += o.register_loads;
  register_prefetches += o.register_prefetches;
  vector_loads += o.vector_loads;
  scalar_loads += o.scalar_loads;
  noncontiguous_loads += o.noncontiguous_loads;
  micro_kernel_calls += o.micro_kernel_calls;
  pipeline_steps += o.pipeline_steps;
  output_writes += o.output_writes;
  return *this;
}

// ---------------------------------------------------------------------------
// ScratchBuffers

void ScratchBuffers::FreeDeleter::operator()(float* p) const noexcept { std::free(p); }

ScratchBuffers::ScratchBuffers(const TilePlan& plan) : plan_(plan.normalized()) {
  plan_.validate();
  constexpr std::size_t kAlign = 64 / sizeof(float);
  const std::size_t workers = plan_.workers_per_block();
  input_panel_len_ = round_up(plan_.k_b * plan_.n_b, kAlign);
  filter_panel_len_ = round_up(plan_.k_b * plan_.m_b, kAlign);
  reg_input_off_ = 2 * input_panel_len_ + 2 * filter_panel_len_;
  reg_filter_off_ = reg_input_off_ + round_up(workers * 2 * plan_.n_t, kAlign);
  accum_off_ = reg_filter_off_ + round_up(workers * 2 * plan_.m_t, kAlign);
  total_ = accum_off_ + round_up(workers * plan_.m_t * plan_.n_t, kAlign);
  void* raw = std::aligned_alloc(64, total_ * sizeof(float));
  if (!raw) throw ResourceError("cannot allocate scratch buffers");
  storage_.reset(static_cast<float*>(raw));
  std::fill_n(storage_.get(), total_, 0.0f);
}

std::span<float> ScratchBuffers::slice(std::size_t offset, std::size_t count) noexcept {
  return {storage_.get() + offset, count};
}
std::span<const float> ScratchBuffers::slice(std::size_t offset, std::size_t count) const noexcept {
  return {storage_.get() + offset, count};
}

std::span<float> ScratchBuffers::input_panel(unsigned buf) noexcept {
  return slice(buf * input_panel_len_, plan_.k_b * plan_.n_b);
}
std::span<const float> ScratchBuffers::input_panel(unsigned buf) const noexcept {
  return slice(buf * input_panel_len_, plan_.k_b * plan_.n_b);
}
std::span<float> ScratchBuffers::filter_panel(unsigned buf) noexcept {
  return slice(2 * input_panel_len_ + buf * filter_panel_len_, plan_.k_b * plan_.m_b);
}
std::span<const float> ScratchBuffers::filter_panel(unsigned buf) const noexcept {
  return slice(2 * input_panel_len_ + buf * filter_panel_len_, plan_.k_b * plan_.m_b);
}
std::span<float> ScratchBuffers::reg_input(std::size_t worker, unsigned buf) noexcept {
  return slice(reg_input_off_ + (worker * 2 + buf) * plan_.n_t, plan_.n_t);
}
std::span<float> ScratchBuffers::reg_filter(std::size_t worker, unsigned buf) noexcept {
  return slice(reg_filter_off_ + (worker * 2 + buf) * plan_.m_t, plan_.m_t);
}
std::span<float> ScratchBuffers::accum(std::size_t worker) noexcept {
  const std::size_t tile = plan_.m_t * plan_.n_t;
  return slice(accum_off_ + worker * tile, tile);
}
std::span<const float> ScratchBuffers::accum(std::size_t worker) const noexcept {
  const std::size_t tile = plan_.m_t * plan_.n_t;
  return slice(accum_off_ + worker * tile, tile);
}
std::span<float> ScratchBuffers::all_accums() noexcept {
  return slice(accum_off_, plan_.workers_per_block() * plan_.m_t * plan_.n_t);
}

// ---------------------------------------------------------------------------
// Panel staging

namespace {

struct StageTables {
  // Window-tensor offset of column n' minus its K-dependent part.
  std::vector<std::size_t> col_in;
  // Output offset of column n' for output channel 0.
  std::vector<std::size_t> col_out;
  std::size_t n_valid = 0;
};

// Offset of row k of the logical K x N matrix within the window tensor.
std::vector<std::size_t> k_offsets(const ConvGeometry& g, std::size_t row_len) {
  std::vector<std::size_t> off(g.c_i * g.h_f * g.w_f);
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.c_i; ++c)
    for (std::size_t fh = 0; fh < g.h_f; ++fh)
      for (std::size_t fw = 0; fw < g.w_f; ++fw) off[k++] = c * g.h_o * row_len + fw * g.h_f + fh;
  return off;
}

void column_tables(const ConvGeometry& g, std::size_t row_len, std::size_t n_b, std::size_t by,
                   StageTables& t) {
  const std::size_t n_total = g.n * g.h_o * g.w_o;
  const std::size_t n0 = by * n_b;
  t.n_valid = n0 < n_total ? std::min(n_b, n_total - n0) : 0;
  t.col_in.resize(n_b);
  t.col_out.resize(n_b);
  if (t.n_valid == 0) return;
  NIndex idx = decompose_n(n0, g);
  for (std::size_t j = 0; j < t.n_valid; ++j) {
    t.col_in[j] = (idx.i_n * g.c_i * g.h_o + idx.o_h) * row_len + idx.o_w * g.stride * g.h_f;
    t.col_out[j] = ((idx.i_n * g.c_o) * g.h_o + idx.o_h) * g.w_o + idx.o_w;
    if (++idx.o_w == g.w_o) {
      idx.o_w = 0;
      if (++idx.o_h == g.h_o) {
        idx.o_h = 0;
        ++idx.i_n;
      }
    }
  }
}

void stage_impl(const Im2winTensor& src_i, const Tensor4& src_f, const std::vector<std::size_t>& k_off,
                const StageTables& cols, std::size_t bx, std::size_t kk, const TilePlan& plan,
                ScratchBuffers& scratch, unsigned buf, KernelCounters* counters) {
  const ConvGeometry& g = src_i.geometry();
  const std::size_t k_total = k_off.size();
  const std::size_t k0 = kk * plan.k_b;
  const std::size_t k_valid = k0 < k_total ? std::min(plan.k_b, k_total - k0) : 0;
  const std::size_t m0 = bx * plan.m_b;
  const std::size_t m_valid = m0 < g.c_o ? std::min(plan.m_b, g.c_o - m0) : 0;

  const float* win = src_i.data().data();
  float* panel_i = scratch.input_panel(buf).data();
  for (std::size_t kr = 0; kr < plan.k_b; ++kr) {
    float* dst = panel_i + kr * plan.n_b;
    std::size_t filled = 0;
    if (kr < k_valid) {
      const float* base = win + k_off[k0 + kr];
      for (; filled < cols.n_valid; ++filled) dst[filled] = base[cols.col_in[filled]];
    }
    std::fill(dst + filled, dst + plan.n_b, 0.0f);
  }

  const float* flt = src_f.data().data();
  float* panel_f = scratch.filter_panel(buf).data();
  for (std::size_t kr = 0; kr < plan.k_b; ++kr) {
    float* dst = panel_f + kr * plan.m_b;
    std::size_t filled = 0;
    if (kr < k_valid) {
      const float* base = flt + m0 * k_total + k0 + kr;
      for (; filled < m_valid; ++filled) dst[filled] = base[filled * k_total];
    }
    std::fill(dst + filled, dst + plan.m_b, 0.0f);
  }

  if (counters) {
    const std::uint64_t reads = std::uint64_t{k_valid} * (cols.n_valid + m_valid);
    if (counters->in_k_loop) {
      counters->global_reads_in_k_loop += reads;
    } else {
      counters->global_input_reads += std::uint64_t{k_valid} * cols.n_valid;
      counters->global_filter_reads += std::uint64_t{k_valid} * m_valid;
    }
    ++counters->panel_stages;
  }
}

void check_filter(const Im2winTensor& win, const Tensor4& filter) {
  if (filter.dims() != win.geometry().filter_dims()) {
    throw ShapeError("filter dims " + to_string(filter.dims()) + " do not match " +
                     to_string(win.geometry().filter_dims()));
  }
}

}  // namespace

void stage_panels(const Im2winTensor& src_i, const Tensor4& src_f, const BlockCoord& block,
                  ScratchBuffers& scratch, unsigned buf, KernelCounters* counters) {
  check_filter(src_i, src_f);
  const TilePlan& plan = scratch.plan();
  const ConvGeometry& g = src_i.geometry();
  const GemmDims d = gemm_dims(g);
  if (buf > 1 || block.bx * plan.m_b >= d.m || block.by * plan.n_b >= d.n ||
      block.kk * plan.k_b >= d.k) {
    throw IndexError("stage_panels: block out of range");
  }
  StageTables cols;
  column_tables(g, src_i.row_len(), plan.n_b, block.by, cols);
  stage_impl(src_i, src_f, k_offsets(g, src_i.row_len()), cols, block.bx, block.kk, plan, scratch,
             buf, counters);
}

void micro_kernel(std::span<const float> r_f, std::span<const float> r_i, std::span<float> r_o) {
  const std::size_t m_t = r_f.size(), n_t = r_i.size();
  if (r_o.size() != m_t * n_t) throw ShapeError("micro_kernel: accumulator size mismatch");
  for (std::size_t a = 0; a < m_t; ++a) {
    const float f = r_f[a];
    float* row = r_o.data() + a * n_t;
    for (std::size_t b = 0; b < n_t; ++b) row[b] += f * r_i[b];
  }
}

// ---------------------------------------------------------------------------
// Worker passes

namespace {

// One worker's share of a pipeline step. s_i / s_f point at the worker's
// column of the current panels; rows is the number of valid K rows.
struct PassArgs {
  const float* s_i = nullptr;
  const float* s_f = nullptr;
  std::size_t n_b = 0, m_b = 0;
  std::size_t rows = 0;
  std::size_t m_t = 0, n_t = 0;
  float* r_o = nullptr;
  float* reg_i[2] = {nullptr, nullptr};
  float* reg_f[2] = {nullptr, nullptr};
  bool pending = false;    // multiply the pair held in reg_*[0] first
  bool keep_last = false;  // hold the last pair in reg_*[0] instead of multiplying
  bool vector_loads = false;
  KernelCounters* counters = nullptr;
};

using PassFn = void (*)(const PassArgs&);

void count_pass(const PassArgs& a, bool prefetch) {
  KernelCounters& c = *a.counters;
  const std::uint64_t rows = a.rows;
  c.register_loads += rows;
  if (prefetch && rows > 0) c.register_prefetches += rows - 1;
  c.scratch_reads += rows * (a.m_t + a.n_t);
  if (a.vector_loads) {
    c.vector_loads += rows * (a.n_t / kVectorWidth + a.m_t / kVectorWidth);
    c.scalar_loads += rows * (a.m_t % kVectorWidth);
  } else {
    c.scalar_loads += rows * (a.m_t + a.n_t);
  }
  c.micro_kernel_calls += rows + (a.pending ? 1 : 0) - (a.keep_last && rows > 0 ? 1 : 0);
}

/// Compile-time MT x NT tile held in local variables for the whole pass.
template <std::size_t MT, std::size_t NT, bool Vec, bool Prefetch>
struct FixedTile {
  static_assert(!Vec || NT % kVectorWidth == 0);
  static constexpr std::size_t NV = Vec ? NT / kVectorWidth : 0;
  static constexpr bool kVecF = Vec && MT % kVectorWidth == 0;

  struct Regs {
    std::conditional_t<Vec, std::array<Vec8, (NV > 0 ? NV : 1)>, std::array<float, NT>> i;
    std::array<float, MT> f;
  };
  using Acc = std::conditional_t<Vec, std::array<std::array<Vec8, (NV > 0 ? NV : 1)>, MT>,
                                 std::array<std::array<float, NT>, MT>>;

  static void load(Regs& r, const float* s_i, const float* s_f) {
    if constexpr (Vec) {
      for (std::size_t v = 0; v < NV; ++v) r.i[v].copy_from(s_i + v * kVectorWidth, stdx::vector_aligned);
    } else {
      for (std::size_t b = 0; b < NT; ++b) r.i[b] = s_i[b];
    }
    if constexpr (kVecF) {
      for (std::size_t v = 0; v < MT / kVectorWidth; ++v) {
        Vec8 t(s_f + v * kVectorWidth, stdx::element_aligned);
        t.copy_to(r.f.data() + v * kVectorWidth, stdx::element_aligned);
      }
    } else {
      for (std::size_t a = 0; a < MT; ++a) r.f[a] = s_f[a];
    }
  }

  static void multiply(Acc& acc, const Regs& r) {
    for (std::size_t a = 0; a < MT; ++a) {
      if constexpr (Vec) {
        const Vec8 f(r.f[a]);
        for (std::size_t v = 0; v < NV; ++v) acc[a][v] += f * r.i[v];
      } else {
        const float f = r.f[a];
        for (std::size_t b = 0; b < NT; ++b) acc[a][b] += f * r.i[b];
      }
    }
  }

  static void load_acc(Acc& acc, const float* r_o) {
    for (std::size_t a = 0; a < MT; ++a) {
      if constexpr (Vec) {
        for (std::size_t v = 0; v < NV; ++v)
          acc[a][v].copy_from(r_o + a * NT + v * kVectorWidth, stdx::element_aligned);
      } else {
        for (std::size_t b = 0; b < NT; ++b) acc[a][b] = r_o[a * NT + b];
      }
    }
  }

  static void store_acc(const Acc& acc, float* r_o) {
    for (std::size_t a = 0; a < MT; ++a) {
      if constexpr (Vec) {
        for (std::size_t v = 0; v < NV; ++v)
          acc[a][v].copy_to(r_o + a * NT + v * kVectorWidth, stdx::element_aligned);
      } else {
        for (std::size_t b = 0; b < NT; ++b) r_o[a * NT + b] = acc[a][b];
      }
    }
  }

  static void hold(const Regs& r, const PassArgs& a) {
    if constexpr (Vec) {
      for (std::size_t v = 0; v < NV; ++v) r.i[v].copy_to(a.reg_i[0] + v * kVectorWidth, stdx::element_aligned);
    } else {
      std::copy(r.i.begin(), r.i.end(), a.reg_i[0]);
    }
    std::copy(r.f.begin(), r.f.end(), a.reg_f[0]);
  }

  static void unhold(Regs& r, const PassArgs& a) {
    if constexpr (Vec) {
      for (std::size_t v = 0; v < NV; ++v) r.i[v].copy_from(a.reg_i[0] + v * kVectorWidth, stdx::element_aligned);
    } else {
      std::copy_n(a.reg_i[0], NT, r.i.begin());
    }
    std::copy_n(a.reg_f[0], MT, r.f.begin());
  }

  static void pass(const PassArgs& a) {
    if (a.counters) {
      count_pass(a, Prefetch);
      a.counters->in_k_loop = true;
    }
    Acc acc;
    load_acc(acc, a.r_o);
    if (a.pending) {
      Regs held;
      unhold(held, a);
      multiply(acc, held);
    }
    if (a.rows > 0) {
      if constexpr (Prefetch) {
        Regs regs[2];
        unsigned cur = 0;
        load(regs[0], a.s_i, a.s_f);
        for (std::size_t k = 1; k < a.rows; ++k) {
          load(regs[cur ^ 1], a.s_i + k * a.n_b, a.s_f + k * a.m_b);  // prefetch
          multiply(acc, regs[cur]);
          cur ^= 1;
        }
        if (a.keep_last) {
          hold(regs[cur], a);
        } else {
          multiply(acc, regs[cur]);
        }
      } else {
        Regs regs;
        for (std::size_t k = 0; k < a.rows; ++k) {
          load(regs, a.s_i + k * a.n_b, a.s_f + k * a.m_b);
          multiply(acc, regs);
        }
      }
    }
    store_acc(acc, a.r_o);
    if (a.counters) a.counters->in_k_loop = false;
  }
};

/// Runtime-sized tile; registers and accumulators live in ScratchBuffers.
template <bool Prefetch>
void generic_pass(const PassArgs& a) {
  if (a.counters) {
    count_pass(a, Prefetch);
    a.counters->in_k_loop = true;
  }
  std::span<float> r_o(a.r_o, a.m_t * a.n_t);
  auto load = [&](unsigned buf, std::size_t k) {
    const float* src_i = a.s_i + k * a.n_b;
    if (a.vector_loads) {
      for (std::size_t v = 0; v < a.n_t; v += kVectorWidth) {
        Vec8 t(src_i + v, stdx::vector_aligned);
        t.copy_to(a.reg_i[buf] + v, stdx::element_aligned);
      }
    } else {
      std::copy_n(src_i, a.n_t, a.reg_i[buf]);
    }
    std::copy_n(a.s_f + k * a.m_b, a.m_t, a.reg_f[buf]);
  };
  auto mul = [&](unsigned buf) {
    micro_kernel({a.reg_f[buf], a.m_t}, {a.reg_i[buf], a.n_t}, r_o);
  };
  if (a.pending) mul(0);
  if (a.rows > 0) {
    if constexpr (Prefetch) {
      unsigned cur = 0;
      load(0, 0);
      for (std::size_t k = 1; k < a.rows; ++k) {
        load(cur ^ 1, k);
        mul(cur);
        cur ^= 1;
      }
      if (a.keep_last) {
        if (cur != 0) {
          std::copy_n(a.reg_i[1], a.n_t, a.reg_i[0]);
          std::copy_n(a.reg_f[1], a.m_t, a.reg_f[0]);
        }
      } else {
        mul(cur);
      }
    } else {
      for (std::size_t k = 0; k < a.rows; ++k) {
        load(0, k);
        mul(0);
      }
    }
  }
  if (a.counters) a.counters->in_k_loop = false;
}

template <std::size_t MT, std::size_t NT>
PassFn pick_fixed(bool vec, bool prefetch) {
  if constexpr (NT % kVectorWidth == 0) {
    if (vec) return prefetch ? &FixedTile<MT, NT, true, true>::pass : &FixedTile<MT, NT, true, false>::pass;
  }
  return prefetch ? &FixedTile<MT, NT, false, true>::pass : &FixedTile<MT, NT, false, false>::pass;
}

PassFn pick_pass(std::size_t m_t, std::size_t n_t, bool vec, bool prefetch) {
  if (m_t == 8 && n_t == 8) return pick_fixed<8, 8>(vec, prefetch);
  if (m_t == 4 && n_t == 8) return pick_fixed<4, 8>(vec, prefetch);
  if (m_t == 8 && n_t == 16) return pick_fixed<8, 16>(vec, prefetch);
  if (m_t == 4 && n_t == 16) return pick_fixed<4, 16>(vec, prefetch);
  if (m_t == 4 && n_t == 4) return pick_fixed<4, 4>(vec, prefetch);
  if (m_t == 1 && n_t == 1) return pick_fixed<1, 1>(vec, prefetch);
  return prefetch ? &generic_pass<true> : &generic_pass<false>;
}

}  // namespace

// ---------------------------------------------------------------------------
// BlockPipeline

struct BlockPipeline::State {
  const Im2winTensor& in;
  const Tensor4& filter;
  ScratchBuffers& scratch;
  KernelCounters* counters;
  TilePlan plan;
  ConvGeometry geom;
  GemmDims dims;
  std::vector<std::size_t> k_off;
  StageTables cols;
  std::size_t bx = 0, by = 0;
  std::size_t m_valid = 0;
  std::size_t m_blocks = 0, n_blocks = 0, k_blocks = 0;
  bool double_buffer = false;
  bool vector_loads = false;
  bool pending = false;
  PassFn pass = nullptr;

  State(const Im2winTensor& i, const Tensor4& f, ScratchBuffers& s, KernelCounters* c)
      : in(i), filter(f), scratch(s), counters(c), plan(s.plan()), geom(i.geometry()),
        dims(gemm_dims(i.geometry())), k_off(k_offsets(i.geometry(), i.row_len())) {
    check_filter(in, filter);
    m_blocks = (dims.m + plan.m_b - 1) / plan.m_b;
    n_blocks = (dims.n + plan.n_b - 1) / plan.n_b;
    k_blocks = (dims.k + plan.k_b - 1) / plan.k_b;
    double_buffer = plan.prefetch_double_buffer;
    // 8-wide aligned loads need whole vectors and 32-byte aligned panel rows.
    vector_loads = plan.vectorized_load && plan.n_t % kVectorWidth == 0 &&
                   plan.n_b % kVectorWidth == 0;
    pass = pick_pass(plan.m_t, plan.n_t, vector_loads, double_buffer);
  }

  std::size_t workers_m() const { return plan.m_b / plan.m_t; }
  std::size_t workers_n() const { return plan.n_b / plan.n_t; }

  template <class Fn>
  void for_each_worker(Fn&& fn) {
    for (std::size_t wm = 0; wm < workers_m(); ++wm) {
      if (wm * plan.m_t >= m_valid) break;
      for (std::size_t wn = 0; wn < workers_n(); ++wn) {
        if (wn * plan.n_t >= cols.n_valid) break;
        fn(wm, wn, wm * workers_n() + wn);
      }
    }
  }

  void run_pass(unsigned buf, std::size_t rows, bool keep_last) {
    const float* panel_i = scratch.input_panel(buf).data();
    const float* panel_f = scratch.filter_panel(buf).data();
    for_each_worker([&](std::size_t wm, std::size_t wn, std::size_t w) {
      PassArgs a;
      a.s_i = panel_i + wn * plan.n_t;
      a.s_f = panel_f + wm * plan.m_t;
      a.n_b = plan.n_b;
      a.m_b = plan.m_b;
      a.rows = rows;
      a.m_t = plan.m_t;
      a.n_t = plan.n_t;
      a.r_o = scratch.accum(w).data();
      a.reg_i[0] = scratch.reg_input(w, 0).data();
      a.reg_i[1] = scratch.reg_input(w, 1).data();
      a.reg_f[0] = scratch.reg_filter(w, 0).data();
      a.reg_f[1] = scratch.reg_filter(w, 1).data();
      a.pending = pending;
      a.keep_last = keep_last;
      a.vector_loads = vector_loads;
      a.counters = counters;
      pass(a);
    });
    pending = keep_last && rows > 0;
  }
};

BlockPipeline::BlockPipeline(const Im2winTensor& in, const Tensor4& filter, ScratchBuffers& scratch,
                             KernelCounters* counters)
    : state_(std::make_unique<State>(in, filter, scratch, counters)) {}

BlockPipeline::~BlockPipeline() = default;

std::size_t BlockPipeline::k_blocks() const noexcept { return state_->k_blocks; }
std::size_t BlockPipeline::m_blocks() const noexcept { return state_->m_blocks; }
std::size_t BlockPipeline::n_blocks() const noexcept { return state_->n_blocks; }

void BlockPipeline::begin(std::size_t bx, std::size_t by) {
  State& s = *state_;
  if (bx >= s.m_blocks || by >= s.n_blocks) throw IndexError("block out of range");
  s.bx = bx;
  if (by != s.by || s.cols.col_in.empty()) column_tables(s.geom, s.in.row_len(), s.plan.n_b, by, s.cols);
  s.by = by;
  s.m_valid = std::min(s.plan.m_b, s.dims.m - bx * s.plan.m_b);
  s.pending = false;
  std::ranges::fill(s.scratch.all_accums(), 0.0f);
  stage_impl(s.in, s.filter, s.k_off, s.cols, bx, 0, s.plan, s.scratch, 0, s.counters);
}

void BlockPipeline::step(std::size_t kk) {
  State& s = *state_;
  if (kk >= s.k_blocks) throw IndexError("K block out of range");
  const unsigned cur = s.double_buffer ? static_cast<unsigned>(kk & 1) : 0u;
  const std::size_t rows = std::min(s.plan.k_b, s.dims.k - kk * s.plan.k_b);
  const bool more = kk + 1 < s.k_blocks;
  if (s.double_buffer) {
    // Compute on `cur`, keep the last register pair, then fill the other
    // buffer before the trailing multiply.
    s.run_pass(cur, rows, /*keep_last=*/true);
    if (more) {
      stage_impl(s.in, s.filter, s.k_off, s.cols, s.bx, kk + 1, s.plan, s.scratch, cur ^ 1u,
                 s.counters);
      if (s.counters) ++s.counters->panel_prefetches;
    }
  } else {
    s.run_pass(0, rows, /*keep_last=*/false);
    if (more) stage_impl(s.in, s.filter, s.k_off, s.cols, s.bx, kk + 1, s.plan, s.scratch, 0, s.counters);
  }
  if (s.counters) ++s.counters->pipeline_steps;
}

void BlockPipeline::drain() {
  State& s = *state_;
  if (s.pending) s.run_pass(0, 0, false);
}

void BlockPipeline::write_back(Tensor4& out) {
  State& s = *state_;
  if (out.dims() != s.geom.output_dims()) throw ShapeError("write_back: output dims mismatch");
  float* dst = out.data().data();
  const std::size_t plane = s.geom.h_o * s.geom.w_o;
  const std::size_t m0 = s.bx * s.plan.m_b;
  std::uint64_t writes = 0;
  s.for_each_worker([&](std::size_t wm, std::size_t wn, std::size_t w) {
    const float* tile = s.scratch.accum(w).data();
    const std::size_t a_end = std::min(s.plan.m_t, s.m_valid - wm * s.plan.m_t);
    const std::size_t b_end = std::min(s.plan.n_t, s.cols.n_valid - wn * s.plan.n_t);
    for (std::size_t a = 0; a < a_end; ++a) {
      const std::size_t m = m0 + wm * s.plan.m_t + a;
      for (std::size_t b = 0; b < b_end; ++b) {
        dst[s.cols.col_out[wn * s.plan.n_t + b] + m * plane] = tile[a * s.plan.n_t + b];
      }
    }
    writes += a_end * b_end;
  });
  if (s.counters) s.counters->output_writes += writes;
}

void BlockPipeline::run_block(std::size_t bx, std::size_t by, Tensor4& out) {
  begin(bx, by);
  for (std::size_t kk = 0; kk < state_->k_blocks; ++kk) step(kk);
  drain();
  write_back(out);
}

// ---------------------------------------------------------------------------
// Kernel entry points

Tensor4 conv_im2win_opt(const Im2winTensor& win, const Tensor4& filter, const TilePlan& plan,
                        const ExecPolicy& exec, KernelCounters* counters) {
  check_filter(win, filter);
  const TilePlan p = plan.normalized();
  p.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const GemmDims d = gemm_dims(win.geometry());
  Tensor4 out(win.geometry().output_dims());
  const std::size_t m_blocks = (d.m + p.m_b - 1) / p.m_b;
  const std::size_t n_blocks = (d.n + p.n_b - 1) / p.n_b;
  std::mutex merge;
  parallel_for(m_blocks * n_blocks, resolve_workers(exec),
               [&](std::size_t begin, std::size_t end, unsigned) {
                 ScratchBuffers scratch(p);
                 KernelCounters local;
                 BlockPipeline pipe(win, filter, scratch, counters ? &local : nullptr);
                 // Consecutive blocks share `by`, so the column tables are reused.
                 for (std::size_t b = begin; b < end; ++b) pipe.run_block(b % m_blocks, b / m_blocks, out);
                 if (counters) {
                   std::lock_guard lock(merge);
                   *counters += local;
                 }
               });
  if (exec.times) {
    exec.times->compute_s +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

Tensor4 conv_im2win_opt(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                        const TilePlan& plan, const ExecPolicy& exec, KernelCounters* counters) {
  make_geometry(input.dims(), filter.dims(), p);
  plan.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Im2winTensor win = im2win(input, p, exec);
  if (exec.times) {
    exec.times->transform_s +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return conv_im2win_opt(win, filter, plan, exec, counters);
}

}  // namespace im2win
