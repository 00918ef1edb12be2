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
#include <memory>
#include <string>
#include <string_view>

#include "im2win/parallel.hpp"
#include "im2win/reference.hpp"
#include "im2win/tensor.hpp"
#include "im2win/transforms.hpp"

namespace im2win {

// Width of one vectorized register load, in reals.
inline constexpr std::size_t kVectorWidth = 8;

/// Blocking of the M x N x K iteration space plus the optimization toggles.
///
/// A block covers m_b x n_b outputs and walks K in steps of k_b. It is
/// split among (m_b/m_t) * (n_b/n_t) logical workers, each owning an
/// m_t x n_t accumulator tile.
struct TilePlan {
  std::size_t m_b = 64;
  std::size_t n_b = 128;
  std::size_t k_b = 16;
  std::size_t m_t = 8;
  std::size_t n_t = 8;
  bool micro_kernel = true;
  bool vectorized_load = true;
  bool prefetch_double_buffer = true;

  // Throws ConfigError unless every extent is >= 1 and the micro tile divides
  // the block tile.
  void validate() const;
  // With micro_kernel off each worker owns a single output: m_t = n_t = 1.
  TilePlan normalized() const;
  std::size_t workers_per_block() const;

  // "m_b,n_b,k_b,m_t,n_t"; toggles are left at their defaults.
  static TilePlan parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const TilePlan&, const TilePlan&) = default;
};

TilePlan default_plan(const GemmDims& dims);

/// Instrumentation filled in when a kernel is handed a counters object.
struct KernelCounters {
  std::uint64_t global_input_reads = 0;   // window-tensor reads while staging
  std::uint64_t global_filter_reads = 0;  // filter reads while staging
  std::uint64_t global_reads_in_k_loop = 0;
  std::uint64_t scratch_reads = 0;        // panel reads from inside the k' loop
  std::uint64_t panel_stages = 0;
  std::uint64_t panel_prefetches = 0;     // next-panel stages issued ahead of use
  std::uint64_t register_loads = 0;       // (r_i, r_f) pairs loaded from panels
  std::uint64_t register_prefetches = 0;  // pairs loaded while the previous pair computes
  std::uint64_t vector_loads = 0;
  std::uint64_t scalar_loads = 0;
  std::uint64_t noncontiguous_loads = 0;  // r_i loads whose n_t reals are not adjacent
  std::uint64_t micro_kernel_calls = 0;
  std::uint64_t pipeline_steps = 0;
  std::uint64_t output_writes = 0;
  bool in_k_loop = false;

  KernelCounters& operator+=(const KernelCounters& o);
};

/// Packed staging storage of one block: two panels of the window tensor
/// (k_b x n_b, row k' contiguous along N), two filter panels (k_b x m_b,
/// row k' contiguous along M), the per-worker register vectors and the
/// per-worker m_t x n_t accumulator tiles.
class ScratchBuffers {
 public:
  explicit ScratchBuffers(const TilePlan& plan);

  const TilePlan& plan() const noexcept { return plan_; }

  std::span<float> input_panel(unsigned buf) noexcept;
  std::span<float> filter_panel(unsigned buf) noexcept;
  std::span<const float> input_panel(unsigned buf) const noexcept;
  std::span<const float> filter_panel(unsigned buf) const noexcept;

  // Register vectors r_i[buf] (n_t) and r_f[buf] (m_t) of one worker.
  std::span<float> reg_input(std::size_t worker, unsigned buf) noexcept;
  std::span<float> reg_filter(std::size_t worker, unsigned buf) noexcept;

  // Accumulator tile r_o of one worker, m_t x n_t row-major.
  std::span<float> accum(std::size_t worker) noexcept;
  std::span<const float> accum(std::size_t worker) const noexcept;
  std::span<float> all_accums() noexcept;

 private:
  struct FreeDeleter {
    void operator()(float* p) const noexcept;
  };
  std::span<float> slice(std::size_t offset, std::size_t count) noexcept;
  std::span<const float> slice(std::size_t offset, std::size_t count) const noexcept;

  TilePlan plan_;
  std::size_t input_panel_len_ = 0, filter_panel_len_ = 0;
  std::size_t reg_input_off_ = 0, reg_filter_off_ = 0, accum_off_ = 0, total_ = 0;
  std::unique_ptr<float[], FreeDeleter> storage_;
};

struct BlockCoord {
  std::size_t bx = 0;  // along M
  std::size_t by = 0;  // along N
  std::size_t kk = 0;  // along K
};

/// Copies the logical K x N panel of the window tensor and the M x K panel of
/// the filter for `block` into buffer `buf`:
///   input_panel[k'*n_b + n'] = Ĩ(kk*k_b + k', by*n_b + n')
///   filter_panel[k'*m_b + m'] = F(bx*m_b + m', kk*k_b + k')
/// Slots past the edge of M, N or K are zero.
void stage_panels(const Im2winTensor& src_i, const Tensor4& src_f, const BlockCoord& block,
                  ScratchBuffers& scratch, unsigned buf, KernelCounters* counters = nullptr);

// r_o[a*n_t + b] += r_f[a] * r_i[b].
void micro_kernel(std::span<const float> r_f, std::span<const float> r_i, std::span<float> r_o);

/// Software pipeline for one (bx, by) block.
///
/// With prefetch_double_buffer on, each step runs the k' loop of every
/// worker while loading the next register pair ahead of the multiply,
/// keeps the last pair in the register buffers, stages the next K panels
/// into the other buffer, and leaves the trailing multiply for the start of
/// the following step (or drain()). With it off a single panel and a single
/// register buffer are used, and the next panel is staged after all workers
/// finish.
class BlockPipeline {
 public:
  BlockPipeline(const Im2winTensor& in, const Tensor4& filter, ScratchBuffers& scratch,
                KernelCounters* counters = nullptr);
  ~BlockPipeline();
  BlockPipeline(const BlockPipeline&) = delete;
  BlockPipeline& operator=(const BlockPipeline&) = delete;

  std::size_t k_blocks() const noexcept;
  std::size_t m_blocks() const noexcept;
  std::size_t n_blocks() const noexcept;

  // Zero the accumulators and stage K block 0 into buffer 0.
  void begin(std::size_t bx, std::size_t by);
  // One K-block iteration; panels for kk must already be staged.
  void step(std::size_t kk);
  // Apply any pending trailing multiply.
  void drain();
  // Store every in-range accumulator to `out` exactly once.
  void write_back(Tensor4& out);

  void run_block(std::size_t bx, std::size_t by, Tensor4& out);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// High-performance im2win convolution over a materialised window tensor.
Tensor4 conv_im2win_opt(const Im2winTensor& win, const Tensor4& filter, const TilePlan& plan,
                        const ExecPolicy& exec = {}, KernelCounters* counters = nullptr);
Tensor4 conv_im2win_opt(const Tensor4& input, const Tensor4& filter, const ConvParams& p,
                        const TilePlan& plan, const ExecPolicy& exec = {},
                        KernelCounters* counters = nullptr);

}  // namespace im2win
