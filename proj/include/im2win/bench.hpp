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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "im2win/optimized.hpp"
#include "im2win/tensor.hpp"

namespace im2win {

enum class Algorithm { direct, im2col_gemm, implicit_gemm, im2win_basic, im2win_opt };

// Optimization variants of im2win_opt; `none` for every other algorithm and
// `custom` when the plan's own toggles are used as given.
enum class Variant { none, full, no_prefetch, no_vectorized_load, no_micro_kernel, custom };

std::string_view algorithm_name(Algorithm a) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;
std::string_view variant_name(Variant v) noexcept;

// The algorithms `--algo all` runs: direct, im2col-gemm, implicit-gemm, im2win-opt.
const std::vector<Algorithm>& comparison_algorithms();
const std::vector<Algorithm>& all_algorithms();

TilePlan apply_variant(TilePlan plan, Variant v) noexcept;

struct BenchConfig {
  std::string name;
  std::size_t c_in = 1, h_in = 1, w_in = 1;
  std::size_t c_out = 1, h_f = 1, w_f = 1;
  std::size_t stride = 1;
  std::size_t batch = 2;
  std::size_t repeats = 10;
  Algorithm algorithm = Algorithm::im2win_opt;
  Variant variant = Variant::none;
  std::optional<TilePlan> plan;
  std::uint64_t seed = 7;

  ConvParams params() const noexcept { return {c_in, c_out, h_f, w_f, stride}; }
  Dims4 input_dims() const noexcept { return {batch, c_in, h_in, w_in}; }
  Dims4 filter_dims() const noexcept { return {c_out, c_in, h_f, w_f}; }
  // The plan im2win_opt will run, variant applied.
  TilePlan effective_plan() const;
};

struct BuiltinBenchmark {
  BenchConfig config;
  // Output extents as tabulated alongside the layer parameters.
  std::size_t expect_h_o = 0, expect_w_o = 0;
};

// conv1 .. conv12 at desk-scale defaults (batch 2, 10 repeats).
const std::vector<BuiltinBenchmark>& builtin_benchmarks();
std::optional<BenchConfig> find_benchmark(std::string_view name);
std::string benchmark_names();

struct BenchOptions {
  unsigned workers = 0;
  // 0 = available physical memory.
  std::uint64_t memory_limit_bytes = 0;
  // Compare the output against conv_direct (computed once per call).
  bool verify = false;
};

struct BenchRecord {
  std::string name;
  Algorithm algorithm = Algorithm::direct;
  Variant variant = Variant::none;
  std::size_t batch = 0, repeats = 0;
  std::size_t h_o = 0, w_o = 0;
  std::string plan;  // empty unless im2win_opt
  std::uint64_t seed = 0;
  std::uint64_t flops = 0;
  double transform_s = 0, compute_s = 0, total_s = 0;
  double total_variance = 0;  // of total_s over the R timed runs
  double tflops = 0;
  std::uint64_t raw_elems = 0, im2col_elems = 0, im2win_elems = 0;
  std::uint64_t raw_bytes = 0, im2col_bytes = 0, im2win_bytes = 0;
  double footprint_reduction_pct = 0;
  std::uint64_t checksum = 0;
  std::optional<double> max_rel_diff_vs_direct;
};

// 2 * N * C_o * H_o * W_o * C_i * H_f * W_f.
std::uint64_t conv_flops(const BenchConfig& cfg);
// FNV-1a over the raw bits of every output value.
std::uint64_t checksum(const Tensor4& t) noexcept;
// Bytes a run holds at peak: tensors plus the algorithm's lowered data.
std::uint64_t required_bytes(const BenchConfig& cfg, bool verify);

Tensor4 bench_input(const BenchConfig& cfg);
Tensor4 bench_filter(const BenchConfig& cfg);
Tensor4 run_algorithm(Algorithm algo, const Tensor4& input, const Tensor4& filter,
                      const ConvParams& p, const TilePlan& plan, const ExecPolicy& exec);

/// One warm-up run followed by cfg.repeats timed runs; times are those of
/// the fastest run. Throws ResourceError (naming the byte requirement)
/// before allocating anything if the run would not fit.
BenchRecord run_bench(const BenchConfig& cfg, const BenchOptions& opts = {});

// Full plan, then one technique removed at a time.
std::vector<BenchRecord> run_ablation(const BenchConfig& cfg, const BenchOptions& opts = {});

inline constexpr std::string_view kCsvHeader =
    "name,algorithm,variant,batch,repeats,h_o,w_o,flops,transform_s,compute_s,total_s,tflops,"
    "raw_elems,im2col_elems,im2win_elems,footprint_reduction_pct,checksum";

// Header plus one row per record, ordered by (config, algorithm, variant).
// Throws on an empty list.
std::string report_csv(std::vector<BenchRecord> records);

struct FootprintRow {
  std::string name;
  std::size_t batch = 0;
  std::uint64_t raw = 0, im2col = 0, im2win = 0;
  double reduction = 0;  // 1 - im2win / im2col
};

std::vector<FootprintRow> footprint_report(const std::vector<BenchConfig>& cfgs);
std::string format_footprint(const std::vector<FootprintRow>& rows);

struct PlanTrial {
  TilePlan plan;
  double seconds = 0;
};

/// One-shot grid search over (m_b, n_b) in {16,32,64,128}^2 and k_b in
/// {4,8,16} with 8x8 micro tiles. Returns trials fastest first.
std::vector<PlanTrial> search_plans(const BenchConfig& cfg, const BenchOptions& opts = {},
                                    std::size_t repeats = 3);

}  // namespace im2win
