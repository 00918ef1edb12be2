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

#include "im2win/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>
#include <tuple>

#include "im2win/reference.hpp"
#include "im2win/transforms.hpp"

namespace im2win {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::array<std::pair<Algorithm, std::string_view>, 5> kAlgorithmNames{{
    {Algorithm::direct, "direct"},
    {Algorithm::im2col_gemm, "im2col-gemm"},
    {Algorithm::implicit_gemm, "implicit-gemm"},
    {Algorithm::im2win_basic, "im2win-basic"},
    {Algorithm::im2win_opt, "im2win-opt"},
}};

BenchConfig make_config(std::string name, std::size_t c_in, std::size_t hw_in, std::size_t c_out,
                        std::size_t f, std::size_t stride) {
  BenchConfig c;
  c.name = std::move(name);
  c.c_in = c_in;
  c.h_in = c.w_in = hw_in;
  c.c_out = c_out;
  c.h_f = c.w_f = f;
  c.stride = stride;
  return c;
}

std::uint64_t available_memory() {
  const long pages = sysconf(_SC_AVPHYS_PAGES);
  const long page = sysconf(_SC_PAGESIZE);
  if (pages <= 0 || page <= 0) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(pages) * static_cast<std::uint64_t>(page);
}

// Splits "conv12" into ("conv", 12) so that conv2 sorts before conv10.
std::pair<std::string_view, std::uint64_t> natural_key(std::string_view s) {
  std::size_t i = s.size();
  while (i > 0 && s[i - 1] >= '0' && s[i - 1] <= '9') --i;
  std::uint64_t num = 0;
  for (std::size_t j = i; j < s.size() && j < i + 18; ++j) num = num * 10 + (s[j] - '0');
  return {s.substr(0, i), i < s.size() ? num : 0};
}

void validate(const BenchConfig& cfg) {
  if (cfg.batch == 0) throw ConfigError("batch must be >= 1");
  if (cfg.repeats == 0) throw ConfigError("repeats must be >= 1");
  make_geometry(cfg.input_dims(), cfg.params());
  if (cfg.algorithm == Algorithm::im2win_opt) cfg.effective_plan().validate();
}

BenchRecord measure(const BenchConfig& cfg, const BenchOptions& opts, const Tensor4& input,
                    const Tensor4& filter, const Tensor4* reference) {
  const ConvParams p = cfg.params();
  const ConvGeometry g = make_geometry(input.dims(), filter.dims(), p);
  const TilePlan plan = cfg.effective_plan();
  ExecPolicy exec;
  exec.workers = opts.workers;

  BenchRecord r;
  r.name = cfg.name;
  r.algorithm = cfg.algorithm;
  r.variant = cfg.variant;
  r.batch = cfg.batch;
  r.repeats = cfg.repeats;
  r.h_o = g.h_o;
  r.w_o = g.w_o;
  r.seed = cfg.seed;
  if (cfg.algorithm == Algorithm::im2win_opt) r.plan = plan.to_string();
  r.flops = conv_flops(cfg);
  r.raw_elems = footprint_elems(Layout::raw, input.dims(), p);
  r.im2col_elems = footprint_elems(Layout::im2col, input.dims(), p);
  r.im2win_elems = footprint_elems(Layout::im2win, input.dims(), p);
  r.raw_bytes = r.raw_elems * sizeof(float);
  r.im2col_bytes = r.im2col_elems * sizeof(float);
  r.im2win_bytes = r.im2win_elems * sizeof(float);
  r.footprint_reduction_pct =
      100.0 * (1.0 - static_cast<double>(r.im2win_elems) / static_cast<double>(r.im2col_elems));

  // Warm-up.
  Tensor4 out = run_algorithm(cfg.algorithm, input, filter, p, plan, exec);

  double best = std::numeric_limits<double>::infinity();
  double sum = 0, sum_sq = 0;
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    PhaseTimes times;
    exec.times = &times;
    const auto t0 = Clock::now();
    out = run_algorithm(cfg.algorithm, input, filter, p, plan, exec);
    const double total = std::chrono::duration<double>(Clock::now() - t0).count();
    sum += total;
    sum_sq += total * total;
    if (total < best) {
      best = total;
      r.transform_s = times.transform_s;
      r.compute_s = times.compute_s;
    }
  }
  const double n = static_cast<double>(cfg.repeats);
  r.total_s = best;
  r.total_variance = std::max(0.0, sum_sq / n - (sum / n) * (sum / n));
  r.tflops = best > 0 ? static_cast<double>(r.flops) / best / 1e12 : 0.0;
  r.checksum = checksum(out);
  if (reference) r.max_rel_diff_vs_direct = max_rel_diff(out, *reference);
  return r;
}

void check_memory(const BenchConfig& cfg, const BenchOptions& opts) {
  const std::uint64_t need = required_bytes(cfg, opts.verify);
  const std::uint64_t limit = opts.memory_limit_bytes ? opts.memory_limit_bytes : available_memory();
  if (need > limit) {
    throw ResourceError(cfg.name + " (" + std::string(algorithm_name(cfg.algorithm)) +
                        ", batch " + std::to_string(cfg.batch) + ") requires " +
                        std::to_string(need) + " bytes; limit is " + std::to_string(limit) +
                        " bytes");
  }
}

}  // namespace

std::string_view algorithm_name(Algorithm a) noexcept {
  for (const auto& [algo, name] : kAlgorithmNames)
    if (algo == a) return name;
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
  for (const auto& [algo, n] : kAlgorithmNames)
    if (n == name) return algo;
  return std::nullopt;
}

std::string_view variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::none: return "none";
    case Variant::full: return "full";
    case Variant::no_prefetch: return "no-prefetch";
    case Variant::no_vectorized_load: return "no-vectorized-load";
    case Variant::no_micro_kernel: return "no-micro-kernel";
    case Variant::custom: return "custom";
  }
  return "?";
}

const std::vector<Algorithm>& comparison_algorithms() {
  static const std::vector<Algorithm> algos{Algorithm::direct, Algorithm::im2col_gemm,
                                            Algorithm::implicit_gemm, Algorithm::im2win_opt};
  return algos;
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> algos{Algorithm::direct, Algorithm::im2col_gemm,
                                            Algorithm::implicit_gemm, Algorithm::im2win_basic,
                                            Algorithm::im2win_opt};
  return algos;
}

TilePlan apply_variant(TilePlan plan, Variant v) noexcept {
  switch (v) {
    case Variant::no_prefetch: plan.prefetch_double_buffer = false; break;
    case Variant::no_vectorized_load: plan.vectorized_load = false; break;
    case Variant::no_micro_kernel: plan.micro_kernel = false; break;
    case Variant::none:
    case Variant::full:
    case Variant::custom: break;
  }
  return plan;
}

TilePlan BenchConfig::effective_plan() const {
  const ConvGeometry g = make_geometry(input_dims(), params());
  return apply_variant(plan ? *plan : default_plan(gemm_dims(g)), variant);
}

const std::vector<BuiltinBenchmark>& builtin_benchmarks() {
  // name, C_i, H_i=W_i, C_o, H_f=W_f, s -> H_o=W_o
  static const std::vector<BuiltinBenchmark> table{
      {make_config("conv1", 3, 227, 96, 11, 4), 55, 55},
      {make_config("conv2", 3, 231, 96, 11, 4), 56, 56},
      {make_config("conv3", 3, 227, 64, 7, 2), 111, 111},
      {make_config("conv4", 64, 224, 64, 7, 2), 109, 109},
      {make_config("conv5", 96, 24, 256, 5, 1), 20, 20},
      {make_config("conv6", 256, 12, 512, 3, 1), 10, 10},
      {make_config("conv7", 3, 224, 64, 3, 1), 222, 222},
      {make_config("conv8", 64, 112, 128, 3, 1), 110, 110},
      {make_config("conv9", 64, 56, 64, 3, 1), 54, 54},
      {make_config("conv10", 128, 28, 128, 3, 1), 26, 26},
      {make_config("conv11", 256, 14, 256, 3, 1), 12, 12},
      {make_config("conv12", 512, 7, 512, 3, 1), 5, 5},
  };
  return table;
}

std::optional<BenchConfig> find_benchmark(std::string_view name) {
  for (const auto& b : builtin_benchmarks())
    if (b.config.name == name) return b.config;
  return std::nullopt;
}

std::string benchmark_names() {
  std::string out;
  for (const auto& b : builtin_benchmarks()) {
    if (!out.empty()) out += ", ";
    out += b.config.name;
  }
  return out;
}

std::uint64_t conv_flops(const BenchConfig& cfg) {
  const ConvGeometry g = make_geometry(cfg.input_dims(), cfg.params());
  return std::uint64_t{2} * g.n * g.c_o * g.h_o * g.w_o * g.c_i * g.h_f * g.w_f;
}

std::uint64_t checksum(const Tensor4& t) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t required_bytes(const BenchConfig& cfg, bool verify) {
  const ConvGeometry g = make_geometry(cfg.input_dims(), cfg.params());
  const std::uint64_t input = g.input_dims().count();
  const std::uint64_t filter = g.filter_dims().count();
  const std::uint64_t output = g.output_dims().count();
  const std::uint64_t k = std::uint64_t{g.c_i} * g.h_f * g.w_f;
  const std::uint64_t pixels = std::uint64_t{g.h_o} * g.w_o;
  std::uint64_t lowered = 0;
  switch (cfg.algorithm) {
    case Algorithm::direct:
    case Algorithm::implicit_gemm: break;
    case Algorithm::im2col_gemm: lowered = pixels * k + k * g.c_o + pixels * g.c_o; break;
    case Algorithm::im2win_basic:
    case Algorithm::im2win_opt:
      lowered = footprint_elems(Layout::im2win, cfg.input_dims(), cfg.params());
      break;
  }
  // The kept output and the one being produced, plus the direct reference.
  const std::uint64_t outputs = 2 * output + (verify ? output : 0);
  return sizeof(float) * (input + filter + outputs + lowered);
}

Tensor4 bench_input(const BenchConfig& cfg) { return random_tensor(cfg.input_dims(), cfg.seed); }

Tensor4 bench_filter(const BenchConfig& cfg) {
  return random_tensor(cfg.filter_dims(), cfg.seed ^ 0x9e3779b97f4a7c15ULL);
}

Tensor4 run_algorithm(Algorithm algo, const Tensor4& input, const Tensor4& filter,
                      const ConvParams& p, const TilePlan& plan, const ExecPolicy& exec) {
  switch (algo) {
    case Algorithm::direct: return conv_direct(input, filter, p, exec);
    case Algorithm::im2col_gemm: return conv_im2col_gemm(input, filter, p, exec);
    case Algorithm::implicit_gemm: return conv_implicit_gemm(input, filter, p, exec);
    case Algorithm::im2win_basic: return conv_im2win_basic(input, filter, p, exec);
    case Algorithm::im2win_opt: return conv_im2win_opt(input, filter, p, plan, exec);
  }
  throw ConfigError("unknown algorithm");
}

BenchRecord run_bench(const BenchConfig& cfg, const BenchOptions& opts) {
  validate(cfg);
  check_memory(cfg, opts);
  const Tensor4 input = bench_input(cfg);
  const Tensor4 filter = bench_filter(cfg);
  std::optional<Tensor4> reference;
  if (opts.verify) {
    reference = conv_direct(input, filter, cfg.params(), ExecPolicy{opts.workers, nullptr});
  }
  return measure(cfg, opts, input, filter, reference ? &*reference : nullptr);
}

std::vector<BenchRecord> run_ablation(const BenchConfig& base, const BenchOptions& opts) {
  std::vector<BenchRecord> out;
  BenchConfig cfg = base;
  cfg.algorithm = Algorithm::im2win_opt;
  validate(cfg);
  check_memory(cfg, opts);
  const Tensor4 input = bench_input(cfg);
  const Tensor4 filter = bench_filter(cfg);
  std::optional<Tensor4> reference;
  if (opts.verify) {
    reference = conv_direct(input, filter, cfg.params(), ExecPolicy{opts.workers, nullptr});
  }
  for (Variant v : {Variant::full, Variant::no_prefetch, Variant::no_vectorized_load,
                    Variant::no_micro_kernel}) {
    cfg.variant = v;
    out.push_back(measure(cfg, opts, input, filter, reference ? &*reference : nullptr));
  }
  return out;
}

std::string report_csv(std::vector<BenchRecord> records) {
  if (records.empty()) throw ConfigError("report_csv: no records");
  std::stable_sort(records.begin(), records.end(), [](const BenchRecord& a, const BenchRecord& b) {
    return std::tuple(natural_key(a.name), a.name, a.algorithm, a.variant) <
           std::tuple(natural_key(b.name), b.name, b.algorithm, b.variant);
  });
  std::string out(kCsvHeader);
  out += '\n';
  char buf[512];
  for (const BenchRecord& r : records) {
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%s,%zu,%zu,%zu,%zu,%" PRIu64 ",%.6g,%.6g,%.6g,%.6g,%" PRIu64 ",%" PRIu64
                  ",%" PRIu64 ",%.6g,%016" PRIx64 "\n",
                  r.name.c_str(), std::string(algorithm_name(r.algorithm)).c_str(),
                  std::string(variant_name(r.variant)).c_str(), r.batch, r.repeats, r.h_o, r.w_o,
                  r.flops, r.transform_s, r.compute_s, r.total_s, r.tflops, r.raw_elems,
                  r.im2col_elems, r.im2win_elems, r.footprint_reduction_pct, r.checksum);
    out += buf;
  }
  return out;
}

std::vector<FootprintRow> footprint_report(const std::vector<BenchConfig>& cfgs) {
  std::vector<FootprintRow> rows;
  rows.reserve(cfgs.size());
  for (const BenchConfig& c : cfgs) {
    FootprintRow r;
    r.name = c.name;
    r.batch = c.batch;
    r.raw = footprint_elems(Layout::raw, c.input_dims(), c.params());
    r.im2col = footprint_elems(Layout::im2col, c.input_dims(), c.params());
    r.im2win = footprint_elems(Layout::im2win, c.input_dims(), c.params());
    r.reduction = 1.0 - static_cast<double>(r.im2win) / static_cast<double>(r.im2col);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_footprint(const std::vector<FootprintRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %6s %14s %14s %14s %10s\n", "name", "batch", "raw",
                "im2col", "im2win", "reduction");
  os << buf;
  for (const FootprintRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %6zu %14" PRIu64 " %14" PRIu64 " %14" PRIu64 " %9.2f%%\n",
                  r.name.c_str(), r.batch, r.raw, r.im2col, r.im2win, 100.0 * r.reduction);
    os << buf;
  }
  return os.str();
}

std::vector<PlanTrial> search_plans(const BenchConfig& cfg, const BenchOptions& opts,
                                    std::size_t repeats) {
  validate(cfg);
  const Tensor4 input = bench_input(cfg);
  const Tensor4 filter = bench_filter(cfg);
  const Im2winTensor win = im2win(input, cfg.params());
  const ExecPolicy exec{opts.workers, nullptr};
  std::vector<PlanTrial> trials;
  for (std::size_t m_b : {16, 32, 64, 128}) {
    for (std::size_t n_b : {16, 32, 64, 128}) {
      for (std::size_t k_b : {4, 8, 16}) {
        TilePlan plan;
        plan.m_b = m_b;
        plan.n_b = n_b;
        plan.k_b = k_b;
        plan.m_t = plan.n_t = 8;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t rep = 0; rep < std::max<std::size_t>(1, repeats); ++rep) {
          const auto t0 = Clock::now();
          const Tensor4 out = conv_im2win_opt(win, filter, plan, exec);
          best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
        }
        trials.push_back({plan, best});
      }
    }
  }
  std::stable_sort(trials.begin(), trials.end(),
                   [](const PlanTrial& a, const PlanTrial& b) { return a.seconds < b.seconds; });
  return trials;
}

}  // namespace im2win
