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

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "im2win/bench.hpp"
#include "im2win/optimized.hpp"
#include "im2win/reference.hpp"
#include "im2win/tensor_io.hpp"
#include "im2win/transforms.hpp"

namespace {

using namespace im2win;

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GeometryFlags {
  std::size_t batch = 2;
  std::size_t c_in = 0, h_in = 0, w_in = 0;
  std::size_t c_out = 0, h_f = 0, w_f = 0;
  std::size_t stride = 1;
  CLI::Option* c_in_opt = nullptr;

  void add(CLI::App& cmd, bool with_input, bool with_filter) {
    cmd.add_option("--batch", batch, "Batch size N_i")->check(CLI::PositiveNumber);
    if (with_input) {
      c_in_opt = cmd.add_option("--cin", c_in, "Input channels")->check(CLI::PositiveNumber);
      cmd.add_option("--hin", h_in, "Input height")->check(CLI::PositiveNumber);
      cmd.add_option("--win", w_in, "Input width")->check(CLI::PositiveNumber);
    }
    if (with_filter) {
      cmd.add_option("--cout", c_out, "Output channels")->check(CLI::PositiveNumber);
    }
    cmd.add_option("--hf", h_f, "Filter height")->check(CLI::PositiveNumber);
    cmd.add_option("--wf", w_f, "Filter width")->check(CLI::PositiveNumber);
    cmd.add_option("--stride", stride, "Stride")->check(CLI::PositiveNumber);
  }

  BenchConfig config(std::string name) const {
    if (c_in == 0 || h_in == 0 || w_in == 0 || c_out == 0 || h_f == 0 || w_f == 0) {
      throw UsageError("geometry needs --cin --hin --win --cout --hf --wf (or --all-benchmarks)");
    }
    BenchConfig c;
    c.name = std::move(name);
    c.c_in = c_in;
    c.h_in = h_in;
    c.w_in = w_in;
    c.c_out = c_out;
    c.h_f = h_f;
    c.w_f = w_f;
    c.stride = stride;
    c.batch = batch;
    return c;
  }
};

struct PlanFlags {
  std::string plan;
  bool no_prefetch = false, no_vectorized_load = false, no_micro_kernel = false;

  void add(CLI::App& cmd, bool with_toggles) {
    cmd.add_option("--plan", plan, "Tile plan m_b,n_b,k_b,m_t,n_t");
    if (with_toggles) {
      cmd.add_flag("--no-prefetch", no_prefetch, "Disable double-buffered prefetching");
      cmd.add_flag("--no-vectorized-load", no_vectorized_load, "Disable vectorized loads");
      cmd.add_flag("--no-micro-kernel", no_micro_kernel, "Disable the micro-kernel");
    }
  }

  // Sets cfg.plan / cfg.variant for an im2win-opt run.
  void apply(BenchConfig& cfg) const {
    if (!plan.empty()) cfg.plan = TilePlan::parse(plan);
    const int removed = int{no_prefetch} + int{no_vectorized_load} + int{no_micro_kernel};
    if (removed == 0) {
      cfg.variant = Variant::full;
    } else if (removed == 1) {
      cfg.variant = no_prefetch          ? Variant::no_prefetch
                    : no_vectorized_load ? Variant::no_vectorized_load
                                         : Variant::no_micro_kernel;
    } else {
      TilePlan p = cfg.effective_plan();
      p.prefetch_double_buffer = !no_prefetch;
      p.vectorized_load = !no_vectorized_load;
      p.micro_kernel = !no_micro_kernel;
      cfg.plan = p;
      cfg.variant = Variant::custom;
    }
  }
};

std::vector<BenchConfig> select_benchmarks(const std::string& name, std::size_t batch) {
  std::vector<BenchConfig> out;
  if (name == "all") {
    for (const auto& b : builtin_benchmarks()) out.push_back(b.config);
  } else if (auto cfg = find_benchmark(name)) {
    out.push_back(*cfg);
  } else {
    throw UsageError("unknown benchmark '" + name + "'; valid names: " + benchmark_names() +
                     ", all");
  }
  for (auto& c : out) c.batch = batch;
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw FormatError("failed writing " + path);
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  GeometryFlags geo;
  PlanFlags plan;
  bool all_benchmarks = false;
  std::uint64_t seed = 7;
  double tol = 1e-4;
};

bool verify_config(BenchConfig cfg, const VerifyArgs& a) {
  cfg.seed = a.seed;
  cfg.algorithm = Algorithm::im2win_opt;
  a.plan.apply(cfg);
  const TilePlan plan = cfg.effective_plan();
  plan.validate();
  const Tensor4 input = bench_input(cfg);
  const Tensor4 filter = bench_filter(cfg);

  std::vector<std::pair<Algorithm, Tensor4>> outs;
  for (Algorithm algo : all_algorithms()) {
    outs.emplace_back(algo, run_algorithm(algo, input, filter, cfg.params(), plan, {}));
  }
  const ConvGeometry g = make_geometry(input.dims(), filter.dims(), cfg.params());
  std::printf("%s: N=%zu C_i=%zu %zux%zu C_o=%zu filter %zux%zu s=%zu -> %zux%zu plan %s\n",
              cfg.name.c_str(), g.n, g.c_i, g.h_i, g.w_i, g.c_o, g.h_f, g.w_f, g.stride, g.h_o,
              g.w_o, plan.to_string().c_str());
  bool ok = true;
  for (std::size_t x = 0; x < outs.size(); ++x) {
    for (std::size_t y = x + 1; y < outs.size(); ++y) {
      const double d = max_rel_diff(outs[x].second, outs[y].second);
      const bool pass = d <= a.tol;  // false for NaN
      ok = ok && pass;
      std::printf("  %-13s vs %-13s max_rel_diff %.3g %s\n",
                  std::string(algorithm_name(outs[x].first)).c_str(),
                  std::string(algorithm_name(outs[y].first)).c_str(), d, pass ? "ok" : "FAIL");
    }
  }
  return ok;
}

int cmd_verify(const VerifyArgs& a) {
  std::printf("seed: %llu tol: %g\n", static_cast<unsigned long long>(a.seed), a.tol);
  bool ok = true;
  if (a.all_benchmarks) {
    for (const auto& b : builtin_benchmarks()) {
      BenchConfig cfg = b.config;
      cfg.batch = a.geo.batch;
      ok = verify_config(cfg, a) && ok;
    }
  } else {
    BenchConfig cfg = a.geo.config("custom");
    make_geometry(cfg.input_dims(), cfg.params());
    ok = verify_config(cfg, a);
  }
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitMismatch;
}

// ------------------------------------------------------------- transform

struct TransformArgs {
  GeometryFlags geo;
  std::string in, out, layout;
};

int cmd_transform(const TransformArgs& a) {
  const Tensor4 input = read_tensor(a.in);
  const Dims4 d = input.dims();
  if (a.geo.c_in_opt && a.geo.c_in_opt->count() > 0 && a.geo.c_in != d.d1) {
    throw UsageError("--cin " + std::to_string(a.geo.c_in) + " does not match fixture channels " +
                     std::to_string(d.d1));
  }
  if (a.geo.h_f == 0 || a.geo.w_f == 0) throw UsageError("transform needs --hf and --wf");
  const ConvParams p{d.d1, 1, a.geo.h_f, a.geo.w_f, a.geo.stride};
  const ConvGeometry g = make_geometry(d, p);

  Tensor4 result;
  Layout layout;
  if (a.layout == "im2win") {
    layout = Layout::im2win;
    result = im2win::im2win(input, p).to_tensor();
  } else {
    layout = Layout::im2col;
    const std::size_t rows = g.h_o * g.w_o, cols = g.c_i * g.h_f * g.w_f;
    result = Tensor4({g.n, 1, rows, cols});
    for (std::size_t i = 0; i < g.n; ++i) {
      const Mat2 m = im2col(input.image(i), p);
      std::copy(m.data().begin(), m.data().end(), result.image_data(i).begin());
    }
  }
  write_tensor(result, a.out);
  std::printf("layout: %s\ndims: %s\nelements: %llu\n", std::string(layout_name(layout)).c_str(),
              to_string(result.dims()).c_str(),
              static_cast<unsigned long long>(footprint_elems(layout, d, p)));
  return kExitOk;
}

// ------------------------------------------------------------------ conv

struct ConvArgs {
  std::string in, filter, out, expect, algo = "im2win-opt";
  std::size_t stride = 1;
  double tol = 1e-4;
  PlanFlags plan;
};

int cmd_conv(const ConvArgs& a) {
  const auto algo = parse_algorithm(a.algo);
  if (!algo) throw UsageError("unknown algorithm '" + a.algo + "'");
  const Tensor4 input = read_tensor(a.in);
  const Tensor4 filter = read_tensor(a.filter);
  const Dims4 fd = filter.dims();
  const ConvParams p{fd.d1, fd.d0, fd.d2, fd.d3, a.stride};
  const ConvGeometry g = make_geometry(input.dims(), fd, p);

  BenchConfig cfg;
  cfg.c_in = g.c_i;
  cfg.h_in = g.h_i;
  cfg.w_in = g.w_i;
  cfg.c_out = g.c_o;
  cfg.h_f = g.h_f;
  cfg.w_f = g.w_f;
  cfg.stride = g.stride;
  cfg.batch = g.n;
  a.plan.apply(cfg);
  const TilePlan plan = cfg.effective_plan();
  plan.validate();

  PhaseTimes times;
  const Tensor4 out = run_algorithm(*algo, input, filter, p, plan, ExecPolicy{0, &times});
  if (!a.out.empty()) write_tensor(out, a.out);
  std::printf("algorithm: %s\noutput: %s\ntransform_s: %.6g\ncompute_s: %.6g\nchecksum: %016llx\n",
              a.algo.c_str(), to_string(out.dims()).c_str(), times.transform_s, times.compute_s,
              static_cast<unsigned long long>(checksum(out)));
  if (a.expect.empty()) return kExitOk;
  const double d = max_rel_diff(out, read_tensor(a.expect));
  const bool pass = d <= a.tol;
  std::printf("max_rel_diff vs expected: %.3g %s\n", d, pass ? "ok" : "FAIL");
  return pass ? kExitOk : kExitMismatch;
}

// ---------------------------------------------------------- bench/ablate

struct BenchArgs {
  std::string bench = "all", algo = "all", csv;
  std::size_t batch = 2, repeats = 10;
  std::uint64_t seed = 7;
  std::uint64_t mem_limit_mb = 0;
  bool verify = false;
  PlanFlags plan;
};

BenchOptions bench_options(const BenchArgs& a) {
  BenchOptions o;
  o.memory_limit_bytes = a.mem_limit_mb * 1024 * 1024;
  o.verify = a.verify;
  return o;
}

void report_checks(const std::vector<BenchRecord>& records) {
  for (const BenchRecord& r : records) {
    if (r.max_rel_diff_vs_direct) {
      std::fprintf(stderr, "%s %s %s: max_rel_diff vs direct %.3g\n", r.name.c_str(),
                   std::string(algorithm_name(r.algorithm)).c_str(),
                   std::string(variant_name(r.variant)).c_str(), *r.max_rel_diff_vs_direct);
    }
  }
}

bool records_ok(const std::vector<BenchRecord>& records) {
  for (const BenchRecord& r : records)
    if (r.max_rel_diff_vs_direct && !(*r.max_rel_diff_vs_direct <= 1e-4)) return false;
  return true;
}

int cmd_bench(const BenchArgs& a) {
  std::vector<Algorithm> algos;
  if (a.algo == "all") {
    algos = comparison_algorithms();
  } else if (auto algo = parse_algorithm(a.algo)) {
    algos = {*algo};
  } else {
    throw UsageError("unknown algorithm '" + a.algo + "'");
  }
  const auto cfgs = select_benchmarks(a.bench, a.batch);
  std::fprintf(stderr, "seed: %llu\n", static_cast<unsigned long long>(a.seed));
  std::vector<BenchRecord> records;
  for (BenchConfig cfg : cfgs) {
    cfg.repeats = a.repeats;
    cfg.seed = a.seed;
    for (Algorithm algo : algos) {
      cfg.algorithm = algo;
      cfg.variant = Variant::none;
      cfg.plan.reset();
      if (algo == Algorithm::im2win_opt) a.plan.apply(cfg);
      records.push_back(run_bench(cfg, bench_options(a)));
    }
  }
  report_checks(records);
  write_text(a.csv, report_csv(records));
  return records_ok(records) ? kExitOk : kExitMismatch;
}

int cmd_ablate(const BenchArgs& a) {
  const auto cfgs = select_benchmarks(a.bench, a.batch);
  std::fprintf(stderr, "seed: %llu\n", static_cast<unsigned long long>(a.seed));
  std::vector<BenchRecord> records;
  for (BenchConfig cfg : cfgs) {
    cfg.repeats = a.repeats;
    cfg.seed = a.seed;
    if (!a.plan.plan.empty()) cfg.plan = TilePlan::parse(a.plan.plan);
    auto rows = run_ablation(cfg, bench_options(a));
    const BenchRecord* slowest = nullptr;
    for (const BenchRecord& r : rows) {
      if (r.variant != Variant::full && (!slowest || r.total_s > slowest->total_s)) slowest = &r;
    }
    std::fprintf(stderr, "%s: largest loss from %s\n", cfg.name.c_str(),
                 std::string(variant_name(slowest->variant)).c_str());
    records.insert(records.end(), rows.begin(), rows.end());
  }
  report_checks(records);
  write_text(a.csv, report_csv(records));
  return records_ok(records) ? kExitOk : kExitMismatch;
}

// ------------------------------------------------------------- footprint

struct FootprintArgs {
  GeometryFlags geo;
  std::string bench;
};

int cmd_footprint(const FootprintArgs& a) {
  std::vector<BenchConfig> cfgs;
  if (!a.bench.empty()) {
    cfgs = select_benchmarks(a.bench, a.geo.batch);
  } else {
    const BenchConfig cfg = a.geo.config("custom");
    make_geometry(cfg.input_dims(), cfg.params());
    cfgs.push_back(cfg);
  }
  std::cout << format_footprint(footprint_report(cfgs));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"im2win convolution toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check that all algorithms agree");
  verify.geo.add(*verify_cmd, true, true);
  verify.plan.add(*verify_cmd, true);
  auto* all_opt =
      verify_cmd->add_flag("--all-benchmarks", verify.all_benchmarks, "Run every built-in config");
  verify_cmd->add_option("--seed", verify.seed, "Random seed");
  verify_cmd->add_option("--tol", verify.tol, "Max relative difference allowed")
      ->check(CLI::NonNegativeNumber);
  for (const char* name : {"--cin", "--hin", "--win", "--cout", "--hf", "--wf", "--stride"}) {
    all_opt->excludes(verify_cmd->get_option(name));
  }

  TransformArgs transform;
  auto* transform_cmd = app.add_subcommand("transform", "Write the im2col or im2win layout");
  transform.geo.add(*transform_cmd, true, false);
  transform_cmd->get_option("--batch")->description("Ignored; the fixture sets the batch");
  transform_cmd->add_option("--in", transform.in, "Input fixture")->required();
  transform_cmd->add_option("--out", transform.out, "Output fixture")->required();
  transform_cmd->add_option("--layout", transform.layout, "im2col or im2win")
      ->required()
      ->check(CLI::IsMember({"im2col", "im2win"}));

  ConvArgs conv;
  auto* conv_cmd = app.add_subcommand("conv", "Convolve fixture files");
  conv_cmd->add_option("--in", conv.in, "Input fixture (N,C_i,H_i,W_i)")->required();
  conv_cmd->add_option("--filter", conv.filter, "Filter fixture (C_o,C_i,H_f,W_f)")->required();
  conv_cmd->add_option("--out", conv.out, "Output fixture");
  conv_cmd->add_option("--stride", conv.stride, "Stride")->check(CLI::PositiveNumber);
  conv_cmd->add_option("--algo", conv.algo, "Algorithm");
  conv_cmd->add_option("--expect", conv.expect, "Expected output fixture to compare against");
  conv_cmd->add_option("--tol", conv.tol, "Max relative difference allowed with --expect")
      ->check(CLI::NonNegativeNumber);
  conv.plan.add(*conv_cmd, true);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time algorithms on built-in configs");
  BenchArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Remove one optimization at a time");
  for (auto [cmd, args] : {std::pair{bench_cmd, &bench}, std::pair{ablate_cmd, &ablate}}) {
    cmd->add_option("--bench", args->bench, "Benchmark name or 'all'");
    cmd->add_option("--batch", args->batch, "Batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--repeats", args->repeats, "Timed runs")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", args->seed, "Random seed");
    cmd->add_option("--csv", args->csv, "CSV output path (default stdout)");
    cmd->add_option("--mem-limit-mb", args->mem_limit_mb, "Memory limit (default: available)");
    cmd->add_flag("--verify", args->verify, "Compare each output against direct");
  }
  bench_cmd->add_option("--algo", bench.algo, "Algorithm name or 'all'");
  bench.plan.add(*bench_cmd, true);
  ablate.plan.add(*ablate_cmd, false);

  FootprintArgs footprint;
  auto* footprint_cmd = app.add_subcommand("footprint", "Element counts per layout");
  footprint.geo.add(*footprint_cmd, true, false);
  auto* fp_bench = footprint_cmd->add_option("--bench", footprint.bench, "Benchmark name or 'all'");
  for (const char* name : {"--cin", "--hin", "--win", "--hf", "--wf", "--stride"}) {
    fp_bench->excludes(footprint_cmd->get_option(name));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify_cmd) return cmd_verify(verify);
    if (*transform_cmd) return cmd_transform(transform);
    if (*conv_cmd) return cmd_conv(conv);
    if (*bench_cmd) return cmd_bench(bench);
    if (*ablate_cmd) return cmd_ablate(ablate);
    if (*footprint_cmd) {
      if (footprint.bench.empty()) footprint.geo.c_out = 1;
      return cmd_footprint(footprint);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
