/*
 * Copyright 2026 The wafermesh Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// wafermesh command-line entry point: run, sweep, roofline, gen.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "wafermesh/config_file.hpp"
#include "wafermesh/error.hpp"
#include "wafermesh/grid_io.hpp"
#include "wafermesh/perf.hpp"

namespace {

using namespace wafermesh;

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << "error," << kind << "," << one_line(message) << "\n";
  return code;
}

void emit_csv(const std::string& path, const std::vector<perf::PerfRecord>& rows) {
  if (path.empty() || path == "-") {
    perf::write_csv(std::cout, rows);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  perf::write_csv(out, rows);
  if (!out) throw IoError("write to " + path + " failed");
}

struct RunArgs {
  std::string config;
  std::string pattern;
  int radius = 0;
  std::string weights;
  std::string grid;
  std::string pe_grid;
  std::string tile;
  int iters = 0;
  double eps = 0.0;
  int check_interval = 0;
  std::string mode = "sim";
  std::string precision = "tf32";
  std::string trace;
  std::string out;
  std::string input;
  std::string save_grid;
  int threads = 1;
  int elements_per_cycle = 1;
  double freq = perf::kNominalFrequencyHz;
  double bandwidth = 0.0;
  bool acc_reads = false;
};

int cmd_run(const RunArgs& a, const CLI::App& sub) {
  perf::Experiment e;
  if (!a.config.empty()) e = perf::experiment_from_config(KeyValueConfig::load(a.config));
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  if (given("--pattern")) e.pattern = parse_shape(a.pattern);
  if (given("--radius")) e.radius = a.radius;
  if (given("--weights")) e.weights = a.weights;
  if (given("--grid")) std::tie(e.grid_rows, e.grid_cols) = parse_dims(a.grid, "--grid");
  if (given("--pe-grid")) std::tie(e.pe_rows, e.pe_cols) = parse_dims(a.pe_grid, "--pe-grid");
  if (given("--tile")) std::tie(e.tile_h, e.tile_w) = parse_dims(a.tile, "--tile");
  if (given("--iters")) e.iterations = a.iters;
  if (given("--eps")) e.eps = a.eps;
  if (given("--check-interval")) e.check_interval = a.check_interval;
  if (given("--bandwidth")) e.bandwidth = a.bandwidth;
  e.mode = perf::parse_mode(a.mode);
  if (a.precision == "tf32") {
    e.precision = s2r::Precision::TF32Model;
  } else if (a.precision == "f64") {
    e.precision = s2r::Precision::F64Model;
  } else {
    throw ConfigError("unknown precision '" + a.precision + "' (expected tf32 or f64)");
  }
  e.frequency_hz = a.freq;
  e.count_accumulator_reads = a.acc_reads;
  e.sim.threads = a.threads;
  e.sim.elements_per_cycle = a.elements_per_cycle;

  std::optional<GlobalGrid> initial;
  if (!a.input.empty()) initial = read_grid(a.input);

  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace, std::ios::binary);
    if (!trace) throw IoError("cannot write " + a.trace);
    trace << "cycle,pe_row,pe_col,event,detail\n";
    e.trace = &trace;
  }
  GlobalGrid final_grid;
  const perf::PerfRecord rec = perf::run_experiment(e, initial, &final_grid);
  if (!a.save_grid.empty()) write_grid(a.save_grid, final_grid);
  emit_csv(a.out, {rec});
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out, bool parallel) {
  perf::SweepSpec spec = perf::sweep_from_config(KeyValueConfig::load(config));
  if (parallel) spec.parallel = true;
  const auto rows = perf::weak_scaling_sweep(spec);
  emit_csv(out, rows);
  return 0;
}

struct RooflineArgs {
  std::string pe_grid;
  double freq = perf::kNominalFrequencyHz;
  std::string kernel;
  double ai = 0.0;
  double bandwidth = 0.0;
  bool acc_reads = false;
};

int cmd_roofline(const RooflineArgs& a, const CLI::App& sub) {
  const auto [rows, cols] = parse_dims(a.pe_grid, "--pe-grid");
  double ai = a.ai;
  if (sub.count("--ai-from-kernel") > 0) {
    const auto colon = a.kernel.find(':');
    if (colon == std::string::npos) throw ConfigError("--ai-from-kernel expects pattern:radius, e.g. star:1");
    const StencilShape shape = parse_shape(a.kernel.substr(0, colon));
    const int radius = parse_int(a.kernel.substr(colon + 1), "kernel radius");
    ai = perf::arithmetic_intensity(StencilKernel::heat(shape, radius), a.acc_reads);
  }
  const double peak = perf::peak_flops(rows, cols, a.freq);
  const double attainable = perf::roofline_attainable(ai, peak, a.bandwidth);
  std::printf("ai_flop_per_byte,peak_flops,bandwidth_bytes_per_s,attainable_flops,ridge_ai,bound\n");
  std::printf("%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", ai, peak, a.bandwidth, attainable, peak / a.bandwidth,
              attainable < peak ? "memory" : "compute");
  return 0;
}

struct GenArgs {
  std::string grid;
  std::string out;
  bool random = false;
  unsigned seed = 0;
  std::string hotspot;  // RxC@row,col
};

int cmd_gen(const GenArgs& a) {
  const auto [rows, cols] = parse_dims(a.grid, "--grid");
  perf::Hotspot spot;
  if (a.random) {
    spot.mode = perf::Hotspot::Mode::Random;
    spot.seed = a.seed;
  } else if (!a.hotspot.empty()) {
    const auto at = a.hotspot.find('@');
    const auto comma = a.hotspot.find(',', at == std::string::npos ? 0 : at);
    if (at == std::string::npos || comma == std::string::npos) {
      throw ConfigError("--hotspot expects HxW@ROW,COL");
    }
    spot.mode = perf::Hotspot::Mode::Explicit;
    std::tie(spot.rows, spot.cols) = parse_dims(a.hotspot.substr(0, at), "hotspot size");
    spot.row0 = parse_int(a.hotspot.substr(at + 1, comma - at - 1), "hotspot row");
    spot.col0 = parse_int(a.hotspot.substr(comma + 1), "hotspot column");
  }
  write_grid(a.out, perf::heat_init(rows, cols, spot));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wafermesh: wafer-scale mesh stencil simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one stencil experiment and emit a CSV record");
  run_cmd->add_option("--config", run.config, "Program descriptor (key = value)");
  run_cmd->add_option("--pattern", run.pattern, "star or box");
  run_cmd->add_option("--radius", run.radius, "Stencil radius");
  run_cmd->add_option("--weights", run.weights, "heat or dy:dx:w,...");
  run_cmd->add_option("--grid", run.grid, "Grid size NxM");
  run_cmd->add_option("--pe-grid", run.pe_grid, "PE grid RxC");
  run_cmd->add_option("--tile", run.tile, "Per-PE tile HxW");
  run_cmd->add_option("--iters", run.iters, "Iterations T");
  run_cmd->add_option("--eps", run.eps, "Convergence threshold (L-inf)");
  run_cmd->add_option("--check-interval", run.check_interval, "Iterations between convergence checks");
  run_cmd->add_option("--mode", run.mode, "sim, oracle or s2r")->capture_default_str();
  run_cmd->add_option("--precision", run.precision, "s2r precision: tf32 or f64")->capture_default_str();
  run_cmd->add_option("--trace", run.trace, "Write a simulator event trace");
  run_cmd->add_option("--out", run.out, "CSV output (default stdout)");
  run_cmd->add_option("--input", run.input, "Initial grid file");
  run_cmd->add_option("--save-grid", run.save_grid, "Write the final grid");
  run_cmd->add_option("--threads", run.threads, "Host threads for the simulator")->capture_default_str();
  run_cmd->add_option("--elements-per-cycle", run.elements_per_cycle, "Vector throughput")->capture_default_str();
  run_cmd->add_option("--freq", run.freq, "Clock frequency in Hz")->capture_default_str();
  run_cmd->add_option("--bandwidth", run.bandwidth, "Roofline bandwidth in bytes/s");
  run_cmd->add_flag("--count-accumulator-reads", run.acc_reads, "Count fmacs destination reads in AI");

  std::string sweep_config;
  std::string sweep_out;
  bool sweep_parallel = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Weak-scaling sweep over mesh sizes");
  sweep_cmd->add_option("--config", sweep_config, "Sweep description (key = value)")->required();
  sweep_cmd->add_option("--out", sweep_out, "CSV output (default stdout)");
  sweep_cmd->add_flag("--parallel", sweep_parallel, "Run mesh sizes concurrently");

  RooflineArgs roof;
  auto* roof_cmd = app.add_subcommand("roofline", "Roofline bound for a PE rectangle");
  roof_cmd->add_option("--pe-grid", roof.pe_grid, "PE grid RxC")->required();
  roof_cmd->add_option("--freq", roof.freq, "Clock frequency in Hz")->capture_default_str();
  auto* from_kernel = roof_cmd->add_option("--ai-from-kernel", roof.kernel, "pattern:radius, e.g. star:1");
  auto* ai_opt = roof_cmd->add_option("--ai", roof.ai, "Arithmetic intensity in FLOP/byte");
  from_kernel->excludes(ai_opt);
  roof_cmd->add_option("--bandwidth", roof.bandwidth, "Memory bandwidth in bytes/s")->required();
  roof_cmd->add_flag("--count-accumulator-reads", roof.acc_reads, "Count fmacs destination reads in AI");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write an initial grid file");
  gen_cmd->add_option("--grid", gen.grid, "Grid size NxM")->required();
  gen_cmd->add_option("--out", gen.out, "Output grid file")->required();
  gen_cmd->add_flag("--random", gen.random, "Uniform [0,1) values instead of a hotspot");
  gen_cmd->add_option("--seed", gen.seed, "Seed for --random")->capture_default_str();
  gen_cmd->add_option("--hotspot", gen.hotspot, "Hot rectangle HxW@ROW,COL (default centred)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*run_cmd) return cmd_run(run, *run_cmd);
    if (*sweep_cmd) return cmd_sweep(sweep_config, sweep_out, sweep_parallel);
    if (*roof_cmd) {
      if (roof_cmd->count("--ai-from-kernel") == 0 && roof_cmd->count("--ai") == 0) {
        return fail("usage", "roofline needs --ai-from-kernel or --ai", 2);
      }
      return cmd_roofline(roof, *roof_cmd);
    }
    if (*gen_cmd) return cmd_gen(gen);
  } catch (const wafermesh::DeadlockError& e) {
    std::cerr << e.snapshot();
    return fail(e.kind(), e.what(), 3);
  } catch (const wafermesh::Error& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 4);
  }
  return 0;
}
