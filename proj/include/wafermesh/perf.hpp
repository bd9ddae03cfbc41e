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

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "wafermesh/config_file.hpp"
#include "wafermesh/core_model.hpp"
#include "wafermesh/mesh.hpp"
#include "wafermesh/s2r_gemm.hpp"

namespace wafermesh::perf {

inline constexpr double kNominalFrequencyHz = 875.0e6;
inline constexpr double kFlopsPerCyclePerPe = 2.0;
/// Local SRAM bandwidth per PE: two 64-bit reads and one 64-bit write.
inline constexpr double kSramBytesPerCyclePerPe = 24.0;

/// (T * nx * ny) / (t * 1e9).
double gstencils(std::int64_t iterations, std::int64_t nx, std::int64_t ny, double seconds);

/// FLOP per byte of one update with p weighted points: (2p - 1) / (8p),
/// one 4-byte read and write per vector op. With accumulator reads counted
/// each fmacs also re-reads its destination: (2p - 1) / (4(3p - 1)).
double arithmetic_intensity(std::size_t points, bool count_accumulator_reads = false);
double arithmetic_intensity(const StencilKernel& kernel, bool count_accumulator_reads = false);

double peak_flops(int pe_rows, int pe_cols, double freq_hz, double flops_per_cycle = kFlopsPerCyclePerPe);
double roofline_attainable(double ai, double peak, double bandwidth_bytes_per_s);
/// Aggregate local-memory bandwidth of a PE rectangle.
double sram_bandwidth(int pe_rows, int pe_cols, double freq_hz);

struct Hotspot {
  enum class Mode { Centered, Explicit, Random };
  Mode mode = Mode::Centered;
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
  std::uint32_t seed = 0;  // Random mode: uniform [0, 1) values
};

/// Zero field with a rectangle of 1.0. Centered: ceil(rows/8) x ceil(cols/8)
/// in the middle.
GlobalGrid heat_init(int rows, int cols, const Hotspot& spot = {});

/// "heat" or a comma-separated list of `dy:dx:w`.
StencilKernel parse_kernel(StencilShape shape, int radius, const std::string& weights);

enum class Mode { Sim, Oracle, S2R };
std::string to_string(Mode m);
Mode parse_mode(const std::string& text);

struct PerfRecord {
  Mode mode = Mode::Sim;
  StencilShape pattern = StencilShape::Star;
  int radius = 1;
  int grid_rows = 0;
  int grid_cols = 0;
  int pe_rows = 0;
  int pe_cols = 0;
  int tile_h = 0;
  int tile_w = 0;
  int iterations = 0;
  std::uint64_t cycles = 0;
  double cycles_per_iter = 0.0;
  double seconds = 0.0;
  double gstencils = 0.0;
  double ai_flop_per_byte = 0.0;
  double peak_flops = 0.0;
  double attainable_flops = 0.0;
  double max_abs_err = 0.0;
  std::string status = "ok";
  std::string error;
};

inline constexpr const char* kCsvVersion = "wms_perf_v1";
std::string csv_header();
std::string csv_row(const PerfRecord& r);
/// Version line, header, one row per record.
void write_csv(std::ostream& out, const std::vector<PerfRecord>& records);

struct Experiment {
  StencilShape pattern = StencilShape::Star;
  int radius = 1;
  std::string weights = "heat";
  int grid_rows = 0;  // 0: pe * tile
  int grid_cols = 0;
  int pe_rows = 1;
  int pe_cols = 1;
  int tile_h = 0;  // 0: derived from the grid
  int tile_w = 0;
  int iterations = 1;
  int check_interval = 0;
  std::optional<double> eps;
  Mode mode = Mode::Sim;
  s2r::Precision precision = s2r::Precision::TF32Model;
  double frequency_hz = kNominalFrequencyHz;
  std::optional<double> bandwidth;  // default: sram_bandwidth of the PE grid
  bool count_accumulator_reads = false;
  bool verify = true;  // fill max_abs_err against the ordered oracle
  sim::SimConfig sim;
  std::ostream* trace = nullptr;

  StencilKernel kernel() const { return parse_kernel(pattern, radius, weights); }
  /// Resolves grid and tile sizes against each other.
  TileGeometry geometry() const;
  std::pair<int, int> grid_dims() const;
};

/// Reads program keys: pattern, radius, weights, pe_rows, pe_cols, tile_h,
/// tile_w, grid_rows, grid_cols, iterations, check_interval, eps.
Experiment experiment_from_config(const KeyValueConfig& cfg);

/// Runs one experiment. `initial` defaults to heat_init of the grid;
/// `final_grid` receives the result when given.
PerfRecord run_experiment(const Experiment& e, const std::optional<GlobalGrid>& initial = std::nullopt,
                          GlobalGrid* final_grid = nullptr);

struct SweepSpec {
  Experiment base;  // pattern, kernel, tile, iterations, costs
  std::vector<std::pair<int, int>> meshes;
  bool parallel = false;
};

/// Keys: pattern, radius, weights, meshes (e.g. "2x2,4x4"), tile_h, tile_w,
/// iterations, frequency, bandwidth, elements_per_cycle, verify, parallel.
SweepSpec sweep_from_config(const KeyValueConfig& cfg);

/// One simulated record per mesh with grid = mesh * tile. Failing rows are
/// recorded with status "error" and the sweep continues.
std::vector<PerfRecord> weak_scaling_sweep(const SweepSpec& spec);

}  // namespace wafermesh::perf
