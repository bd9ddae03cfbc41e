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

#include "wafermesh/perf.hpp"

#include <cmath>
#include <cstdio>
#include <future>
#include <random>
#include <sstream>

#include "wafermesh/cstencil.hpp"
#include "wafermesh/error.hpp"
#include "wafermesh/oracle.hpp"

namespace wafermesh::perf {

double gstencils(std::int64_t iterations, std::int64_t nx, std::int64_t ny, double seconds) {
  if (!(seconds > 0.0)) throw PreconditionError("elapsed time must be positive");
  return static_cast<double>(iterations) * static_cast<double>(nx) * static_cast<double>(ny) / (seconds * 1e9);
}

double arithmetic_intensity(std::size_t points, bool count_accumulator_reads) {
  if (points == 0) throw PreconditionError("kernel has no weighted points");
  const double p = static_cast<double>(points);
  const double flops = 2.0 * p - 1.0;
  const double bytes = count_accumulator_reads ? 4.0 * (3.0 * p - 1.0) : 8.0 * p;
  return flops / bytes;
}

double arithmetic_intensity(const StencilKernel& kernel, bool count_accumulator_reads) {
  return arithmetic_intensity(kernel.point_count(), count_accumulator_reads);
}

double peak_flops(int pe_rows, int pe_cols, double freq_hz, double flops_per_cycle) {
  if (pe_rows < 1 || pe_cols < 1 || !(freq_hz > 0.0) || !(flops_per_cycle > 0.0)) {
    throw PreconditionError("peak_flops needs positive inputs");
  }
  return static_cast<double>(pe_rows) * static_cast<double>(pe_cols) * flops_per_cycle * freq_hz;
}

double roofline_attainable(double ai, double peak, double bandwidth_bytes_per_s) {
  if (ai < 0.0 || peak < 0.0 || bandwidth_bytes_per_s < 0.0) {
    throw PreconditionError("roofline inputs must be non-negative");
  }
  return std::min(peak, ai * bandwidth_bytes_per_s);
}

double sram_bandwidth(int pe_rows, int pe_cols, double freq_hz) {
  return static_cast<double>(pe_rows) * static_cast<double>(pe_cols) * kSramBytesPerCyclePerPe * freq_hz;
}

GlobalGrid heat_init(int rows, int cols, const Hotspot& spot) {
  if (rows < 1 || cols < 1) throw PreconditionError("grid dimensions must be positive");
  GlobalGrid g(rows, cols, 0.0f);
  if (spot.mode == Hotspot::Mode::Random) {
    std::mt19937 rng(spot.seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (float& v : g.values()) v = dist(rng);
    return g;
  }
  int h = (rows + 7) / 8;
  int w = (cols + 7) / 8;
  int r0 = (rows - h) / 2;
  int c0 = (cols - w) / 2;
  if (spot.mode == Hotspot::Mode::Explicit) {
    h = spot.rows;
    w = spot.cols;
    r0 = spot.row0;
    c0 = spot.col0;
    if (h < 0 || w < 0 || r0 < 0 || c0 < 0 || r0 + h > rows || c0 + w > cols) {
      throw PreconditionError("hotspot " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                              std::to_string(r0) + "," + std::to_string(c0) + ") lies outside the " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
  }
  for (int r = r0; r < r0 + h; ++r) {
    for (int c = c0; c < c0 + w; ++c) g.at(r, c) = 1.0f;
  }
  return g;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

StencilKernel parse_kernel(StencilShape shape, int radius, const std::string& weights) {
  const std::string text = trim(weights);
  if (text.empty() || text == "heat") return StencilKernel::heat(shape, radius);
  std::map<Offset, float> w;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto a = item.find(':');
    const auto b = a == std::string::npos ? a : item.find(':', a + 1);
    if (b == std::string::npos) throw ConfigError("weight entry '" + item + "' is not dy:dx:w");
    const Offset off{parse_int(trim(item.substr(0, a)), "weight dy"), parse_int(trim(item.substr(a + 1, b - a - 1)), "weight dx")};
    if (w.contains(off)) throw ConfigError("weight for offset (" + std::to_string(off.dy) + "," + std::to_string(off.dx) + ") given twice");
    w[off] = static_cast<float>(parse_double(trim(item.substr(b + 1)), "weight value"));
  }
  return StencilKernel(shape, radius, std::move(w));
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Sim: return "sim";
    case Mode::Oracle: return "oracle";
    case Mode::S2R: return "s2r";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  if (text == "sim") return Mode::Sim;
  if (text == "oracle") return Mode::Oracle;
  if (text == "s2r") return Mode::S2R;
  throw ConfigError("unknown mode '" + text + "' (expected sim, oracle or s2r)");
}

std::string csv_header() {
  return "mode,pattern,radius,grid_rows,grid_cols,pe_rows,pe_cols,tile_h,tile_w,iterations,cycles,"
         "cycles_per_iter,seconds,gstencils,ai_flop_per_byte,peak_flops,attainable_flops,max_abs_err,status,error";
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' || c == '\r' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string csv_row(const PerfRecord& r) {
  std::ostringstream out;
  out << to_string(r.mode) << ',' << to_string(r.pattern) << ',' << r.radius << ',' << r.grid_rows << ','
      << r.grid_cols << ',' << r.pe_rows << ',' << r.pe_cols << ',' << r.tile_h << ',' << r.tile_w << ','
      << r.iterations << ',' << r.cycles << ',' << num(r.cycles_per_iter) << ',' << num(r.seconds) << ','
      << num(r.gstencils) << ',' << num(r.ai_flop_per_byte) << ',' << num(r.peak_flops) << ','
      << num(r.attainable_flops) << ',' << num(r.max_abs_err) << ',' << quoted(r.status) << ','
      << quoted(r.error);
  return out.str();
}

void write_csv(std::ostream& out, const std::vector<PerfRecord>& records) {
  out << kCsvVersion << '\n' << csv_header() << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
}

std::pair<int, int> Experiment::grid_dims() const {
  if (grid_rows > 0 && grid_cols > 0) return {grid_rows, grid_cols};
  if (tile_h > 0 && tile_w > 0) return {pe_rows * tile_h, pe_cols * tile_w};
  throw ConfigError("either the grid size or the tile size must be given");
}

TileGeometry Experiment::geometry() const {
  const auto [rows, cols] = grid_dims();
  if (tile_h > 0 && tile_w > 0) {
    const TileGeometry g = TileGeometry::make(pe_rows, pe_cols, tile_h, tile_w, radius);
    if (rows > g.padded_rows() || cols > g.padded_cols()) {
      throw ConfigError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " exceeds " +
                        std::to_string(pe_rows) + "x" + std::to_string(pe_cols) + " tiles of " +
                        std::to_string(tile_h) + "x" + std::to_string(tile_w));
    }
    return g;
  }
  return geometry_for(GlobalGrid(rows, cols), pe_rows, pe_cols, radius);
}

Experiment experiment_from_config(const KeyValueConfig& cfg) {
  cfg.require_known({"pattern", "radius", "weights", "pe_rows", "pe_cols", "tile_h", "tile_w", "grid_rows",
                     "grid_cols", "iterations", "check_interval", "eps"});
  Experiment e;
  e.pattern = parse_shape(cfg.get_or("pattern", "star"));
  e.radius = cfg.get_int("radius", 1);
  e.weights = cfg.get_or("weights", "heat");
  e.pe_rows = cfg.get_int("pe_rows", 1);
  e.pe_cols = cfg.get_int("pe_cols", 1);
  e.tile_h = cfg.get_int("tile_h", 0);
  e.tile_w = cfg.get_int("tile_w", 0);
  e.grid_rows = cfg.get_int("grid_rows", 0);
  e.grid_cols = cfg.get_int("grid_cols", 0);
  e.iterations = cfg.get_int("iterations", 1);
  e.check_interval = cfg.get_int("check_interval", 0);
  if (cfg.has("eps")) e.eps = cfg.get_double("eps", 0.0);
  return e;
}

PerfRecord run_experiment(const Experiment& e, const std::optional<GlobalGrid>& initial, GlobalGrid* final_grid) {
  if (e.iterations < 1) throw ConfigError("iterations must be at least 1");
  const StencilKernel kernel = e.kernel();
  int rows = 0;
  int cols = 0;
  if (initial && e.grid_rows <= 0 && e.tile_h <= 0) {
    rows = initial->rows();
    cols = initial->cols();
  } else {
    std::tie(rows, cols) = e.grid_dims();
    if (initial && (initial->rows() != rows || initial->cols() != cols)) {
      throw ConfigError("input grid is " + std::to_string(initial->rows()) + "x" + std::to_string(initial->cols()) +
                        ", experiment expects " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  Experiment resolved = e;
  resolved.grid_rows = rows;
  resolved.grid_cols = cols;
  const TileGeometry geom = resolved.geometry();
  const GlobalGrid init = initial ? *initial : heat_init(rows, cols);

  PerfRecord rec;
  rec.mode = e.mode;
  rec.pattern = e.pattern;
  rec.radius = e.radius;
  rec.grid_rows = rows;
  rec.grid_cols = cols;
  rec.pe_rows = e.pe_rows;
  rec.pe_cols = e.pe_cols;
  rec.tile_h = geom.tile_h;
  rec.tile_w = geom.tile_w;
  rec.ai_flop_per_byte = arithmetic_intensity(kernel, e.count_accumulator_reads);
  rec.peak_flops = peak_flops(e.pe_rows, e.pe_cols, e.frequency_hz);
  const double bw = e.bandwidth ? *e.bandwidth : sram_bandwidth(e.pe_rows, e.pe_cols, e.frequency_hz);
  rec.attainable_flops = roofline_attainable(rec.ai_flop_per_byte, rec.peak_flops, bw);

  GlobalGrid out;
  switch (e.mode) {
    case Mode::Sim: {
      cstencil::RunOptions opt;
      opt.iterations = e.iterations;
      opt.check_interval = e.check_interval;
      opt.eps = e.eps;
      opt.sim = e.sim;
      opt.trace = e.trace;
      auto res = cstencil::run_iterations(init, kernel, geom, opt);
      out = std::move(res.grid);
      rec.iterations = res.iterations_run;
      rec.cycles = res.stats.cycles;
      rec.cycles_per_iter = static_cast<double>(rec.cycles) / rec.iterations;
      rec.seconds = static_cast<double>(rec.cycles) / e.frequency_hz;
      if (rec.seconds > 0.0) rec.gstencils = gstencils(rec.iterations, cols, rows, rec.seconds);
      if (e.verify) {
        const auto ref = oracle::jacobi_iterate(init, kernel, oracle::WeightOrder::compute_order(kernel), rec.iterations);
        rec.max_abs_err = oracle::max_abs_diff(out, ref);
      }
      break;
    }
    case Mode::Oracle: {
      out = oracle::jacobi_iterate(init, kernel, oracle::WeightOrder::compute_order(kernel), e.iterations);
      rec.iterations = e.iterations;
      break;
    }
    case Mode::S2R: {
      out = init;
      GlobalGrid ref = init;
      for (int t = 0; t < e.iterations; ++t) {
        out = s2r::s2r_full_pipeline(out, kernel, e.precision).grid;
        if (e.verify) ref = oracle::jacobi_step(ref, kernel);
      }
      rec.iterations = e.iterations;
      if (e.verify) rec.max_abs_err = oracle::max_abs_diff(out, ref);
      break;
    }
  }
  if (final_grid != nullptr) *final_grid = std::move(out);
  return rec;
}

SweepSpec sweep_from_config(const KeyValueConfig& cfg) {
  cfg.require_known({"pattern", "radius", "weights", "meshes", "tile_h", "tile_w", "iterations", "frequency",
                     "bandwidth", "elements_per_cycle", "verify", "parallel", "threads"});
  SweepSpec s;
  Experiment& e = s.base;
  e.pattern = parse_shape(cfg.get_or("pattern", "star"));
  e.radius = cfg.get_int("radius", 1);
  e.weights = cfg.get_or("weights", "heat");
  e.tile_h = cfg.get_int("tile_h", 64);
  e.tile_w = cfg.get_int("tile_w", 64);
  e.iterations = cfg.get_int("iterations", 5);
  e.frequency_hz = cfg.get_double("frequency", kNominalFrequencyHz);
  if (cfg.has("bandwidth")) e.bandwidth = cfg.get_double("bandwidth", 0.0);
  e.sim.elements_per_cycle = cfg.get_int("elements_per_cycle", 1);
  e.sim.threads = cfg.get_int("threads", 1);
  e.verify = cfg.get_int("verify", 1) != 0;
  s.parallel = cfg.get_int("parallel", 0) != 0;
  const std::string meshes = cfg.get_or("meshes", "");
  std::stringstream in(meshes);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) s.meshes.push_back(parse_dims(item, "mesh size"));
  }
  if (s.meshes.empty()) throw ConfigError("sweep needs at least one entry in 'meshes'");
  return s;
}

std::vector<PerfRecord> weak_scaling_sweep(const SweepSpec& spec) {
  auto run_one = [&spec](std::pair<int, int> mesh) {
    Experiment e = spec.base;
    e.mode = Mode::Sim;
    e.pe_rows = mesh.first;
    e.pe_cols = mesh.second;
    e.grid_rows = 0;
    e.grid_cols = 0;
    if (spec.parallel) e.sim.threads = 1;
    try {
      return run_experiment(e);
    } catch (const std::exception& ex) {
      PerfRecord rec;
      rec.mode = Mode::Sim;
      rec.pattern = e.pattern;
      rec.radius = e.radius;
      rec.pe_rows = e.pe_rows;
      rec.pe_cols = e.pe_cols;
      rec.tile_h = e.tile_h;
      rec.tile_w = e.tile_w;
      rec.grid_rows = e.pe_rows * e.tile_h;
      rec.grid_cols = e.pe_cols * e.tile_w;
      rec.iterations = e.iterations;
      rec.status = "error";
      rec.error = ex.what();
      return rec;
    }
  };
  std::vector<PerfRecord> out;
  out.reserve(spec.meshes.size());
  if (!spec.parallel) {
    for (const auto& m : spec.meshes) out.push_back(run_one(m));
    return out;
  }
  std::vector<std::future<PerfRecord>> jobs;
  jobs.reserve(spec.meshes.size());
  for (const auto& m : spec.meshes) jobs.push_back(std::async(std::launch::async, run_one, m));
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace wafermesh::perf
