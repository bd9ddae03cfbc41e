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

#include "wafermesh/cstencil.hpp"

#include <algorithm>
#include <string>

#include "wafermesh/error.hpp"
#include "wafermesh/oracle.hpp"

namespace wafermesh::cstencil {

namespace {

constexpr Color kEast[2] = {0, 1};
constexpr Color kWest[2] = {2, 3};
constexpr Color kNorth[2] = {4, 5};
constexpr Color kSouth[2] = {6, 7};

int parity(int v) { return ((v % 2) + 2) % 2; }

std::size_t side(Direction d) { return sim::index(d); }

}  // namespace

ColorLayout layout_for(PeCoord pe) {
  const int i = pe.row;
  const int j = pe.col;
  ColorLayout l;
  l.tx[side(Direction::East)] = kEast[parity(j)];
  l.tx[side(Direction::West)] = kWest[parity(j)];
  l.tx[side(Direction::North)] = kNorth[parity(i)];
  l.tx[side(Direction::South)] = kSouth[parity(i)];
  l.rx[side(Direction::West)] = kEast[parity(j - 1)];
  l.rx[side(Direction::East)] = kWest[parity(j + 1)];
  l.rx[side(Direction::North)] = kSouth[parity(i - 1)];
  l.rx[side(Direction::South)] = kNorth[parity(i + 1)];
  return l;
}

sim::RouteAssignment star_routes(const sim::Mesh& mesh) {
  sim::RouteAssignment out;
  for (int r = 0; r < mesh.rows(); ++r) {
    for (int c = 0; c < mesh.cols(); ++c) {
      const PeCoord at{r, c};
      const ColorLayout l = layout_for(at);
      sim::RouteConfig cfg;
      for (Direction d : sim::kCardinal) {
        if (!mesh.has_neighbour(at, d)) continue;
        cfg.set(l.tx_of(d), {Direction::Ramp}, {d});
        cfg.set(l.rx_of(d), {d}, {Direction::Ramp});
      }
      if (!cfg.empty()) out[at] = cfg;
    }
  }
  return out;
}

std::vector<ColorLayout> build_star_layout(sim::Mesh& mesh) {
  mesh.configure_routes(star_routes(mesh));
  std::vector<ColorLayout> layouts;
  layouts.reserve(mesh.pe_count());
  for (int r = 0; r < mesh.rows(); ++r) {
    for (int c = 0; c < mesh.cols(); ++c) layouts.push_back(layout_for({r, c}));
  }
  return layouts;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Idle: return "idle";
    case Stage::SideExchange: return "side_exchange";
    case Stage::CornerForwarding: return "corner_forwarding";
    case Stage::Compute: return "compute";
  }
  return "?";
}

HaloRegion send_edge(const TileGeometry& g, Direction d) {
  const int r = g.radius;
  switch (d) {
    case Direction::North: return {r, r, r, g.tile_w};
    case Direction::South: return {g.tile_h, r, r, g.tile_w};
    case Direction::East: return {r, g.tile_w, g.tile_h, r};
    case Direction::West: return {r, r, g.tile_h, r};
    case Direction::Ramp: break;
  }
  throw PreconditionError("no edge for the ramp");
}

HaloRegion recv_strip(const TileGeometry& g, Direction d) {
  const int r = g.radius;
  switch (d) {
    case Direction::North: return {0, r, r, g.tile_w};
    case Direction::South: return {r + g.tile_h, r, r, g.tile_w};
    case Direction::East: return {r, r + g.tile_w, g.tile_h, r};
    case Direction::West: return {r, 0, g.tile_h, r};
    case Direction::Ramp: break;
  }
  throw PreconditionError("no halo strip for the ramp");
}

HaloRegion forward_block(const TileGeometry& g, Direction d) {
  const int r = g.radius;
  switch (d) {
    case Direction::South: return {g.tile_h, r + g.tile_w, r, r};  // bottom of the E strip
    case Direction::West: return {r + g.tile_h, r, r, r};          // left of the S strip
    case Direction::North: return {r, 0, r, r};                    // top of the W strip
    case Direction::East: return {0, g.tile_w, r, r};              // right of the N strip
    case Direction::Ramp: break;
  }
  throw PreconditionError("no corner block for the ramp");
}

HaloRegion corner_slot(const TileGeometry& g, Direction d) {
  const int r = g.radius;
  switch (d) {
    case Direction::North: return {0, r + g.tile_w, r, r};              // NE
    case Direction::East: return {r + g.tile_h, r + g.tile_w, r, r};    // SE
    case Direction::South: return {r + g.tile_h, 0, r, r};              // SW
    case Direction::West: return {0, 0, r, r};                          // NW
    case Direction::Ramp: break;
  }
  throw PreconditionError("no corner slot for the ramp");
}

namespace {

/// Side whose strip supplies the block forwarded through `d`.
Direction forward_source(Direction d) {
  switch (d) {
    case Direction::South: return Direction::East;
    case Direction::West: return Direction::South;
    case Direction::North: return Direction::West;
    case Direction::East: return Direction::North;
    case Direction::Ramp: break;
  }
  return Direction::Ramp;
}

/// Second side needed for a corner arriving from `d` to exist.
Direction corner_partner(Direction d) {
  switch (d) {
    case Direction::North: return Direction::East;
    case Direction::East: return Direction::South;
    case Direction::South: return Direction::West;
    case Direction::West: return Direction::North;
    case Direction::Ramp: break;
  }
  return Direction::Ramp;
}

}  // namespace

bool forwards_on(const sim::Mesh& mesh, PeCoord pe, Direction d) {
  return mesh.has_neighbour(pe, d) && mesh.has_neighbour(pe, forward_source(d));
}

bool corner_from(const sim::Mesh& mesh, PeCoord pe, Direction d) {
  return mesh.has_neighbour(pe, d) && mesh.has_neighbour(pe, corner_partner(d));
}

Program::Program(sim::Mesh& mesh, StencilKernel kernel, TileGeometry geometry, ProgramOptions options)
    : mesh_(mesh), kernel_(std::move(kernel)), geometry_(geometry), options_(options) {
  if (geometry_.pe_rows != mesh_.rows() || geometry_.pe_cols != mesh_.cols()) {
    throw ConfigError("tile geometry is for a " + std::to_string(geometry_.pe_rows) + "x" +
                      std::to_string(geometry_.pe_cols) + " PE grid, mesh is " + std::to_string(mesh_.rows()) +
                      "x" + std::to_string(mesh_.cols()));
  }
  if (geometry_.radius != kernel_.radius()) {
    throw ConfigError("tile halo radius " + std::to_string(geometry_.radius) + " differs from kernel radius " +
                      std::to_string(kernel_.radius()));
  }
  TileGeometry::make(geometry_.pe_rows, geometry_.pe_cols, geometry_.tile_h, geometry_.tile_w, geometry_.radius);
  if (options_.valid_rows <= 0) options_.valid_rows = geometry_.padded_rows();
  if (options_.valid_cols <= 0) options_.valid_cols = geometry_.padded_cols();
  order_ = kernel_.compute_order();

  build_star_layout(mesh_);
  states_.resize(mesh_.pe_count());
  for (std::size_t i = 0; i < states_.size(); ++i) install(i);
}

void Program::install(std::size_t index) {
  PeState& s = states_[index];
  s.at = PeCoord{static_cast<int>(index) / mesh_.cols(), static_cast<int>(index) % mesh_.cols()};
  s.colors = layout_for(s.at);
  const bool box = kernel_.shape() == StencilShape::Box;
  for (Direction d : sim::kCardinal) {
    s.has[side(d)] = mesh_.has_neighbour(s.at, d);
    s.forward_out[side(d)] = box && forwards_on(mesh_, s.at, d);
    s.corner_in[side(d)] = box && corner_from(mesh_, s.at, d);
    s.expected_send[1] += s.has[side(d)] ? 1 : 0;
    s.expected_send[2] += s.forward_out[side(d)] ? 1 : 0;
    s.expected_recv[2] += s.corner_in[side(d)] ? 1 : 0;
  }
  s.expected_recv[1] = s.expected_send[1];
  s.valid_h = std::clamp(options_.valid_rows - s.at.row * geometry_.tile_h, 0, geometry_.tile_h);
  s.valid_w = std::clamp(options_.valid_cols - s.at.col * geometry_.tile_w, 0, geometry_.tile_w);

  sim::Pe& pe = mesh_.pe(s.at);
  s.buffer[0] = pe.allocate(geometry_.buffer_size());
  s.buffer[1] = pe.allocate(geometry_.buffer_size());

  using sim::TaskKind;
  pe.register_task(kStart, TaskKind::Local, [this, index](sim::TaskContext& ctx) { on_start(index, ctx); });
  pe.register_task(kCompute, TaskKind::Local, [this, index](sim::TaskContext& ctx) { on_compute(index, ctx); });
  for (Direction d : sim::kCardinal) {
    if (!s.has[side(d)]) continue;
    const auto k = static_cast<sim::TaskId>(side(d));
    pe.register_task(kSendDone + k, TaskKind::Local, [this, index, d](sim::TaskContext&) { on_send_done(index, d); });
    pe.register_task(kSentinel + k, TaskKind::Control,
                     [this, index, d](sim::TaskContext&) { on_sentinel(index, d); });
    pe.register_task(kRecv + k, TaskKind::Data, nullptr, s.colors.rx_of(d));
    bind_cursor(index, d);
  }
}

dsd::Dsd Program::region_dsd(const sim::Pe& pe, std::int64_t base, const HaloRegion& reg) const {
  const std::int64_t w = geometry_.buffer_cols();
  return pe.mem_dsd(base + reg.row0 * w + reg.col0, {{reg.rows, w}, {reg.cols, 1}});
}

Program::Cursor Program::next_cursor(const PeState& s, Direction d, Cursor c) const {
  if (c.stage == 1 && s.corner_in[side(d)]) return {c.iter, 2};
  return {c.iter + 1, 1};
}

void Program::bind_cursor(std::size_t index, Direction d) {
  PeState& s = states_[index];
  sim::Pe& pe = mesh_.pe(s.at);
  const Cursor c = s.cursor[side(d)];
  const HaloRegion reg = c.stage == 1 ? recv_strip(geometry_, d) : corner_slot(geometry_, d);
  pe.recv_into(s.colors.rx_of(d), region_dsd(pe, s.buffer[static_cast<std::size_t>(c.iter % 2)], reg));
}

void Program::load(const std::vector<Tile>& tiles) {
  if (tiles.size() != states_.size()) {
    throw PreconditionError("expected " + std::to_string(states_.size()) + " tiles, got " +
                            std::to_string(tiles.size()));
  }
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const Tile& t = tiles[i];
    PeState& s = states_[i];
    if (!(t.geometry == geometry_) || t.pe_row != s.at.row || t.pe_col != s.at.col) {
      throw PreconditionError("tile " + std::to_string(i) + " does not belong to PE (" +
                              std::to_string(s.at.row) + "," + std::to_string(s.at.col) + ")");
    }
    if (s.iter != s.target || s.iter != 0) throw PreconditionError("load must precede the first launch");
    auto mem = mesh_.pe(s.at).memory();
    std::copy(t.buffer.begin(), t.buffer.end(), mem.begin() + s.buffer[0]);
    std::fill_n(mem.begin() + s.buffer[1], geometry_.buffer_size(), 0.0f);
  }
}

void Program::launch(int iterations) {
  if (iterations < 1) throw PreconditionError("iteration count must be at least 1");
  for (PeState& s : states_) {
    const bool idle = s.iter == s.target;
    s.target += iterations;
    if (idle) mesh_.pe(s.at).activate(kStart);
  }
}

sim::CycleStats Program::run(std::uint64_t max_cycles) {
  sim::CycleStats stats = mesh_.run_until_quiescent(max_cycles);
  for (const PeState& s : states_) {
    if (s.iter != s.target) {
      throw IntegrityError("PE (" + std::to_string(s.at.row) + "," + std::to_string(s.at.col) +
                           ") stopped at iteration " + std::to_string(s.iter) + " of " +
                           std::to_string(s.target));
    }
  }
  return stats;
}

int Program::completed_iterations() const {
  int n = states_.empty() ? 0 : states_.front().iter;
  for (const PeState& s : states_) n = std::min(n, s.iter);
  return n;
}

const ColorLayout& Program::layout(PeCoord pe) const {
  return states_.at(static_cast<std::size_t>(pe.row) * mesh_.cols() + pe.col).colors;
}

SwapPhaseState Program::state(PeCoord pe) const {
  const PeState& s = states_.at(static_cast<std::size_t>(pe.row) * mesh_.cols() + pe.col);
  SwapPhaseState out;
  out.stage = s.stage;
  out.send_counter = s.sent;
  // Live counters of the stage in progress, or those seen at the barrier
  // that ended the last exchange.
  const bool exchanging = s.stage == Stage::SideExchange || s.stage == Stage::CornerForwarding;
  int stage = s.stage == Stage::SideExchange ? 1 : 2;
  if (!exchanging) stage = kernel_.shape() == StencilShape::Box ? 2 : 1;
  out.expected_send = s.expected_send[static_cast<std::size_t>(stage)];
  out.expected_recv = s.expected_recv[static_cast<std::size_t>(stage)];
  if (!exchanging) {
    out.recv_counter = s.passed_recv;
  } else if (auto it = s.received.find({s.iter, stage}); it != s.received.end()) {
    out.recv_counter = it->second;
  }
  return out;
}

void Program::on_start(std::size_t index, sim::TaskContext& ctx) {
  PeState& s = states_[index];
  sim::Pe& pe = ctx.pe();
  s.stage = Stage::SideExchange;
  s.sent = 0;
  const std::int64_t base = s.buffer[static_cast<std::size_t>(s.iter % 2)];
  if (mesh_.tracing()) pe.trace("stage_begin", "iter=" + std::to_string(s.iter) + ";stage=1");
  for (Direction d : sim::kCardinal) {
    if (!s.has[side(d)]) continue;
    const dsd::Dsd src = region_dsd(pe, base, send_edge(geometry_, d));
    pe.movs_async(src, dsd::Dsd::fabric_out(s.colors.tx_of(d), src.element_count()),
                  static_cast<sim::TaskId>(kSendDone + side(d)), "edge-" + std::string(sim::name(d)));
  }
  check_barrier(index);
}

void Program::launch_forwards(std::size_t index) {
  PeState& s = states_[index];
  sim::Pe& pe = mesh_.pe(s.at);
  const std::int64_t base = s.buffer[static_cast<std::size_t>(s.iter % 2)];
  if (mesh_.tracing()) pe.trace("stage_begin", "iter=" + std::to_string(s.iter) + ";stage=2");
  for (Direction d : sim::kCardinal) {
    if (!s.forward_out[side(d)]) continue;
    const dsd::Dsd src = region_dsd(pe, base, forward_block(geometry_, d));
    pe.movs_async(src, dsd::Dsd::fabric_out(s.colors.tx_of(d), src.element_count()),
                  static_cast<sim::TaskId>(kSendDone + side(d)), "corner-" + std::string(sim::name(d)));
  }
}

void Program::on_send_done(std::size_t index, Direction d) {
  PeState& s = states_[index];
  ++s.sent;
  mesh_.pe(s.at).send_control(s.colors.tx_of(d), static_cast<sim::TaskId>(kSentinel + side(sim::opposite(d))));
  check_barrier(index);
}

void Program::on_sentinel(std::size_t index, Direction d) {
  PeState& s = states_[index];
  Cursor& c = s.cursor[side(d)];
  ++s.received[{c.iter, c.stage}];
  c = next_cursor(s, d, c);
  bind_cursor(index, d);
  check_barrier(index);
}

void Program::check_barrier(std::size_t index) {
  PeState& s = states_[index];
  sim::Pe& pe = mesh_.pe(s.at);
  while (s.stage == Stage::SideExchange || s.stage == Stage::CornerForwarding) {
    const int stage = s.stage == Stage::SideExchange ? 1 : 2;
    const auto st = static_cast<std::size_t>(stage);
    const auto it = s.received.find({s.iter, stage});
    const int got = it == s.received.end() ? 0 : it->second;
    if (s.sent > s.expected_send[st] || got > s.expected_recv[st]) {
      throw IntegrityError("barrier counters overshot at iteration " + std::to_string(s.iter));
    }
    if (s.sent < s.expected_send[st] || got < s.expected_recv[st]) return;
    if (mesh_.tracing()) {
      pe.trace("barrier", "iter=" + std::to_string(s.iter) + ";stage=" + std::to_string(stage) +
                              ";sent=" + std::to_string(s.sent) + "/" + std::to_string(s.expected_send[st]) +
                              ";recv=" + std::to_string(got) + "/" + std::to_string(s.expected_recv[st]));
    }
    s.passed_recv = got;
    if (stage == 1 && kernel_.shape() == StencilShape::Box) {
      s.stage = Stage::CornerForwarding;
      s.sent = 0;
      launch_forwards(index);
      continue;
    }
    s.stage = Stage::Compute;
    pe.activate(kCompute);
  }
}

void Program::on_compute(std::size_t index, sim::TaskContext& ctx) {
  PeState& s = states_[index];
  sim::Pe& pe = ctx.pe();
  if (s.stage != Stage::Compute) {
    throw IntegrityError("compute started before the halo barrier at iteration " + std::to_string(s.iter));
  }
  if (mesh_.tracing()) pe.trace("compute_begin", "iter=" + std::to_string(s.iter));
  const int r = geometry_.radius;
  const std::int64_t w = geometry_.buffer_cols();
  const std::int64_t in = s.buffer[static_cast<std::size_t>(s.iter % 2)];
  const std::int64_t out = s.buffer[static_cast<std::size_t>((s.iter + 1) % 2)];
  if (s.valid_h > 0 && s.valid_w > 0) {
    const dsd::Dsd dest = pe.mem_dsd(out + r * w + r, {{s.valid_h, w}, {s.valid_w, 1}});
    const dsd::Dsd centre = pe.mem_dsd(in + r * w + r, {{s.valid_h, w}, {s.valid_w, 1}});
    ctx.fmuls(dest, centre, kernel_.weight(order_.front()));
    for (std::size_t k = 1; k < order_.size(); ++k) {
      ctx.fmacs(dest, dsd::shift(centre, order_[k].dy, order_[k].dx, w), kernel_.weight(order_[k]));
    }
  }
  s.received.erase(s.received.lower_bound({s.iter, 0}), s.received.lower_bound({s.iter + 1, 0}));
  ++s.iter;
  if (s.iter < s.target) {
    pe.activate(kStart);
  } else {
    s.stage = Stage::Idle;
  }
}

std::vector<Tile> Program::tiles() const {
  std::vector<Tile> out;
  out.reserve(states_.size());
  for (const PeState& s : states_) {
    Tile t{geometry_, s.at.row, s.at.col, {}};
    const auto mem = mesh_.pe(s.at.row, s.at.col).memory();
    const auto base = mem.begin() + s.buffer[static_cast<std::size_t>(s.iter % 2)];
    t.buffer.assign(base, base + static_cast<std::ptrdiff_t>(geometry_.buffer_size()));
    out.push_back(std::move(t));
  }
  return out;
}

GlobalGrid Program::padded_grid() const {
  const auto t = tiles();
  return reassemble(t, geometry_.padded_rows(), geometry_.padded_cols());
}

std::uint64_t Program::cycle_budget(int iterations) const {
  const std::uint64_t p = order_.size();
  const std::uint64_t cells = geometry_.buffer_size();
  const std::uint64_t per_iter = p * cells + 8 * cells + 256;
  return static_cast<std::uint64_t>(iterations) * per_iter * 4 + 4096;
}

RunResult run_iterations(const GlobalGrid& grid, const StencilKernel& kernel, const TileGeometry& geometry,
                         const RunOptions& options) {
  if (options.iterations < 1) throw PreconditionError("iteration count must be at least 1");
  if (options.check_interval < 0) throw PreconditionError("check interval must be non-negative");
  if (grid.rows() > geometry.padded_rows() || grid.cols() > geometry.padded_cols()) {
    throw PreconditionError("grid " + std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()) +
                            " does not fit the PE grid of tiles");
  }
  GlobalGrid padded(geometry.padded_rows(), geometry.padded_cols(), 0.0f);
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) padded.at(r, c) = grid.at(r, c);
  }

  sim::Mesh mesh(geometry.pe_rows, geometry.pe_cols, options.sim);
  mesh.set_trace(options.trace);
  Program program(mesh, kernel, geometry, ProgramOptions{grid.rows(), grid.cols()});
  program.load(partition(padded, geometry));

  RunResult result;
  const int chunk = options.eps && options.check_interval > 0 ? options.check_interval : options.iterations;
  GlobalGrid previous = grid;
  while (result.iterations_run < options.iterations) {
    const int n = std::min(chunk, options.iterations - result.iterations_run);
    program.launch(n);
    result.stats += program.run(program.cycle_budget(n));
    result.iterations_run += n;
    if (options.eps) {
      GlobalGrid current = reassemble(program.tiles(), grid.rows(), grid.cols());
      const double change = oracle::max_abs_diff(current, previous);
      result.last_change = change;
      if (change < *options.eps) {
        result.converged = true;
        break;
      }
      previous = std::move(current);
    }
  }
  result.grid = reassemble(program.tiles(), grid.rows(), grid.cols());
  return result;
}

RunResult run_iterations(const GlobalGrid& grid, const StencilKernel& kernel, int pe_rows, int pe_cols,
                         const RunOptions& options) {
  return run_iterations(grid, kernel, geometry_for(grid, pe_rows, pe_cols, kernel.radius()), options);
}

}  // namespace wafermesh::cstencil
