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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "wafermesh/core_model.hpp"
#include "wafermesh/mesh.hpp"

namespace wafermesh::cstencil {

using sim::Direction;
using sim::PeCoord;

/// Transmit and receive colors of one PE, indexed by Direction (N, S, E, W).
/// Colors alternate with row/column parity: a PE's tx color toward a
/// neighbour is that neighbour's rx color from the opposite side.
struct ColorLayout {
  std::array<Color, 4> tx{};
  std::array<Color, 4> rx{};

  Color tx_of(Direction d) const { return tx[sim::index(d)]; }
  Color rx_of(Direction d) const { return rx[sim::index(d)]; }
  bool operator==(const ColorLayout&) const = default;
};

/// Checkerboard assignment over the 8 halo colors (ids 0-7).
ColorLayout layout_for(PeCoord pe);

/// One-hop routes for every tx/rx color that has a neighbour on that side.
sim::RouteAssignment star_routes(const sim::Mesh& mesh);

/// Installs star_routes and returns each PE's layout in row-major order.
std::vector<ColorLayout> build_star_layout(sim::Mesh& mesh);

enum class Stage { Idle, SideExchange, CornerForwarding, Compute };

std::string_view to_string(Stage s);

/// Barrier bookkeeping of the stage a PE is in (or last passed).
struct SwapPhaseState {
  int send_counter = 0;
  int recv_counter = 0;
  int expected_send = 0;
  int expected_recv = 0;
  Stage stage = Stage::Idle;
};

/// Edge and corner block layout of the halo buffer, as offsets relative
/// to the buffer base.
struct HaloRegion {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Interior strip sent on side `d` during the side exchange.
HaloRegion send_edge(const TileGeometry& g, Direction d);
/// Halo strip filled from side `d` during the side exchange.
HaloRegion recv_strip(const TileGeometry& g, Direction d);
/// Corner block forwarded out through side `d` during corner forwarding,
/// cut from the halo strip received on the rotationally adjacent side.
HaloRegion forward_block(const TileGeometry& g, Direction d);
/// Diagonal halo corner filled by a forward arriving from side `d`.
HaloRegion corner_slot(const TileGeometry& g, Direction d);

/// Whether a PE forwards a corner out through `d` / receives one from `d`.
bool forwards_on(const sim::Mesh& mesh, PeCoord pe, Direction d);
bool corner_from(const sim::Mesh& mesh, PeCoord pe, Direction d);

struct ProgramOptions {
  /// Cells outside [0, valid_rows) x [0, valid_cols) of the padded grid are
  /// never updated, so padding stays zero. Zero means "whole padded grid".
  int valid_rows = 0;
  int valid_cols = 0;
};

/// CStencil on a mesh: per PE two halo buffers, the halo swap task graph,
/// the counter barrier and the shifted-DSD update.
class Program {
 public:
  // Task ids shared by every PE.
  static constexpr sim::TaskId kStart = 0;
  static constexpr sim::TaskId kSendDone = 1;  // + side index
  static constexpr sim::TaskId kSentinel = 5;  // + side index
  static constexpr sim::TaskId kRecv = 9;      // + side index
  static constexpr sim::TaskId kCompute = 13;

  Program(sim::Mesh& mesh, StencilKernel kernel, TileGeometry geometry, ProgramOptions options = {});
  Program(const Program&) = delete;
  Program& operator=(const Program&) = delete;

  /// Copies tiles (row-major PE order, halo ring included) into buffer 0.
  void load(const std::vector<Tile>& tiles);
  /// Schedules `iterations` more iterations; call run() to execute them.
  void launch(int iterations);
  /// Runs the mesh until all launched iterations are done.
  sim::CycleStats run(std::uint64_t max_cycles);

  int completed_iterations() const;
  const StencilKernel& kernel() const { return kernel_; }
  const TileGeometry& geometry() const { return geometry_; }
  sim::Mesh& mesh() { return mesh_; }
  const ColorLayout& layout(PeCoord pe) const;
  SwapPhaseState state(PeCoord pe) const;

  /// Tiles holding the latest iterate, halo ring included.
  std::vector<Tile> tiles() const;
  /// Latest iterate over the padded grid.
  GlobalGrid padded_grid() const;

  /// Safe cycle budget for `iterations` iterations.
  std::uint64_t cycle_budget(int iterations) const;

 private:
  struct Cursor {
    int iter = 0;
    int stage = 1;
  };

  struct PeState {
    PeCoord at;
    ColorLayout colors;
    std::array<bool, 4> has{};
    std::array<bool, 4> forward_out{};
    std::array<bool, 4> corner_in{};
    std::array<std::int64_t, 2> buffer{};
    int iter = 0;
    int target = 0;
    Stage stage = Stage::Idle;
    int sent = 0;
    std::array<int, 3> expected_send{};  // by stage number
    std::array<int, 3> expected_recv{};
    std::map<std::pair<int, int>, int> received;  // (iteration, stage) -> sentinels
    int passed_recv = 0;                          // sentinels counted at the last barrier
    std::array<Cursor, 4> cursor{};
    int valid_h = 0;
    int valid_w = 0;
  };

  void install(std::size_t index);
  void on_start(std::size_t index, sim::TaskContext& ctx);
  void on_send_done(std::size_t index, Direction d);
  void on_sentinel(std::size_t index, Direction d);
  void on_compute(std::size_t index, sim::TaskContext& ctx);
  void check_barrier(std::size_t index);
  void launch_forwards(std::size_t index);
  void bind_cursor(std::size_t index, Direction d);
  Cursor next_cursor(const PeState& s, Direction d, Cursor c) const;
  dsd::Dsd region_dsd(const sim::Pe& pe, std::int64_t base, const HaloRegion& reg) const;

  sim::Mesh& mesh_;
  StencilKernel kernel_;
  TileGeometry geometry_;
  ProgramOptions options_;
  std::vector<Offset> order_;
  std::vector<PeState> states_;
};

struct RunOptions {
  int iterations = 1;
  int check_interval = 0;      // 0: no convergence checks
  std::optional<double> eps;   // stop once the L-inf change between checks is below eps
  sim::SimConfig sim;          // mesh parameters (threads, costs, memory)
  std::ostream* trace = nullptr;
};

struct RunResult {
  GlobalGrid grid;  // original (unpadded) dimensions
  sim::CycleStats stats;
  int iterations_run = 0;
  bool converged = false;
  std::optional<double> last_change;  // L-inf change seen by the last check
};

/// Pads, partitions, runs `iterations` on a fresh mesh and reassembles.
RunResult run_iterations(const GlobalGrid& grid, const StencilKernel& kernel, const TileGeometry& geometry,
                         const RunOptions& options);

/// As above with the tile size derived from the grid and PE grid.
RunResult run_iterations(const GlobalGrid& grid, const StencilKernel& kernel, int pe_rows, int pe_cols,
                         const RunOptions& options);

}  // namespace wafermesh::cstencil
