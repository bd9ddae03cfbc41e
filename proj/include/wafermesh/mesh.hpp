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
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wafermesh/dsd.hpp"

namespace wafermesh::sim {

enum class Direction : std::uint8_t { North = 0, South = 1, East = 2, West = 3, Ramp = 4 };

inline constexpr std::array<Direction, 4> kCardinal = {Direction::North, Direction::South,
                                                       Direction::East, Direction::West};

Direction opposite(Direction d);
std::string_view name(Direction d);
constexpr std::uint8_t bit(Direction d) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(d)); }
constexpr std::size_t index(Direction d) { return static_cast<std::size_t>(d); }

struct PeCoord {
  int row = 0;
  int col = 0;

  auto operator<=>(const PeCoord&) const = default;
};

/// PE one hop away in `d` (may fall outside the mesh).
PeCoord neighbour(PeCoord at, Direction d);

/// 32-bit fabric message. Control wavelets carry a control-task id in the
/// low byte of the payload.
struct Wavelet {
  std::uint32_t payload = 0;
  Color color = 0;
  bool control = false;
  std::uint64_t ready = 0;  // first cycle it may cross the next link
};

using TaskId = std::uint8_t;
enum class TaskKind { Data, Local, Control };

/// Per-color router entry: wavelets arriving from any input direction are
/// copied to every output direction.
struct ColorRoute {
  std::uint8_t inputs = 0;
  std::uint8_t outputs = 0;

  bool operator==(const ColorRoute&) const = default;
};

class RouteConfig {
 public:
  RouteConfig& set(Color color, std::initializer_list<Direction> inputs,
                   std::initializer_list<Direction> outputs);
  RouteConfig& set_masks(Color color, std::uint8_t inputs, std::uint8_t outputs);

  const std::map<Color, ColorRoute>& routes() const { return routes_; }
  bool empty() const { return routes_.empty(); }

 private:
  std::map<Color, ColorRoute> routes_;
};

using RouteAssignment = std::map<PeCoord, RouteConfig>;

/// Machine parameters. Defaults model one WSE-3 PE as used by the stencil
/// kernels; see README for the cost model.
struct SimConfig {
  std::size_t memory_budget_words = 12288;  // 48 KB
  int elements_per_cycle = 1;               // vector op throughput
  int hop_latency = 1;
  int link_queue_depth = 4;  // per color per output direction
  int microthread_slots = 6;
  int num_colors = 24;
  int max_tasks = 64;
  int task_overhead_cycles = 0;  // charged to every task on top of its vector ops
  int threads = 1;               // host threads used by step()
};

struct LinkCount {
  std::uint64_t data = 0;
  std::uint64_t control = 0;

  bool operator==(const LinkCount&) const = default;
};

struct CycleStats {
  std::uint64_t cycles = 0;
  /// Wavelets that left PE `first` through cardinal link `second`.
  std::map<std::pair<PeCoord, Direction>, LinkCount> wavelets_per_link;
  std::uint64_t compute_element_ops = 0;
  std::uint64_t stall_cycles = 0;
  std::uint64_t tasks_run = 0;
  std::uint64_t wavelets_injected = 0;
  std::uint64_t wavelets_consumed = 0;

  LinkCount link(PeCoord pe, Direction d) const;
  /// Data wavelets leaving `pe` over all four links.
  std::uint64_t data_out(PeCoord pe) const;
  CycleStats& operator+=(const CycleStats& other);
  bool operator==(const CycleStats&) const = default;
};

class Pe;

/// Handed to a task handler while it runs. Vector ops issued here are
/// charged to the task, which then occupies the CE for that many cycles.
class TaskContext {
 public:
  TaskContext(Pe& pe, TaskId task, std::optional<Wavelet> wavelet)
      : pe_(pe), task_(task), wavelet_(wavelet) {}

  Pe& pe() { return pe_; }
  TaskId task() const { return task_; }
  bool has_payload() const { return wavelet_.has_value(); }
  std::uint32_t payload() const;
  float payload_f32() const;

  void fmuls(const dsd::Dsd& dest, const dsd::Dsd& src, float scalar);
  void fmacs(const dsd::Dsd& dest, const dsd::Dsd& src, float scalar);
  void charge(std::uint64_t cycles) { cost_ += cycles; }
  std::uint64_t cost() const { return cost_; }

 private:
  Pe& pe_;
  TaskId task_;
  std::optional<Wavelet> wavelet_;
  std::uint64_t cost_ = 0;
};

using TaskHandler = std::function<void(TaskContext&)>;

struct MicrothreadHandle {
  int slot = -1;  // -1 when the transfer completed immediately
};

namespace detail {
struct PeRuntime;
class MeshAccess;
}  // namespace detail

/// One processing element: local memory, router state, task table,
/// activation queue and microthread slots. Created by Mesh.
class Pe {
 public:
  Pe(PeCoord coord, const SimConfig* config, const std::uint64_t* clock);
  Pe(Pe&&) noexcept;
  Pe& operator=(Pe&&) noexcept;
  ~Pe();

  PeCoord coord() const { return coord_; }
  std::uint64_t now() const { return *clock_; }
  const SimConfig& config() const { return *config_; }

  // Memory.
  /// Reserves `words` zeroed words and returns their base offset.
  std::int64_t allocate(std::size_t words);
  std::span<float> memory();
  std::span<const float> memory() const;
  dsd::Dsd mem_dsd(std::int64_t base, std::initializer_list<dsd::Dim> dims) const;

  // Tasks.
  void register_task(TaskId id, TaskKind kind, TaskHandler handler,
                     std::optional<Color> data_color = std::nullopt);
  void activate(TaskId id);
  void block(TaskId id);
  void unblock(TaskId id);
  bool is_registered(TaskId id) const;
  bool is_queued(TaskId id) const;

  // Fabric.
  /// Starts an asynchronous transfer on a free microthread: memory ->
  /// FabricOut streams wavelets, FabricIn -> memory drains them. Once the
  /// last element moves, `on_complete` is activated.
  MicrothreadHandle movs_async(const dsd::Dsd& src, const dsd::Dsd& dst,
                               std::optional<TaskId> on_complete, std::string label = {});
  /// Routes data wavelets on `color` into `dest`, in dest's iteration order.
  /// The color's data task stores each payload before its handler runs.
  void recv_into(Color color, const dsd::Dsd& dest);
  /// Queues one wavelet behind anything already sent on the color.
  void send_data(Color color, std::uint32_t payload);
  void send_control(Color color, TaskId control_task);

  int active_microthreads() const;
  bool route_installed(Color color) const;

  /// Appends a trace event (only when tracing is enabled on the mesh).
  void trace(std::string_view event, std::string_view detail);

 private:
  friend class detail::MeshAccess;
  friend class TaskContext;

  detail::PeRuntime& rt();
  const detail::PeRuntime* rt_if() const { return rt_.get(); }

  PeCoord coord_;
  const SimConfig* config_;
  const std::uint64_t* clock_;
  std::unique_ptr<detail::PeRuntime> rt_;
};

class WorkerPoolHandle;

/// Deterministic cycle-approximate model of a 2D PE mesh.
///
/// One cycle runs: (1) link transport, at most one wavelet per output link,
/// picked round-robin over colors and subject to downstream queue space;
/// (2) per PE, ramp dispatch of arrived wavelets to their tasks, then either
/// one cycle of the running task, or the eligible task chain followed by
/// one element of every live microthread; (3) draining of queued single
/// wavelet sends. Evaluation is two-phase so results do not depend on the
/// number of host threads.
class Mesh {
 public:
  Mesh(int pe_rows, int pe_cols, SimConfig config = {});
  ~Mesh();
  Mesh(const Mesh&) = delete;
  Mesh& operator=(const Mesh&) = delete;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t pe_count() const { return pes_.size(); }
  const SimConfig& config() const { return config_; }
  std::uint64_t cycle() const { return clock_; }

  Pe& pe(int row, int col);
  Pe& pe(PeCoord c) { return pe(c.row, c.col); }
  const Pe& pe(int row, int col) const;
  bool contains(PeCoord c) const;
  bool has_neighbour(PeCoord c, Direction d) const;
  int neighbour_count(PeCoord c) const;

  /// Installs static routes. Must happen before the first step.
  void configure_routes(const RouteAssignment& assignments);

  /// Advances one cycle; returns what happened during it.
  CycleStats step();
  /// Steps until nothing is queued, running, or in flight.
  CycleStats run_until_quiescent(std::uint64_t max_cycles);
  bool quiescent() const;

  /// Totals since construction.
  CycleStats stats() const;
  /// Wavelets currently held in router queues.
  std::uint64_t in_flight() const;

  void set_trace(std::ostream* out) { trace_ = out; }
  bool tracing() const { return trace_ != nullptr; }
  void set_threads(int threads);

  /// Per-PE description of anything that is not idle.
  std::string snapshot() const;

 private:
  void advance();
  void link_select(std::size_t index);
  void link_apply(std::size_t index);
  void compute(std::size_t index);
  void for_all(void (Mesh::*fn)(std::size_t));
  void rethrow_pending();
  void flush_trace();

  int rows_;
  int cols_;
  SimConfig config_;
  std::uint64_t clock_ = 0;
  std::vector<Pe> pes_;
  bool started_ = false;
  std::ostream* trace_ = nullptr;
  std::unique_ptr<WorkerPoolHandle> pool_;
};

/// build_mesh(pe_rows, pe_cols, memory_budget_words).
Mesh build_mesh(int pe_rows, int pe_cols, std::size_t memory_budget_words = 12288);

}  // namespace wafermesh::sim
