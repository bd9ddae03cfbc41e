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

#include "wafermesh/mesh.hpp"

#include <algorithm>
#include <bit>
#include <exception>
#include <limits>
#include <sstream>

#include "wafermesh/error.hpp"
#include "worker_pool.hpp"

namespace wafermesh::sim {

class WorkerPoolHandle : public wafermesh::detail::WorkerPool {
 public:
  using WorkerPool::WorkerPool;
};

Direction opposite(Direction d) {
  switch (d) {
    case Direction::North: return Direction::South;
    case Direction::South: return Direction::North;
    case Direction::East: return Direction::West;
    case Direction::West: return Direction::East;
    case Direction::Ramp: return Direction::Ramp;
  }
  return Direction::Ramp;
}

std::string_view name(Direction d) {
  switch (d) {
    case Direction::North: return "N";
    case Direction::South: return "S";
    case Direction::East: return "E";
    case Direction::West: return "W";
    case Direction::Ramp: return "R";
  }
  return "?";
}

PeCoord neighbour(PeCoord at, Direction d) {
  switch (d) {
    case Direction::North: return {at.row - 1, at.col};
    case Direction::South: return {at.row + 1, at.col};
    case Direction::East: return {at.row, at.col + 1};
    case Direction::West: return {at.row, at.col - 1};
    case Direction::Ramp: return at;
  }
  return at;
}

namespace {

std::uint8_t mask_of(std::initializer_list<Direction> dirs) {
  std::uint8_t m = 0;
  for (Direction d : dirs) m = static_cast<std::uint8_t>(m | bit(d));
  return m;
}

std::string coord_str(PeCoord c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

}  // namespace

RouteConfig& RouteConfig::set(Color color, std::initializer_list<Direction> inputs,
                              std::initializer_list<Direction> outputs) {
  return set_masks(color, mask_of(inputs), mask_of(outputs));
}

RouteConfig& RouteConfig::set_masks(Color color, std::uint8_t inputs, std::uint8_t outputs) {
  if (inputs == 0 || outputs == 0) {
    throw ConfigError("color " + std::to_string(color) + ": route needs inputs and outputs");
  }
  if ((inputs | outputs) >= (1u << 5)) {
    throw ConfigError("color " + std::to_string(color) + ": invalid direction mask");
  }
  if ((inputs & outputs) != 0) {
    throw ConfigError("color " + std::to_string(color) +
                      ": route sends a wavelet back out the direction it arrived from");
  }
  routes_[color] = ColorRoute{inputs, outputs};
  return *this;
}

LinkCount CycleStats::link(PeCoord pe, Direction d) const {
  auto it = wavelets_per_link.find({pe, d});
  return it == wavelets_per_link.end() ? LinkCount{} : it->second;
}

std::uint64_t CycleStats::data_out(PeCoord pe) const {
  std::uint64_t n = 0;
  for (Direction d : kCardinal) n += link(pe, d).data;
  return n;
}

CycleStats& CycleStats::operator+=(const CycleStats& o) {
  cycles += o.cycles;
  for (const auto& [key, count] : o.wavelets_per_link) {
    auto& mine = wavelets_per_link[key];
    mine.data += count.data;
    mine.control += count.control;
  }
  compute_element_ops += o.compute_element_ops;
  stall_cycles += o.stall_cycles;
  tasks_run += o.tasks_run;
  wavelets_injected += o.wavelets_injected;
  wavelets_consumed += o.wavelets_consumed;
  return *this;
}

namespace {

CycleStats difference(const CycleStats& after, const CycleStats& before) {
  CycleStats d;
  d.cycles = after.cycles - before.cycles;
  for (const auto& [key, count] : after.wavelets_per_link) {
    const LinkCount prev = before.link(key.first, key.second);
    const LinkCount delta{count.data - prev.data, count.control - prev.control};
    if (delta.data != 0 || delta.control != 0) d.wavelets_per_link[key] = delta;
  }
  d.compute_element_ops = after.compute_element_ops - before.compute_element_ops;
  d.stall_cycles = after.stall_cycles - before.stall_cycles;
  d.tasks_run = after.tasks_run - before.tasks_run;
  d.wavelets_injected = after.wavelets_injected - before.wavelets_injected;
  d.wavelets_consumed = after.wavelets_consumed - before.wavelets_consumed;
  return d;
}

}  // namespace

namespace detail {

struct Port {
  Color color = 0;
  Direction dir = Direction::Ramp;
  std::vector<Wavelet> ring;
  std::size_t head = 0;
  std::size_t size = 0;
  int reserved = 0;
  bool head_dispatched = false;

  const Wavelet& front() const { return ring[head]; }
  void pop() {
    head = (head + 1) % ring.size();
    --size;
    head_dispatched = false;
  }
  void push(const Wavelet& w) {
    ring[(head + size) % ring.size()] = w;
    ++size;
  }
  bool has_room(int depth) const { return static_cast<int>(size) + reserved < depth; }
};

struct Task {
  bool registered = false;
  TaskKind kind = TaskKind::Local;
  TaskHandler handler;
  std::optional<Color> color;
  bool blocked = false;
  bool queued = false;
  std::uint64_t last_run = kNever;
};

struct RecvSink {
  bool bound = false;
  dsd::Dsd dest;
  std::size_t next = 0;
};

struct Microthread {
  bool active = false;
  bool sending = false;
  Color color = 0;
  dsd::Dsd mem;
  std::size_t done = 0;
  std::size_t total = 0;
  std::optional<TaskId> on_complete;
  std::string label;
};

struct LinkDecision {
  bool valid = false;
  std::int16_t src_port = -1;
  Wavelet wavelet;
};

struct PeRuntime {
  explicit PeRuntime(const SimConfig& cfg)
      : routes(static_cast<std::size_t>(cfg.num_colors)),
        port_of(static_cast<std::size_t>(cfg.num_colors)),
        tasks(static_cast<std::size_t>(cfg.max_tasks)),
        data_task_of_color(static_cast<std::size_t>(cfg.num_colors)),
        slots(static_cast<std::size_t>(cfg.microthread_slots)),
        sinks(static_cast<std::size_t>(cfg.num_colors)) {
    for (auto& p : port_of) p.fill(-1);
  }

  std::vector<float> memory;
  std::vector<ColorRoute> routes;
  std::vector<std::array<std::int16_t, 5>> port_of;
  std::vector<Port> ports;
  std::array<std::vector<std::int16_t>, 5> ports_by_dir;
  std::array<std::size_t, 4> rr{};
  std::array<LinkDecision, 4> incoming;

  std::vector<Task> tasks;
  std::vector<std::optional<TaskId>> data_task_of_color;
  std::vector<TaskId> queue;
  std::optional<TaskId> running;
  std::uint64_t running_left = 0;
  std::vector<Microthread> slots;
  std::vector<RecvSink> sinks;
  std::vector<Wavelet> egress;

  std::array<LinkCount, 4> link_out{};
  std::uint64_t compute_ops = 0;
  std::uint64_t stalls = 0;
  std::uint64_t tasks_run = 0;
  std::uint64_t injected = 0;
  std::uint64_t consumed = 0;

  bool tracing = false;
  std::vector<std::string> trace_lines;
  std::exception_ptr error;

  int active_mt() const {
    int n = 0;
    for (const auto& m : slots) n += m.active ? 1 : 0;
    return n;
  }
  bool idle() const {
    if (!queue.empty() || running_left > 0 || active_mt() > 0 || !egress.empty()) return false;
    for (const auto& p : ports) {
      if (p.size > 0) return false;
    }
    return true;
  }
  bool has_routes() const { return !ports.empty(); }
};

/// Internal window onto Pe state used by the Mesh phases.
class MeshAccess {
 public:
  static PeRuntime* rt(Pe& pe) { return pe.rt_.get(); }
  static const PeRuntime* rt(const Pe& pe) { return pe.rt_.get(); }
  static PeRuntime& ensure(Pe& pe) { return pe.rt(); }
};

}  // namespace detail

using detail::MeshAccess;
using detail::PeRuntime;
using detail::Port;

namespace {

/// Copies `w` into every output port of its color; false if any lacks room.
bool try_inject(PeRuntime& rt, const SimConfig& cfg, const Wavelet& w, std::uint64_t now) {
  const auto& route = rt.routes[w.color];
  const auto& slots = rt.port_of[w.color];
  for (std::size_t d = 0; d < 5; ++d) {
    if ((route.outputs & (1u << d)) == 0) continue;
    if (!rt.ports[static_cast<std::size_t>(slots[d])].has_room(cfg.link_queue_depth)) return false;
  }
  Wavelet copy = w;
  copy.ready = now + 1;
  for (std::size_t d = 0; d < 5; ++d) {
    if ((route.outputs & (1u << d)) == 0) continue;
    rt.ports[static_cast<std::size_t>(slots[d])].push(copy);
    ++rt.injected;
  }
  return true;
}

void require_ramp_route(const PeRuntime* rt, Color color, PeCoord at) {
  if (rt == nullptr || color >= rt->routes.size() || (rt->routes[color].inputs & bit(Direction::Ramp)) == 0) {
    throw ConfigError("PE " + coord_str(at) + ": color " + std::to_string(color) +
                      " has no route from the ramp");
  }
}

}  // namespace

// TaskContext

std::uint32_t TaskContext::payload() const {
  if (!wavelet_) throw PreconditionError("task has no wavelet payload");
  return wavelet_->payload;
}

float TaskContext::payload_f32() const { return std::bit_cast<float>(payload()); }

void TaskContext::fmuls(const dsd::Dsd& dest, const dsd::Dsd& src, float scalar) {
  const std::size_t n = dsd::fmuls(pe_.memory(), dest, src, scalar);
  pe_.rt().compute_ops += n;
  cost_ += dsd::vector_op_cycles(n, pe_.config().elements_per_cycle);
}

void TaskContext::fmacs(const dsd::Dsd& dest, const dsd::Dsd& src, float scalar) {
  const std::size_t n = dsd::fmacs(pe_.memory(), dest, src, scalar);
  pe_.rt().compute_ops += n;
  cost_ += dsd::vector_op_cycles(n, pe_.config().elements_per_cycle);
}

// Pe

Pe::Pe(PeCoord coord, const SimConfig* config, const std::uint64_t* clock)
    : coord_(coord), config_(config), clock_(clock) {}
Pe::Pe(Pe&&) noexcept = default;
Pe& Pe::operator=(Pe&&) noexcept = default;
Pe::~Pe() = default;

detail::PeRuntime& Pe::rt() {
  if (!rt_) rt_ = std::make_unique<detail::PeRuntime>(*config_);
  return *rt_;
}

std::int64_t Pe::allocate(std::size_t words) {
  auto& r = rt();
  if (r.memory.size() + words > config_->memory_budget_words) {
    throw ResourceError("PE " + coord_str(coord_) + ": allocation of " + std::to_string(words) +
                        " words exceeds the " + std::to_string(config_->memory_budget_words) +
                        "-word memory budget (" + std::to_string(r.memory.size()) + " in use)");
  }
  const auto base = static_cast<std::int64_t>(r.memory.size());
  r.memory.resize(r.memory.size() + words, 0.0f);
  return base;
}

std::span<float> Pe::memory() {
  if (!rt_) return {};
  return rt_->memory;
}

std::span<const float> Pe::memory() const {
  if (!rt_) return {};
  return rt_->memory;
}

dsd::Dsd Pe::mem_dsd(std::int64_t base, std::initializer_list<dsd::Dim> dims) const {
  return dsd::Dsd::memory(memory().size(), base, dims);
}

void Pe::register_task(TaskId id, TaskKind kind, TaskHandler handler, std::optional<Color> data_color) {
  auto& r = rt();
  if (id >= r.tasks.size()) {
    throw RegistrationError("task id " + std::to_string(id) + " out of range");
  }
  auto& t = r.tasks[id];
  if (t.registered) {
    throw RegistrationError("PE " + coord_str(coord_) + ": task id " + std::to_string(id) +
                            " already registered");
  }
  if (kind == TaskKind::Data) {
    if (!data_color || *data_color >= r.data_task_of_color.size()) {
      throw RegistrationError("data task " + std::to_string(id) + " needs a valid color");
    }
    if (r.data_task_of_color[*data_color]) {
      throw RegistrationError("color " + std::to_string(*data_color) + " already has a data task");
    }
    r.data_task_of_color[*data_color] = id;
  } else if (data_color) {
    throw RegistrationError("only data tasks bind a color");
  }
  t.registered = true;
  t.kind = kind;
  t.handler = std::move(handler);
  t.color = data_color;
}

namespace {

detail::Task& known_task(PeRuntime* r, TaskId id, PeCoord at) {
  if (r == nullptr || id >= r->tasks.size() || !r->tasks[id].registered) {
    throw RegistrationError("PE " + coord_str(at) + ": unknown task id " + std::to_string(id));
  }
  return r->tasks[id];
}

}  // namespace

void Pe::activate(TaskId id) {
  auto& t = known_task(rt_.get(), id, coord_);
  if (t.queued) return;
  t.queued = true;
  rt_->queue.push_back(id);
}

void Pe::block(TaskId id) { known_task(rt_.get(), id, coord_).blocked = true; }
void Pe::unblock(TaskId id) { known_task(rt_.get(), id, coord_).blocked = false; }

bool Pe::is_registered(TaskId id) const {
  return rt_ && id < rt_->tasks.size() && rt_->tasks[id].registered;
}

bool Pe::is_queued(TaskId id) const { return is_registered(id) && rt_->tasks[id].queued; }

MicrothreadHandle Pe::movs_async(const dsd::Dsd& src, const dsd::Dsd& dst,
                                 std::optional<TaskId> on_complete, std::string label) {
  auto& r = rt();
  detail::Microthread m;
  if (src.is_memory() && dst.target() == dsd::Target::FabricOut) {
    require_ramp_route(&r, dst.color(), coord_);
    m.sending = true;
    m.color = dst.color();
    m.mem = src;
  } else if (src.target() == dsd::Target::FabricIn && dst.is_memory()) {
    if (src.color() >= r.routes.size() || (r.routes[src.color()].outputs & bit(Direction::Ramp)) == 0) {
      throw ConfigError("PE " + coord_str(coord_) + ": color " + std::to_string(src.color()) +
                        " has no route to the ramp");
    }
    m.sending = false;
    m.color = src.color();
    m.mem = dst;
  } else {
    throw ShapeError("movs_async needs memory->fabric-out or fabric-in->memory");
  }
  if (src.element_count() != dst.element_count()) {
    throw ShapeError("movs_async element counts differ: " + std::to_string(src.element_count()) +
                     " vs " + std::to_string(dst.element_count()));
  }
  if (m.mem.limit() > r.memory.size()) throw BoundsError("movs_async memory descriptor exceeds PE memory");
  if (on_complete) known_task(&r, *on_complete, coord_);
  m.total = m.mem.element_count();
  if (m.total == 0) {
    if (on_complete) activate(*on_complete);
    return {};
  }
  for (std::size_t s = 0; s < r.slots.size(); ++s) {
    if (r.slots[s].active) continue;
    for (const auto& other : r.slots) {
      if (other.active && other.color == m.color && other.sending == m.sending) {
        throw ResourceError("PE " + coord_str(coord_) + ": color " + std::to_string(m.color) +
                            " already has an active transfer in that direction");
      }
    }
    m.active = true;
    m.on_complete = on_complete;
    m.label = std::move(label);
    if (r.tracing) {
      trace("mt_start", "slot=" + std::to_string(s) + ";color=" + std::to_string(m.color) +
                            ";n=" + std::to_string(m.total) + ";dir=" + (m.sending ? "out" : "in") +
                            (m.label.empty() ? "" : ";tag=" + m.label));
    }
    r.slots[s] = std::move(m);
    return {static_cast<int>(s)};
  }
  throw ResourceError("PE " + coord_str(coord_) + ": all " + std::to_string(r.slots.size()) +
                      " microthreads are busy");
}

void Pe::recv_into(Color color, const dsd::Dsd& dest) {
  auto& r = rt();
  if (color >= r.sinks.size() || !r.data_task_of_color[color]) {
    throw PreconditionError("PE " + coord_str(coord_) + ": no data task bound to color " +
                            std::to_string(color));
  }
  if (!dest.is_memory()) throw ShapeError("recv_into needs a memory descriptor");
  if (dest.limit() > r.memory.size()) throw BoundsError("recv_into descriptor exceeds PE memory");
  r.sinks[color] = detail::RecvSink{true, dest, 0};
}

void Pe::send_data(Color color, std::uint32_t payload) {
  require_ramp_route(rt_.get(), color, coord_);
  rt_->egress.push_back(Wavelet{payload, color, false, 0});
}

void Pe::send_control(Color color, TaskId control_task) {
  require_ramp_route(rt_.get(), color, coord_);
  rt_->egress.push_back(Wavelet{control_task, color, true, 0});
}

int Pe::active_microthreads() const { return rt_ ? rt_->active_mt() : 0; }

bool Pe::route_installed(Color color) const {
  return rt_ && color < rt_->routes.size() && rt_->routes[color].outputs != 0;
}

void Pe::trace(std::string_view event, std::string_view detail) {
  if (!rt_ || !rt_->tracing) return;
  std::string line = std::to_string(now()) + "," + std::to_string(coord_.row) + "," +
                     std::to_string(coord_.col) + ",";
  line += event;
  line += ',';
  line += detail;
  rt_->trace_lines.push_back(std::move(line));
}

// Mesh

Mesh::Mesh(int pe_rows, int pe_cols, SimConfig config)
    : rows_(pe_rows), cols_(pe_cols), config_(config) {
  if (pe_rows < 1 || pe_cols < 1) {
    throw ConfigError("mesh dimensions must be at least 1x1, got " + std::to_string(pe_rows) +
                      "x" + std::to_string(pe_cols));
  }
  if (config_.num_colors < 1 || config_.num_colors > 256 || config_.max_tasks < 1 ||
      config_.max_tasks > 256 || config_.microthread_slots < 1 || config_.link_queue_depth < 1 ||
      config_.hop_latency < 1 || config_.elements_per_cycle < 1 || config_.task_overhead_cycles < 0) {
    throw ConfigError("invalid simulator configuration");
  }
  pes_.reserve(static_cast<std::size_t>(pe_rows) * static_cast<std::size_t>(pe_cols));
  for (int r = 0; r < pe_rows; ++r) {
    for (int c = 0; c < pe_cols; ++c) pes_.emplace_back(PeCoord{r, c}, &config_, &clock_);
  }
  set_threads(config_.threads);
}

Mesh::~Mesh() = default;

Mesh build_mesh(int pe_rows, int pe_cols, std::size_t memory_budget_words) {
  SimConfig cfg;
  cfg.memory_budget_words = memory_budget_words;
  return Mesh(pe_rows, pe_cols, cfg);
}

Pe& Mesh::pe(int row, int col) {
  if (!contains({row, col})) throw PreconditionError("PE " + coord_str({row, col}) + " outside mesh");
  return pes_[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(col)];
}

const Pe& Mesh::pe(int row, int col) const { return const_cast<Mesh*>(this)->pe(row, col); }

bool Mesh::contains(PeCoord c) const { return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_; }

bool Mesh::has_neighbour(PeCoord c, Direction d) const {
  return d != Direction::Ramp && contains(neighbour(c, d));
}

int Mesh::neighbour_count(PeCoord c) const {
  int n = 0;
  for (Direction d : kCardinal) n += has_neighbour(c, d) ? 1 : 0;
  return n;
}

void Mesh::set_threads(int threads) {
  config_.threads = std::max(threads, 1);
  pool_ = config_.threads > 1 ? std::make_unique<WorkerPoolHandle>(config_.threads) : nullptr;
}

void Mesh::configure_routes(const RouteAssignment& assignments) {
  if (started_) throw ConfigError("routes are immutable once the simulation has started");
  for (const auto& [at, cfg] : assignments) {
    if (!contains(at)) throw ConfigError("route assigned to PE " + coord_str(at) + " outside mesh");
    for (const auto& [color, route] : cfg.routes()) {
      if (color >= config_.num_colors) {
        throw ConfigError("color " + std::to_string(color) + " outside the supported range 0-" +
                          std::to_string(config_.num_colors - 1));
      }
      for (Direction d : kCardinal) {
        if (((route.inputs | route.outputs) & bit(d)) != 0 && !has_neighbour(at, d)) {
          throw ConfigError("PE " + coord_str(at) + ": color " + std::to_string(color) +
                            " routed through " + std::string(name(d)) + " but there is no neighbour");
        }
      }
    }
  }
  for (const auto& [at, cfg] : assignments) {
    auto& r = MeshAccess::ensure(pe(at));
    for (const auto& [color, route] : cfg.routes()) {
      r.routes[color] = route;
      for (std::size_t d = 0; d < 5; ++d) {
        if ((route.outputs & (1u << d)) == 0 || r.port_of[color][d] >= 0) continue;
        Port p;
        p.color = color;
        p.dir = static_cast<Direction>(d);
        p.ring.resize(static_cast<std::size_t>(config_.link_queue_depth));
        r.port_of[color][d] = static_cast<std::int16_t>(r.ports.size());
        r.ports_by_dir[d].push_back(static_cast<std::int16_t>(r.ports.size()));
        r.ports.push_back(std::move(p));
      }
    }
  }
  // Every link output must be accepted by the neighbour on that link.
  for (auto& p : pes_) {
    const PeRuntime* r = MeshAccess::rt(p);
    if (r == nullptr) continue;
    for (Color c = 0; c < r->routes.size(); ++c) {
      for (Direction d : kCardinal) {
        if ((r->routes[c].outputs & bit(d)) == 0) continue;
        const PeRuntime* n = MeshAccess::rt(pe(neighbour(p.coord(), d)));
        if (n == nullptr || (n->routes[c].inputs & bit(opposite(d))) == 0) {
          throw ConfigError("PE " + coord_str(p.coord()) + ": color " + std::to_string(c) + " leaves " +
                            std::string(name(d)) + " but the neighbour does not accept it");
        }
      }
      if (c == 255) break;
    }
  }
}

void Mesh::link_select(std::size_t i) {
  Pe& q = pes_[i];
  PeRuntime* r = MeshAccess::rt(q);
  if (r == nullptr || !r->has_routes()) return;
  for (Direction d : kCardinal) {
    auto& dec = r->incoming[index(d)];
    dec.valid = false;
    if (!has_neighbour(q.coord(), d)) continue;
    const PeRuntime* p = MeshAccess::rt(pe(neighbour(q.coord(), d)));
    if (p == nullptr) continue;
    const auto& candidates = p->ports_by_dir[index(opposite(d))];
    const std::size_t n = candidates.size();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = (r->rr[index(d)] + k) % n;
      const Port& port = p->ports[static_cast<std::size_t>(candidates[idx])];
      if (port.size == 0) continue;
      const Wavelet& w = port.front();
      if (w.ready > clock_) continue;
      const auto& route = r->routes[w.color];
      bool room = true;
      for (std::size_t o = 0; o < 5 && room; ++o) {
        if ((route.outputs & (1u << o)) == 0) continue;
        room = r->ports[static_cast<std::size_t>(r->port_of[w.color][o])].has_room(config_.link_queue_depth);
      }
      if (!room) continue;
      for (std::size_t o = 0; o < 5; ++o) {
        if ((route.outputs & (1u << o)) != 0) ++r->ports[static_cast<std::size_t>(r->port_of[w.color][o])].reserved;
      }
      dec.valid = true;
      dec.src_port = candidates[idx];
      dec.wavelet = w;
      r->rr[index(d)] = (idx + 1) % n;
      break;
    }
  }
}

void Mesh::link_apply(std::size_t i) {
  Pe& x = pes_[i];
  PeRuntime* r = MeshAccess::rt(x);
  if (r == nullptr || !r->has_routes()) return;
  for (Direction d : kCardinal) {
    if (!has_neighbour(x.coord(), d)) continue;
    const PeRuntime* n = MeshAccess::rt(pe(neighbour(x.coord(), d)));
    if (n == nullptr) continue;
    const auto& dec = n->incoming[index(opposite(d))];
    if (!dec.valid) continue;
    Port& port = r->ports[static_cast<std::size_t>(dec.src_port)];
    port.pop();
    auto& count = r->link_out[index(d)];
    (dec.wavelet.control ? count.control : count.data) += 1;
    if (r->tracing) {
      x.trace("link", "dir=" + std::string(name(d)) + ";color=" + std::to_string(dec.wavelet.color) +
                          (dec.wavelet.control ? ";control" : ";data"));
    }
  }
  for (Direction d : kCardinal) {
    const auto& dec = r->incoming[index(d)];
    if (!dec.valid) continue;
    Wavelet w = dec.wavelet;
    w.ready = clock_ + static_cast<std::uint64_t>(config_.hop_latency);
    const auto& route = r->routes[w.color];
    int copies = 0;
    for (std::size_t o = 0; o < 5; ++o) {
      if ((route.outputs & (1u << o)) == 0) continue;
      r->ports[static_cast<std::size_t>(r->port_of[w.color][o])].push(w);
      ++copies;
    }
    r->injected += static_cast<std::uint64_t>(copies - 1);
  }
  for (auto& p : r->ports) p.reserved = 0;
}

void Mesh::compute(std::size_t i) {
  Pe& x = pes_[i];
  PeRuntime* r = MeshAccess::rt(x);
  if (r == nullptr) return;
  const std::uint64_t now = clock_;

  // Ramp dispatch.
  for (std::int16_t pi : r->ports_by_dir[index(Direction::Ramp)]) {
    Port& port = r->ports[static_cast<std::size_t>(pi)];
    while (port.size > 0 && port.front().ready <= now + 1 && port.front().control) {
      const TaskId id = static_cast<TaskId>(port.front().payload & 0xFFu);
      if (id >= r->tasks.size() || !r->tasks[id].registered || r->tasks[id].kind != TaskKind::Control) {
        throw IntegrityError("PE " + coord_str(x.coord()) + ": control wavelet names task " +
                             std::to_string(id) + " which is not a registered control task");
      }
      // A second sentinel for a still-pending task waits at the head.
      if (r->tasks[id].queued) break;
      port.pop();
      ++r->consumed;
      x.activate(id);
    }
    if (port.size == 0 || port.head_dispatched || port.front().ready > now + 1) continue;
    bool streaming = false;
    for (const auto& m : r->slots) streaming = streaming || (m.active && !m.sending && m.color == port.color);
    if (streaming) continue;
    if (const auto task = r->data_task_of_color[port.color]) {
      port.head_dispatched = true;
      x.activate(*task);
    }
  }

  // Tasks.
  bool busy = false;
  if (r->running_left > 0) {
    busy = true;
    if (--r->running_left == 0) {
      x.trace("task_end", "task=" + std::to_string(*r->running));
      r->running.reset();
    }
  } else {
    while (!busy) {
      auto it = std::find_if(r->queue.begin(), r->queue.end(), [&](TaskId id) {
        const auto& t = r->tasks[id];
        return !t.blocked && t.last_run != now;
      });
      if (it == r->queue.end()) break;
      const TaskId id = *it;
      r->queue.erase(it);
      auto& t = r->tasks[id];
      t.queued = false;
      t.last_run = now;
      std::optional<Wavelet> w;
      if (t.kind == TaskKind::Data) {
        Port* port = nullptr;
        const std::int16_t pi = r->port_of[*t.color][index(Direction::Ramp)];
        if (pi >= 0) port = &r->ports[static_cast<std::size_t>(pi)];
        if (port != nullptr && port->size > 0 && port->head_dispatched) {
          w = port->front();
          port->pop();
          ++r->consumed;
          auto& sink = r->sinks[*t.color];
          if (sink.bound) {
            if (sink.next >= sink.dest.element_count()) {
              throw OverflowError("PE " + coord_str(x.coord()) + ": color " + std::to_string(*t.color) +
                                  " received more wavelets than its " +
                                  std::to_string(sink.dest.element_count()) + "-element destination");
            }
            r->memory[static_cast<std::size_t>(sink.dest.address(sink.next++))] =
                std::bit_cast<float>(w->payload);
          }
        }
      }
      x.trace("task_start", "task=" + std::to_string(id));
      TaskContext ctx(x, id, w);
      if (t.handler) t.handler(ctx);
      ++r->tasks_run;
      const std::uint64_t cost = ctx.cost() + static_cast<std::uint64_t>(config_.task_overhead_cycles);
      if (cost == 0) {
        x.trace("task_end", "task=" + std::to_string(id));
        continue;
      }
      busy = true;
      r->running_left = cost - 1;
      if (r->running_left == 0) {
        x.trace("task_end", "task=" + std::to_string(id));
      } else {
        r->running = id;
      }
    }
  }

  // Microthreads advance only while no task holds the CE.
  if (!busy) {
    bool any = false;
    bool progressed = false;
    for (std::size_t s = 0; s < r->slots.size(); ++s) {
      auto& m = r->slots[s];
      if (!m.active) continue;
      any = true;
      if (m.sending) {
        const auto addr = static_cast<std::size_t>(m.mem.address(m.done));
        const Wavelet w{std::bit_cast<std::uint32_t>(r->memory[addr]), m.color, false, 0};
        if (!try_inject(*r, config_, w, now)) continue;
      } else {
        Port& port = r->ports[static_cast<std::size_t>(r->port_of[m.color][index(Direction::Ramp)])];
        if (port.size == 0 || port.front().control || port.front().ready > now + 1) continue;
        const auto addr = static_cast<std::size_t>(m.mem.address(m.done));
        r->memory[addr] = std::bit_cast<float>(port.front().payload);
        port.pop();
        ++r->consumed;
      }
      progressed = true;
      if (++m.done == m.total) {
        m.active = false;
        x.trace("mt_done", "slot=" + std::to_string(s) + ";color=" + std::to_string(m.color));
        if (m.on_complete) x.activate(*m.on_complete);
      }
    }
    if (any && !progressed) ++r->stalls;
  }

  // Single-wavelet sends, in order per color.
  if (!r->egress.empty()) {
    std::vector<bool> held(r->routes.size(), false);
    std::size_t out = 0;
    for (std::size_t k = 0; k < r->egress.size(); ++k) {
      const Wavelet& w = r->egress[k];
      if (!held[w.color] && try_inject(*r, config_, w, now)) continue;
      held[w.color] = true;
      r->egress[out++] = w;
    }
    r->egress.resize(out);
  }
}

void Mesh::for_all(void (Mesh::*fn)(std::size_t)) {
  auto body = [this, fn](std::size_t i) {
    try {
      (this->*fn)(i);
    } catch (...) {
      if (auto* r = MeshAccess::rt(pes_[i])) {
        if (!r->error) r->error = std::current_exception();
      } else {
        throw;
      }
    }
  };
  if (pool_) {
    pool_->parallel_for(pes_.size(), body);
  } else {
    for (std::size_t i = 0; i < pes_.size(); ++i) body(i);
  }
  rethrow_pending();
}

void Mesh::rethrow_pending() {
  for (auto& p : pes_) {
    auto* r = MeshAccess::rt(p);
    if (r != nullptr && r->error) {
      auto e = r->error;
      r->error = nullptr;
      std::rethrow_exception(e);
    }
  }
}

void Mesh::flush_trace() {
  for (auto& p : pes_) {
    auto* r = MeshAccess::rt(p);
    if (r == nullptr) continue;
    if (trace_ != nullptr) {
      for (const auto& line : r->trace_lines) *trace_ << line << '\n';
    }
    r->trace_lines.clear();
    r->tracing = trace_ != nullptr;
  }
}

void Mesh::advance() {
  if (!started_) {
    started_ = true;
    flush_trace();
  }
  for_all(&Mesh::link_select);
  for_all(&Mesh::link_apply);
  for_all(&Mesh::compute);
  flush_trace();
  ++clock_;
}

CycleStats Mesh::step() {
  const CycleStats before = stats();
  advance();
  return difference(stats(), before);
}

CycleStats Mesh::run_until_quiescent(std::uint64_t max_cycles) {
  if (max_cycles == 0) throw PreconditionError("max_cycles must be positive");
  const CycleStats before = stats();
  std::uint64_t ran = 0;
  while (!quiescent()) {
    if (ran == max_cycles) {
      throw DeadlockError("mesh not quiescent after " + std::to_string(max_cycles) + " cycles (cycle " +
                              std::to_string(clock_) + ")",
                          snapshot());
    }
    advance();
    ++ran;
  }
  return difference(stats(), before);
}

bool Mesh::quiescent() const {
  for (const auto& p : pes_) {
    const auto* r = MeshAccess::rt(p);
    if (r != nullptr && !r->idle()) return false;
  }
  return true;
}

CycleStats Mesh::stats() const {
  CycleStats s;
  s.cycles = clock_;
  for (const auto& p : pes_) {
    const auto* r = MeshAccess::rt(p);
    if (r == nullptr) continue;
    for (Direction d : kCardinal) {
      const auto& c = r->link_out[index(d)];
      if (c.data != 0 || c.control != 0) s.wavelets_per_link[{p.coord(), d}] = c;
    }
    s.compute_element_ops += r->compute_ops;
    s.stall_cycles += r->stalls;
    s.tasks_run += r->tasks_run;
    s.wavelets_injected += r->injected;
    s.wavelets_consumed += r->consumed;
  }
  return s;
}

std::uint64_t Mesh::in_flight() const {
  std::uint64_t n = 0;
  for (const auto& p : pes_) {
    const auto* r = MeshAccess::rt(p);
    if (r == nullptr) continue;
    for (const auto& port : r->ports) n += port.size;
  }
  return n;
}

std::string Mesh::snapshot() const {
  std::ostringstream out;
  for (const auto& p : pes_) {
    const auto* r = MeshAccess::rt(p);
    if (r == nullptr || r->idle()) continue;
    out << "PE" << coord_str(p.coord()) << ":";
    if (r->running_left > 0) out << " running=" << static_cast<int>(*r->running) << "(" << r->running_left << " left)";
    if (!r->queue.empty()) {
      out << " queued=[";
      for (std::size_t k = 0; k < r->queue.size(); ++k) {
        const auto id = r->queue[k];
        out << (k ? " " : "") << static_cast<int>(id) << (r->tasks[id].blocked ? "(blocked)" : "");
      }
      out << "]";
    }
    for (std::size_t s = 0; s < r->slots.size(); ++s) {
      const auto& m = r->slots[s];
      if (!m.active) continue;
      out << " mt" << s << "=" << (m.sending ? "out" : "in") << ":color" << static_cast<int>(m.color) << ":"
          << m.done << "/" << m.total;
      if (!m.label.empty()) out << ":" << m.label;
    }
    for (const auto& port : r->ports) {
      if (port.size == 0) continue;
      out << " queue[color" << static_cast<int>(port.color) << "->" << name(port.dir) << "]=" << port.size
          << (port.dir == Direction::Ramp && port.front().control ? "(control head)" : "");
    }
    if (!r->egress.empty()) out << " egress=" << r->egress.size();
    out << '\n';
  }
  return out.str();
}

}  // namespace wafermesh::sim
