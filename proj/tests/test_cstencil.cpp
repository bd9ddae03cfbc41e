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

#include <doctest.h>

#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "wafermesh/cstencil.hpp"
#include "wafermesh/error.hpp"
#include "wafermesh/oracle.hpp"

using namespace wafermesh;
using namespace wafermesh::cstencil;
using sim::Direction;
using sim::PeCoord;

namespace {

GlobalGrid random_grid(int rows, int cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  GlobalGrid g(rows, cols);
  for (float& v : g.values()) v = dist(rng);
  return g;
}

/// Value the halo buffer cell (br, bc) of `pe` must hold: the global cell
/// it mirrors, or zero off the grid.
float expected_cell(const GlobalGrid& g, const TileGeometry& geom, PeCoord pe, int br, int bc) {
  const int y = pe.row * geom.tile_h + br - geom.radius;
  const int x = pe.col * geom.tile_w + bc - geom.radius;
  if (y < 0 || x < 0 || y >= g.rows() || x >= g.cols()) return 0.0f;
  return g.at(y, x);
}

bool is_corner_cell(const TileGeometry& geom, int br, int bc) {
  const int r = geom.radius;
  const bool row_halo = br < r || br >= r + geom.tile_h;
  const bool col_halo = bc < r || bc >= r + geom.tile_w;
  return row_halo && col_halo;
}

/// Runs one iteration and returns, per PE, the halo-complete input buffer.
std::vector<std::vector<float>> swapped_buffers(const GlobalGrid& g, const StencilKernel& k, int pe_rows,
                                                int pe_cols, sim::CycleStats* stats = nullptr) {
  const TileGeometry geom = geometry_for(g, pe_rows, pe_cols, k.radius());
  sim::Mesh mesh(pe_rows, pe_cols);
  Program prog(mesh, k, geom);
  prog.load(partition(global_pad(g, pe_rows, pe_cols), geom));
  prog.launch(1);
  const sim::CycleStats s = prog.run(prog.cycle_budget(1));
  if (stats != nullptr) *stats = s;
  std::vector<std::vector<float>> out;
  for (int r = 0; r < pe_rows; ++r) {
    for (int c = 0; c < pe_cols; ++c) {
      const auto mem = mesh.pe(r, c).memory();
      out.emplace_back(mem.begin(), mem.begin() + static_cast<std::ptrdiff_t>(geom.buffer_size()));
    }
  }
  return out;
}

std::uint64_t data_in(const sim::CycleStats& s, const sim::Mesh& m, PeCoord pe) {
  std::uint64_t total = 0;
  for (Direction d : sim::kCardinal) {
    if (m.has_neighbour(pe, d)) total += s.link(sim::neighbour(pe, d), sim::opposite(d)).data;
  }
  return total;
}

}  // namespace

TEST_CASE("checkerboard colors pair up on every link") {
  sim::Mesh m(4, 4);
  const sim::RouteAssignment routes = star_routes(m);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const PeCoord pe{r, c};
      const ColorLayout here = layout_for(pe);
      std::set<Color> all(here.tx.begin(), here.tx.end());
      all.insert(here.rx.begin(), here.rx.end());
      CHECK(all.size() == 8);
      for (Direction d : sim::kCardinal) {
        if (!m.has_neighbour(pe, d)) continue;
        const PeCoord n = sim::neighbour(pe, d);
        CHECK(here.tx_of(d) == layout_for(n).rx_of(sim::opposite(d)));
        int carried = 0;
        for (const auto& [color, route] : routes.at(pe).routes()) {
          if ((route.outputs & sim::bit(d)) != 0) {
            ++carried;
            CHECK(color == here.tx_of(d));
            CHECK(route.inputs == sim::bit(Direction::Ramp));
          }
        }
        CHECK(carried == 1);
      }
    }
  }
}

TEST_CASE("degenerate meshes get reduced route sets") {
  sim::Mesh one(1, 1);
  for (const auto& [pe, cfg] : star_routes(one)) CHECK(cfg.empty());

  sim::Mesh column(2, 1);
  for (const auto& [pe, cfg] : star_routes(column)) {
    const ColorLayout l = layout_for(pe);
    for (const auto& [color, route] : cfg.routes()) {
      const bool vertical = color == l.tx_of(Direction::North) || color == l.tx_of(Direction::South) ||
                            color == l.rx_of(Direction::North) || color == l.rx_of(Direction::South);
      CHECK(vertical);
      CHECK(((route.outputs | route.inputs) & (sim::bit(Direction::North) | sim::bit(Direction::South))) != 0);
    }
    CHECK(cfg.routes().size() == 2);
  }
}

TEST_CASE("halo regions tile the buffer ring") {
  const TileGeometry g = TileGeometry::make(1, 1, 5, 7, 2);
  std::vector<int> hits(g.buffer_size(), 0);
  auto mark = [&](const HaloRegion& reg) {
    for (int i = 0; i < reg.rows; ++i) {
      for (int j = 0; j < reg.cols; ++j) ++hits[static_cast<std::size_t>((reg.row0 + i) * g.buffer_cols() + reg.col0 + j)];
    }
  };
  for (Direction d : sim::kCardinal) {
    mark(recv_strip(g, d));
    mark(corner_slot(g, d));
    CHECK(forward_block(g, d).size() == 4u);
    CHECK(send_edge(g, d).size() == recv_strip(g, d).size());
  }
  for (int br = 0; br < g.buffer_rows(); ++br) {
    for (int bc = 0; bc < g.buffer_cols(); ++bc) {
      const bool interior = br >= 2 && br < 7 && bc >= 2 && bc < 9;
      CHECK(hits[static_cast<std::size_t>(br * g.buffer_cols() + bc)] == (interior ? 0 : 1));
    }
  }
}

TEST_CASE("star swap fills side halos and leaves corners zero") {
  for (auto [pr, pc, th, tw, r] : {std::array{2, 2, 3, 3, 1}, std::array{3, 2, 4, 5, 2}, std::array{2, 3, 4, 4, 3}}) {
    const TileGeometry geom = TileGeometry::make(pr, pc, th, tw, r);
    const GlobalGrid g = random_grid(geom.padded_rows(), geom.padded_cols(), 17);
    const auto bufs = swapped_buffers(g, StencilKernel::heat(StencilShape::Star, r), pr, pc);
    for (int i = 0; i < pr; ++i) {
      for (int j = 0; j < pc; ++j) {
        const auto& b = bufs[static_cast<std::size_t>(i * pc + j)];
        for (int br = 0; br < geom.buffer_rows(); ++br) {
          for (int bc = 0; bc < geom.buffer_cols(); ++bc) {
            const float want = is_corner_cell(geom, br, bc) ? 0.0f : expected_cell(g, geom, {i, j}, br, bc);
            CHECK(b[static_cast<std::size_t>(br * geom.buffer_cols() + bc)] == want);
          }
        }
      }
    }
  }
}

TEST_CASE("box swap fills every halo cell including corners") {
  for (auto [pr, pc, th, tw, r] : {std::array{3, 3, 4, 4, 1}, std::array{3, 3, 3, 5, 2}, std::array{2, 4, 4, 4, 3}}) {
    const TileGeometry geom = TileGeometry::make(pr, pc, th, tw, r);
    const GlobalGrid g = random_grid(geom.padded_rows(), geom.padded_cols(), 23);
    const auto bufs = swapped_buffers(g, StencilKernel::heat(StencilShape::Box, r), pr, pc);
    for (int i = 0; i < pr; ++i) {
      for (int j = 0; j < pc; ++j) {
        const auto& b = bufs[static_cast<std::size_t>(i * pc + j)];
        for (int br = 0; br < geom.buffer_rows(); ++br) {
          for (int bc = 0; bc < geom.buffer_cols(); ++bc) {
            CHECK(b[static_cast<std::size_t>(br * geom.buffer_cols() + bc)] == expected_cell(g, geom, {i, j}, br, bc));
          }
        }
      }
    }
  }
}

TEST_CASE("interior PE sends 2r(tile_w + tile_h) wavelets for a star") {
  const TileGeometry geom = TileGeometry::make(3, 3, 64, 64, 1);
  sim::CycleStats s;
  swapped_buffers(GlobalGrid(geom.padded_rows(), geom.padded_cols(), 1.0f), StencilKernel::heat(StencilShape::Star, 1),
                  3, 3, &s);
  CHECK(s.data_out({1, 1}) == 256);
  sim::Mesh m(3, 3);
  CHECK(data_in(s, m, {1, 1}) == 256);
  CHECK(s.data_out({0, 0}) == 128);
  for (Direction d : sim::kCardinal) CHECK(s.link({1, 1}, d).control == 1);
}

TEST_CASE("box stage two forwards 4r^2 wavelets each way") {
  const int r = 2;
  const TileGeometry geom = TileGeometry::make(3, 3, 5, 6, r);
  sim::CycleStats s;
  swapped_buffers(GlobalGrid(geom.padded_rows(), geom.padded_cols(), 1.0f), StencilKernel::heat(StencilShape::Box, r),
                  3, 3, &s);
  sim::Mesh m(3, 3);
  const std::uint64_t side = 2u * r * (5 + 6);
  CHECK(s.data_out({1, 1}) == side + 4u * r * r);
  CHECK(data_in(s, m, {1, 1}) == side + 4u * r * r);
  for (Direction d : sim::kCardinal) CHECK(s.link({1, 1}, d).control == 2);

  // The corner PE receives stage-one strips from two sides and one corner.
  CHECK(data_in(s, m, {0, 0}) == static_cast<std::uint64_t>(r * 5 + r * 6 + r * r));
  CHECK(data_in(s, m, {2, 2}) == static_cast<std::uint64_t>(r * 5 + r * 6 + r * r));
}

TEST_CASE("corner forwarding ownership") {
  sim::Mesh m(3, 3);
  int forwards = 0;
  int corners = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (Direction d : sim::kCardinal) {
        forwards += forwards_on(m, {r, c}, d) ? 1 : 0;
        corners += corner_from(m, {r, c}, d) ? 1 : 0;
        if (corner_from(m, {r, c}, d)) CHECK(forwards_on(m, sim::neighbour({r, c}, d), sim::opposite(d)));
      }
    }
  }
  // One corner per diagonal neighbour pair, counted from both ends.
  CHECK(corners == 2 * 2 * 2 * 2);
  CHECK(forwards == corners);
  int at_corner = 0;
  for (Direction d : sim::kCardinal) at_corner += corner_from(m, {0, 0}, d) ? 1 : 0;
  CHECK(at_corner == 1);
}

TEST_CASE("swap counters reach their expectations") {
  const TileGeometry geom = TileGeometry::make(2, 2, 3, 3, 1);
  sim::Mesh mesh(2, 2);
  Program prog(mesh, StencilKernel::heat(StencilShape::Star, 1), geom);
  prog.load(partition(GlobalGrid(6, 6, 0.5f), geom));
  prog.launch(1);
  prog.run(prog.cycle_budget(1));
  CHECK(prog.completed_iterations() == 1);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const SwapPhaseState st = prog.state({r, c});
      CHECK(st.expected_send == 2);
      CHECK(st.expected_recv == 2);
      CHECK(st.send_counter == 2);
      CHECK(st.recv_counter == 2);
    }
  }
}

TEST_CASE("single PE passes the barrier without traffic") {
  const GlobalGrid g = random_grid(5, 5, 3);
  const StencilKernel k = StencilKernel::heat(StencilShape::Box, 2);
  RunOptions opts;
  opts.iterations = 3;
  const RunResult res = run_iterations(g, k, 1, 1, opts);
  CHECK(res.stats.wavelets_injected == 0);
  CHECK(res.grid == oracle::jacobi_iterate(g, k, oracle::WeightOrder::compute_order(k), 3));
}

TEST_CASE("identity and uniform kernels") {
  const GlobalGrid g = random_grid(8, 8, 5);
  RunOptions opts;
  opts.iterations = 2;
  CHECK(run_iterations(g, StencilKernel::identity(), 2, 2, opts).grid == g);

  const StencilKernel fifth = StencilKernel::uniform(StencilShape::Star, 1, 0.2f);
  opts.iterations = 1;
  const RunResult ones = run_iterations(GlobalGrid(8, 8, 1.0f), fifth, 2, 2, opts);
  CHECK(ones.grid.at(3, 4) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ones.grid.at(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("simulated iterations match the ordered oracle bit for bit") {
  struct Case {
    StencilShape shape;
    int r;
    int pe_rows;
    int pe_cols;
    int rows;
    int cols;
    int iters;
  };
  const std::vector<Case> cases{
      {StencilShape::Star, 1, 2, 2, 6, 6, 1},   {StencilShape::Star, 1, 2, 2, 6, 6, 10},
      {StencilShape::Star, 2, 2, 3, 9, 11, 4},  {StencilShape::Star, 3, 4, 4, 17, 19, 2},
      {StencilShape::Box, 1, 2, 3, 7, 8, 5},    {StencilShape::Box, 2, 4, 4, 13, 14, 3},
      {StencilShape::Box, 3, 2, 2, 8, 9, 10},   {StencilShape::Box, 2, 1, 1, 4, 4, 6},
  };
  std::uint32_t seed = 100;
  for (const Case& c : cases) {
    CAPTURE(c.r);
    CAPTURE(c.pe_rows);
    CAPTURE(c.pe_cols);
    const StencilKernel k = StencilKernel::heat(c.shape, c.r);
    const GlobalGrid g = random_grid(c.rows, c.cols, seed++);
    RunOptions opts;
    opts.iterations = c.iters;
    const RunResult res = run_iterations(g, k, c.pe_rows, c.pe_cols, opts);
    const GlobalGrid want = oracle::jacobi_iterate(g, k, oracle::WeightOrder::compute_order(k), c.iters);
    const auto rep = oracle::compare(res.grid, want, oracle::CompareMode::bitexact());
    CHECK_MESSAGE(rep.pass, rep.describe());
    CHECK(res.iterations_run == c.iters);
  }
}

TEST_CASE("sparse kernels only touch listed offsets") {
  const StencilKernel k(StencilShape::Box, 2, {{{0, 0}, 0.5f}, {{-2, 1}, 0.25f}, {{1, -2}, 0.125f}});
  const GlobalGrid g = random_grid(10, 12, 8);
  RunOptions opts;
  opts.iterations = 4;
  const RunResult res = run_iterations(g, k, 3, 2, opts);
  CHECK(res.grid == oracle::jacobi_iterate(g, k, oracle::WeightOrder::compute_order(k), 4));
}

TEST_CASE("convergence checks") {
  const GlobalGrid g = random_grid(8, 8, 12);
  const StencilKernel k = StencilKernel::heat(StencilShape::Star, 1);
  RunOptions opts;
  opts.iterations = 10;
  opts.check_interval = 2;
  opts.eps = std::numeric_limits<double>::infinity();
  const RunResult early = run_iterations(g, k, 2, 2, opts);
  CHECK(early.converged);
  CHECK(early.iterations_run == 2);
  CHECK(early.grid == oracle::jacobi_iterate(g, k, oracle::WeightOrder::compute_order(k), 2));

  opts.eps = 0.0;
  const RunResult full = run_iterations(g, k, 2, 2, opts);
  CHECK_FALSE(full.converged);
  CHECK(full.iterations_run == 10);
  REQUIRE(full.last_change.has_value());
  CHECK(*full.last_change > 0.0);
}

TEST_CASE("compute starts only after the final barrier") {
  for (StencilShape shape : {StencilShape::Star, StencilShape::Box}) {
    std::ostringstream trace;
    RunOptions opts;
    opts.iterations = 3;
    opts.trace = &trace;
    run_iterations(random_grid(9, 9, 4), StencilKernel::heat(shape, 1), 3, 3, opts);
    const std::string last_stage = shape == StencilShape::Box ? "2" : "1";
    std::map<std::string, std::string> latest_barrier;
    std::istringstream in(trace.str());
    std::string line;
    int computes = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string part; std::getline(ss, part, ',');) f.push_back(part);
      REQUIRE(f.size() == 5);
      const std::string pe = f[1] + "," + f[2];
      if (f[3] == "barrier") latest_barrier[pe] = f[4];
      if (f[3] == "compute_begin") {
        ++computes;
        const std::string iter = f[4].substr(f[4].find('=') + 1);
        const std::string& b = latest_barrier[pe];
        CHECK(b.find("iter=" + iter + ";stage=" + last_stage + ";") == 0);
        const auto sent = b.substr(b.find("sent=") + 5, b.find(';', b.find("sent=")) - b.find("sent=") - 5);
        const auto recv = b.substr(b.find("recv=") + 5);
        CHECK(sent.substr(0, sent.find('/')) == sent.substr(sent.find('/') + 1));
        CHECK(recv.substr(0, recv.find('/')) == recv.substr(recv.find('/') + 1));
      }
    }
    CHECK(computes == 27);
  }
}

TEST_CASE("load rejects mismatched tiles") {
  const TileGeometry geom = TileGeometry::make(2, 2, 3, 3, 1);
  sim::Mesh mesh(2, 2);
  Program prog(mesh, StencilKernel::heat(StencilShape::Star, 1), geom);
  CHECK_THROWS(prog.load(partition(GlobalGrid(6, 6), TileGeometry::make(1, 2, 6, 3, 1))));
  sim::Mesh small(1, 2);
  CHECK_THROWS(Program(small, StencilKernel::heat(StencilShape::Star, 2), geom));
}
