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

#include <random>

#include "wafermesh/core_model.hpp"
#include "wafermesh/error.hpp"

using namespace wafermesh;

TEST_CASE("kernel validation rejects malformed stencils") {
  CHECK_THROWS_AS(StencilKernel(StencilShape::Star, 0, {{{0, 0}, 1.0f}}), ConfigError);
  CHECK_THROWS_AS(StencilKernel(StencilShape::Star, 1, {{{0, 1}, 1.0f}}), ConfigError);
  CHECK_THROWS_AS(StencilKernel(StencilShape::Star, 1, {{{0, 0}, 1.0f}, {{1, 1}, 0.5f}}), ConfigError);
  CHECK_THROWS_AS(StencilKernel(StencilShape::Box, 1, {{{0, 0}, 1.0f}, {{2, 0}, 0.5f}}), ConfigError);
  CHECK_THROWS_AS(StencilKernel(StencilShape::Box, 1, {{{0, 0}, INFINITY}}), ConfigError);
  CHECK_NOTHROW(StencilKernel(StencilShape::Box, 1, {{{0, 0}, 1.0f}, {{1, 1}, 0.5f}}));
}

TEST_CASE("pattern point counts") {
  for (int r = 1; r <= 3; ++r) {
    CHECK(StencilKernel::pattern_offsets(StencilShape::Star, r).size() == static_cast<std::size_t>(4 * r + 1));
    CHECK(StencilKernel::pattern_offsets(StencilShape::Box, r).size() ==
          static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
  }
  CHECK(StencilKernel::heat(StencilShape::Star, 1).point_count() == 5);
  CHECK(StencilKernel::heat(StencilShape::Box, 2).point_count() == 25);
}

TEST_CASE("heat weights never sum above one") {
  for (auto shape : {StencilShape::Star, StencilShape::Box}) {
    for (int r = 1; r <= 3; ++r) {
      const auto k = StencilKernel::heat(shape, r);
      double sum = 0.0;
      for (const auto& [off, w] : k.weights()) {
        CHECK(w > 0.0f);
        sum += w;
      }
      CHECK(sum <= 1.0);
      CHECK(sum > 1.0 - 1e-6);
    }
  }
}

TEST_CASE("compute order is centre first then row-major") {
  const auto k = StencilKernel::heat(StencilShape::Star, 1);
  const std::vector<Offset> expect{{0, 0}, {-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  CHECK(k.compute_order() == expect);
  const std::vector<Offset> natural{{-1, 0}, {0, -1}, {0, 0}, {0, 1}, {1, 0}};
  CHECK(k.natural_order() == natural);
  CHECK(k.weight({1, 1}) == 0.0f);
}

TEST_CASE("parse_shape") {
  CHECK(parse_shape("star") == StencilShape::Star);
  CHECK(parse_shape("box") == StencilShape::Box);
  CHECK_THROWS_AS(parse_shape("diamond"), ConfigError);
}

TEST_CASE("global grid shape checks") {
  CHECK_THROWS_AS(GlobalGrid(0, 3), Error);
  CHECK_THROWS_AS(GlobalGrid(2, 2, std::vector<float>(3)), Error);
  GlobalGrid g(2, 3, std::vector<float>{1, 2, 3, 4, 5, 6});
  CHECK(g.at(1, 2) == 6.0f);
  CHECK(g.truncated(1, 2) == GlobalGrid(1, 2, std::vector<float>{1, 2}));
}

TEST_CASE("tile geometry requires tiles larger than the radius") {
  CHECK_THROWS_AS(TileGeometry::make(1, 1, 1, 4, 1), ConfigError);
  CHECK_THROWS_AS(TileGeometry::make(0, 1, 4, 4, 1), Error);
  const auto g = TileGeometry::make(2, 3, 4, 5, 2);
  CHECK(g.buffer_rows() == 8);
  CHECK(g.buffer_cols() == 9);
  CHECK(g.padded_rows() == 8);
  CHECK(g.padded_cols() == 15);
}

TEST_CASE("5x5 grid on 2x2 PEs with r=1 pads to 6x6 and four 3x3 tiles") {
  GlobalGrid g(5, 5);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) g.at(r, c) = static_cast<float>(1 + r * 5 + c);
  }
  const auto padded = global_pad(g, 2, 2);
  REQUIRE(padded.rows() == 6);
  REQUIRE(padded.cols() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(padded.at(5, i) == 0.0f);
    CHECK(padded.at(i, 5) == 0.0f);
  }
  const auto geom = geometry_for(g, 2, 2, 1);
  CHECK(geom.tile_h == 3);
  CHECK(geom.tile_w == 3);
  const auto tiles = partition(padded, geom);
  REQUIRE(tiles.size() == 4);
  for (const auto& t : tiles) {
    CHECK(t.buffer.size() == 25);
    for (int i = 0; i < 5; ++i) {
      CHECK(t.cell(0, i) == 0.0f);
      CHECK(t.cell(4, i) == 0.0f);
      CHECK(t.cell(i, 0) == 0.0f);
      CHECK(t.cell(i, 4) == 0.0f);
    }
  }
  CHECK(tiles[3].interior(0, 0) == g.at(3, 3));
  CHECK(tiles[1].interior(2, 1) == g.at(2, 4));
  CHECK(tiles[1].interior(2, 2) == 0.0f);
  CHECK(reassemble(tiles, 5, 5) == g);
}

TEST_CASE("partition and reassemble round-trip on random grids") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dim(1, 40);
  std::uniform_real_distribution<float> val(-1.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    GlobalGrid g(dim(rng), dim(rng));
    for (float& v : g.values()) v = val(rng);
    const int pr = 1 + trial % 4;
    const int pc = 1 + (trial / 4) % 3;
    const int r = 1;
    const int th = std::max((g.rows() + pr - 1) / pr, r + 1);
    const int tw = std::max((g.cols() + pc - 1) / pc, r + 1);
    const auto geom = TileGeometry::make(pr, pc, th, tw, r);
    GlobalGrid padded(geom.padded_rows(), geom.padded_cols());
    for (int y = 0; y < g.rows(); ++y) {
      for (int x = 0; x < g.cols(); ++x) padded.at(y, x) = g.at(y, x);
    }
    CHECK(reassemble(partition(padded, geom), g.rows(), g.cols()) == g);
  }
}

TEST_CASE("reassemble detects missing and duplicate tiles") {
  const auto geom = TileGeometry::make(2, 2, 2, 2, 1);
  auto tiles = partition(GlobalGrid(4, 4, 1.0f), geom);
  auto dup = tiles;
  dup[3] = dup[0];
  CHECK_THROWS_AS(reassemble(dup, 4, 4), IntegrityError);
  tiles.pop_back();
  CHECK_THROWS_AS(reassemble(tiles, 4, 4), IntegrityError);
  CHECK_THROWS_AS(partition(GlobalGrid(5, 4), geom), PreconditionError);
}
