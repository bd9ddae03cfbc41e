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

#include "wafermesh/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "wafermesh/error.hpp"

namespace wafermesh {

std::string to_string(StencilShape shape) {
  return shape == StencilShape::Star ? "star" : "box";
}

StencilShape parse_shape(const std::string& text) {
  if (text == "star") return StencilShape::Star;
  if (text == "box") return StencilShape::Box;
  throw ConfigError("unknown stencil pattern '" + text + "' (expected star or box)");
}

namespace {

// Largest binary32 value not above `x`.
float round_down(double x) {
  float f = static_cast<float>(x);
  if (static_cast<double>(f) > x) f = std::nextafter(f, 0.0f);
  return f;
}

}  // namespace

StencilKernel::StencilKernel(StencilShape shape, int radius, std::map<Offset, float> weights)
    : shape_(shape), radius_(radius), weights_(std::move(weights)) {
  if (radius_ < 1) throw ConfigError("stencil radius must be >= 1");
  if (!weights_.contains({0, 0})) throw ConfigError("stencil kernel needs a centre weight");
  for (const auto& [off, w] : weights_) {
    if (std::abs(off.dy) > radius_ || std::abs(off.dx) > radius_) {
      throw ConfigError("offset (" + std::to_string(off.dy) + "," + std::to_string(off.dx) +
                        ") exceeds radius " + std::to_string(radius_));
    }
    if (shape_ == StencilShape::Star && off.dy != 0 && off.dx != 0) {
      throw ConfigError("star kernel offset (" + std::to_string(off.dy) + "," +
                        std::to_string(off.dx) + ") is off-axis");
    }
    if (!std::isfinite(w)) throw ConfigError("stencil weights must be finite");
  }
}

std::vector<Offset> StencilKernel::pattern_offsets(StencilShape shape, int radius) {
  std::vector<Offset> out;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (shape == StencilShape::Star && dy != 0 && dx != 0) continue;
      out.push_back({dy, dx});
    }
  }
  return out;
}

StencilKernel StencilKernel::heat(StencilShape shape, int radius) {
  const auto offsets = pattern_offsets(shape, radius);
  const double p = static_cast<double>(offsets.size());
  float neighbour = round_down(1.0 / p);
  while (static_cast<double>(neighbour) * p > 1.0) neighbour = std::nextafter(neighbour, 0.0f);
  const float centre = round_down(1.0 - (p - 1.0) * static_cast<double>(neighbour));
  std::map<Offset, float> w;
  for (const auto& off : offsets) w[off] = (off == Offset{0, 0}) ? centre : neighbour;
  return StencilKernel(shape, radius, std::move(w));
}

StencilKernel StencilKernel::uniform(StencilShape shape, int radius, float value) {
  std::map<Offset, float> w;
  for (const auto& off : pattern_offsets(shape, radius)) w[off] = value;
  return StencilKernel(shape, radius, std::move(w));
}

StencilKernel StencilKernel::identity(StencilShape shape, int radius) {
  return StencilKernel(shape, radius, {{{0, 0}, 1.0f}});
}

float StencilKernel::weight(Offset offset) const {
  auto it = weights_.find(offset);
  return it == weights_.end() ? 0.0f : it->second;
}

std::vector<Offset> StencilKernel::natural_order() const {
  std::vector<Offset> out;
  out.reserve(weights_.size());
  for (const auto& [off, w] : weights_) out.push_back(off);
  return out;
}

std::vector<Offset> StencilKernel::compute_order() const {
  std::vector<Offset> out{{0, 0}};
  for (const auto& [off, w] : weights_) {
    if (off != Offset{0, 0}) out.push_back(off);
  }
  return out;
}

GlobalGrid::GlobalGrid(int rows, int cols, float fill)
    : GlobalGrid(rows, cols,
                 std::vector<float>(static_cast<std::size_t>(std::max(rows, 0)) *
                                        static_cast<std::size_t>(std::max(cols, 0)),
                                    fill)) {}

GlobalGrid::GlobalGrid(int rows, int cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ < 1 || cols_ < 1) throw ConfigError("grid dimensions must be >= 1");
  if (values_.size() != static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_)) {
    throw ShapeError("grid value count does not match rows x cols");
  }
}

GlobalGrid GlobalGrid::truncated(int rows, int cols) const {
  if (rows > rows_ || cols > cols_) throw ShapeError("truncation larger than grid");
  GlobalGrid out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(&values_[static_cast<std::size_t>(r) * cols_], cols, &out.at(r, 0));
  }
  return out;
}

bool GlobalGrid::operator==(const GlobalGrid& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0);
}

TileGeometry TileGeometry::make(int pe_rows, int pe_cols, int tile_h, int tile_w, int radius) {
  if (pe_rows < 1 || pe_cols < 1) throw ConfigError("PE grid dimensions must be >= 1");
  if (radius < 1) throw ConfigError("radius must be >= 1");
  if (tile_h <= radius || tile_w <= radius) {
    throw ConfigError("tile " + std::to_string(tile_h) + "x" + std::to_string(tile_w) +
                      " must exceed radius " + std::to_string(radius) + " in both dimensions");
  }
  return TileGeometry{pe_rows, pe_cols, tile_h, tile_w, radius};
}

GlobalGrid global_pad(const GlobalGrid& grid, int pe_rows, int pe_cols) {
  if (pe_rows < 1 || pe_cols < 1) throw PreconditionError("PE grid dimensions must be >= 1");
  const int rows = (grid.rows() + pe_rows - 1) / pe_rows * pe_rows;
  const int cols = (grid.cols() + pe_cols - 1) / pe_cols * pe_cols;
  GlobalGrid out(rows, cols, 0.0f);
  for (int r = 0; r < grid.rows(); ++r) {
    std::copy_n(grid.values().begin() + static_cast<std::ptrdiff_t>(r) * grid.cols(), grid.cols(), &out.at(r, 0));
  }
  return out;
}

std::vector<Tile> partition(const GlobalGrid& padded, const TileGeometry& geom) {
  if (padded.rows() != geom.padded_rows() || padded.cols() != geom.padded_cols()) {
    throw PreconditionError("padded grid " + std::to_string(padded.rows()) + "x" +
                            std::to_string(padded.cols()) + " does not match " +
                            std::to_string(geom.pe_rows) + "x" + std::to_string(geom.pe_cols) +
                            " PEs of " + std::to_string(geom.tile_h) + "x" +
                            std::to_string(geom.tile_w) + " tiles");
  }
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<std::size_t>(geom.pe_rows) * geom.pe_cols);
  for (int pr = 0; pr < geom.pe_rows; ++pr) {
    for (int pc = 0; pc < geom.pe_cols; ++pc) {
      Tile t{geom, pr, pc, std::vector<float>(geom.buffer_size(), 0.0f)};
      for (int r = 0; r < geom.tile_h; ++r) {
        for (int c = 0; c < geom.tile_w; ++c) {
          t.interior(r, c) = padded.at(pr * geom.tile_h + r, pc * geom.tile_w + c);
        }
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

GlobalGrid reassemble(std::span<const Tile> tiles, int original_rows, int original_cols) {
  if (tiles.empty()) throw IntegrityError("no tiles to reassemble");
  const TileGeometry geom = tiles.front().geometry;
  std::set<std::pair<int, int>> seen;
  for (const auto& t : tiles) {
    if (t.geometry != geom) throw IntegrityError("tiles have inconsistent geometry");
    if (t.pe_row < 0 || t.pe_row >= geom.pe_rows || t.pe_col < 0 || t.pe_col >= geom.pe_cols) {
      throw IntegrityError("tile position outside the PE grid");
    }
    if (!seen.insert({t.pe_row, t.pe_col}).second) {
      throw IntegrityError("duplicate tile at PE (" + std::to_string(t.pe_row) + "," +
                           std::to_string(t.pe_col) + ")");
    }
    if (t.buffer.size() != geom.buffer_size()) throw IntegrityError("tile buffer size mismatch");
  }
  if (seen.size() != static_cast<std::size_t>(geom.pe_rows) * geom.pe_cols) {
    throw IntegrityError("missing tiles: have " + std::to_string(seen.size()) + " of " +
                         std::to_string(geom.pe_rows * geom.pe_cols));
  }
  if (original_rows > geom.padded_rows() || original_cols > geom.padded_cols()) {
    throw IntegrityError("original extent exceeds the tiled extent");
  }
  GlobalGrid padded(geom.padded_rows(), geom.padded_cols());
  for (const auto& t : tiles) {
    for (int r = 0; r < geom.tile_h; ++r) {
      for (int c = 0; c < geom.tile_w; ++c) {
        padded.at(t.pe_row * geom.tile_h + r, t.pe_col * geom.tile_w + c) = t.interior(r, c);
      }
    }
  }
  return padded.truncated(original_rows, original_cols);
}

TileGeometry geometry_for(const GlobalGrid& grid, int pe_rows, int pe_cols, int radius) {
  if (pe_rows < 1 || pe_cols < 1) throw ConfigError("PE grid dimensions must be >= 1");
  const int tile_h = (grid.rows() + pe_rows - 1) / pe_rows;
  const int tile_w = (grid.cols() + pe_cols - 1) / pe_cols;
  return TileGeometry::make(pe_rows, pe_cols, tile_h, tile_w, radius);
}

}  // namespace wafermesh
