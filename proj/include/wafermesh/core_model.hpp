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

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wafermesh {

enum class StencilShape { Star, Box };

std::string to_string(StencilShape shape);
StencilShape parse_shape(const std::string& text);

/// Relative neighbour position; ordering is row-major (dy first, then dx).
struct Offset {
  int dy = 0;
  int dx = 0;

  auto operator<=>(const Offset&) const = default;
};

/// A validated 2D stencil: shape, radius and the weight of every listed
/// offset. Offsets that are not listed carry no weight and cost nothing.
class StencilKernel {
 public:
  StencilKernel(StencilShape shape, int radius, std::map<Offset, float> weights);

  /// Normalised diffusion kernel: every point of the full pattern gets
  /// roughly 1/p, rounded so the exact weight sum never exceeds 1.
  static StencilKernel heat(StencilShape shape, int radius);
  /// Every point of the full pattern gets weight `w`.
  static StencilKernel uniform(StencilShape shape, int radius, float w);
  /// Centre weight only.
  static StencilKernel identity(StencilShape shape = StencilShape::Star, int radius = 1);

  StencilShape shape() const { return shape_; }
  int radius() const { return radius_; }
  const std::map<Offset, float>& weights() const { return weights_; }
  std::size_t point_count() const { return weights_.size(); }
  float weight(Offset offset) const;
  float center_weight() const { return weight({0, 0}); }

  /// All weighted offsets, row-major.
  std::vector<Offset> natural_order() const;
  /// Centre first, then the remaining weighted offsets row-major. This is
  /// the order the on-mesh update applies weights in.
  std::vector<Offset> compute_order() const;

  /// Offsets of the full pattern (4r+1 for star, (2r+1)^2 for box).
  static std::vector<Offset> pattern_offsets(StencilShape shape, int radius);

 private:
  StencilShape shape_;
  int radius_;
  std::map<Offset, float> weights_;
};

/// Row-major binary32 grid.
class GlobalGrid {
 public:
  GlobalGrid() = default;
  GlobalGrid(int rows, int cols, float fill = 0.0f);
  GlobalGrid(int rows, int cols, std::vector<float> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  float& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  float at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  /// Top-left `rows` x `cols` window.
  GlobalGrid truncated(int rows, int cols) const;

  bool operator==(const GlobalGrid& other) const;  // bitwise

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> values_;
};

/// PE-grid shape plus per-PE interior tile and halo radius.
struct TileGeometry {
  int pe_rows = 1;
  int pe_cols = 1;
  int tile_h = 1;
  int tile_w = 1;
  int radius = 1;

  /// Validates pe dims >= 1 and tile_h, tile_w > radius >= 1.
  static TileGeometry make(int pe_rows, int pe_cols, int tile_h, int tile_w, int radius);

  int buffer_rows() const { return tile_h + 2 * radius; }
  int buffer_cols() const { return tile_w + 2 * radius; }
  std::size_t buffer_size() const {
    return static_cast<std::size_t>(buffer_rows()) * buffer_cols();
  }
  int padded_rows() const { return pe_rows * tile_h; }
  int padded_cols() const { return pe_cols * tile_w; }

  bool operator==(const TileGeometry&) const = default;
};

/// One PE's share of the grid, stored row-major including its halo ring.
struct Tile {
  TileGeometry geometry;
  int pe_row = 0;
  int pe_col = 0;
  std::vector<float> buffer;

  float& interior(int r, int c) {
    return buffer[static_cast<std::size_t>(r + geometry.radius) * geometry.buffer_cols() +
                  (c + geometry.radius)];
  }
  float interior(int r, int c) const {
    return buffer[static_cast<std::size_t>(r + geometry.radius) * geometry.buffer_cols() +
                  (c + geometry.radius)];
  }
  float& cell(int buffer_row, int buffer_col) {
    return buffer[static_cast<std::size_t>(buffer_row) * geometry.buffer_cols() + buffer_col];
  }
  float cell(int buffer_row, int buffer_col) const {
    return buffer[static_cast<std::size_t>(buffer_row) * geometry.buffer_cols() + buffer_col];
  }
};

/// Zero-pads bottom/right so the grid divides evenly into the PE grid.
GlobalGrid global_pad(const GlobalGrid& grid, int pe_rows, int pe_cols);

/// Splits a padded grid into one halo-padded tile per PE (row-major PE order).
std::vector<Tile> partition(const GlobalGrid& padded, const TileGeometry& geom);

/// Inverse of partition; the result is truncated to the original extent.
GlobalGrid reassemble(std::span<const Tile> tiles, int original_rows, int original_cols);

/// Convenience: global_pad + partition for the geometry implied by the grid.
TileGeometry geometry_for(const GlobalGrid& grid, int pe_rows, int pe_cols, int radius);

}  // namespace wafermesh
