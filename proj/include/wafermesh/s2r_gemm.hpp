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
#include <utility>
#include <vector>

#include "wafermesh/core_model.hpp"

namespace wafermesh::s2r {

/// Rounds the significand to 10 explicit bits, ties to even. Non-finite
/// values pass through.
float tf32_round(float x);
bool is_tf32(float x);

enum class Precision { F64Model, TF32Model };
enum class Role { A, B, C };

/// m, k, n of one MMA for the given precision.
struct MmaShape {
  int m, k, n;
};
MmaShape mma_shape(Precision p);

/// Dense row-major MMA operand.
class Fragment {
 public:
  Fragment(Role role, Precision precision);
  Fragment(Role role, Precision precision, std::vector<double> values);

  Role role() const { return role_; }
  Precision precision() const { return precision_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  const std::vector<double>& values() const { return values_; }

 private:
  Role role_;
  Precision precision_;
  int rows_;
  int cols_;
  std::vector<double> values_;
};

/// D = C + A*B, accumulating k = 0..K-1 in order. TF32Model works in
/// binary32 and requires tf32-valued A and B; F64Model works in binary64.
Fragment mma(const Fragment& a, const Fragment& b, const Fragment& c);

using Block8x4 = std::array<double, 32>;  // row-major 8x4
using Block4x8 = std::array<double, 32>;  // row-major 4x8
using Block8x8 = std::array<double, 64>;  // row-major 8x8

struct TilePair {
  Block8x4 a{};
  Block4x8 b{};
};

inline constexpr int kDefaultTilesPerVitrolite = 13;

/// Both Vitrolites of one 8x8 output block: vitrolite[0] is the Matrix A
/// path, vitrolite[1] the Matrix B path.
struct TessellationInput {
  std::array<std::vector<TilePair>, 2> vitrolite;

  static TessellationInput zeros(int tiles_per_vitrolite = kDefaultTilesPerVitrolite);
  int tiles() const { return static_cast<int>(vitrolite[0].size()); }
};

struct TessellationStats {
  std::array<int, 2> mma_per_vitrolite{};
  std::uint64_t mma_calls = 0;
  std::uint64_t scalar_macs = 0;
  std::uint64_t zero_b_macs = 0;  // MACs against the zero-padded half of B
  bool right_half_zero = true;    // accumulator right half after every packed MMA

  TessellationStats& operator+=(const TessellationStats& o);
};

/// Sum over both Vitrolites of A_k*B_k as sequential F64Model MMAs into one
/// accumulator.
Block8x8 dual_tessellation_f64(const TessellationInput& input, TessellationStats* stats = nullptr);

/// Same sequence with tf32-rounded operands and binary32 accumulation,
/// without packing.
Block8x8 dual_tessellation_tf32(const TessellationInput& input, TessellationStats* stats = nullptr);

/// Packs tiles k and k+1 of one Vitrolite from two tessellations. A: upper
/// 8x8 = [A_k | A_k+1] of dt1, lower = dt2. B: left 8x8 = [B_k ; B_k+1],
/// right 8x8 = 0. Tile k+1 past the end is zero. Operands are tf32-rounded.
std::pair<Fragment, Fragment> pack_fragments(const TessellationInput& dt1, const TessellationInput& dt2,
                                             int vitrolite, int k);

/// Packed TF32 path: ceil(tiles/2) MMAs per Vitrolite into one 16x16
/// accumulator; returns its upper-left (dt1) and lower-left (dt2) blocks.
std::pair<Block8x8, Block8x8> packed_dual_tessellation_tf32(const TessellationInput& dt1,
                                                            const TessellationInput& dt2,
                                                            TessellationStats* stats = nullptr);

/// Two GEMM operands per path: out = mat_a * weights_a + mat_b * weights_b.
///
/// Rows are (y, column block of 8): row = y * blocks + cb.
///   mat_a row  = grid[y][8cb - r .. 8cb + 8 + r), zero outside the grid
///   weights_a  = (8 + 2r) x 8 Toeplitz band, weights_a[t][j] = w(0, t - r - j)
///   mat_b row  = grid[y + dy][8cb .. 8cb + 8) for dy = -r..-1, 1..r
///   weights_b  = 16r x 8, block (dy) = w(dy, 0) * I8
struct Stencil2Row {
  int grid_rows = 0;
  int grid_cols = 0;
  int radius = 0;
  int blocks = 0;  // column blocks of 8
  int ka = 0;      // columns of mat_a
  int kb = 0;      // columns of mat_b
  std::vector<double> mat_a, weights_a, mat_b, weights_b;

  int m() const { return grid_rows * blocks; }
  double a(int row, int col) const { return mat_a[static_cast<std::size_t>(row) * ka + col]; }
  double b(int row, int col) const { return mat_b[static_cast<std::size_t>(row) * kb + col]; }
  double wa(int t, int j) const { return weights_a[static_cast<std::size_t>(t) * 8 + j]; }
  double wb(int t, int j) const { return weights_b[static_cast<std::size_t>(t) * 8 + j]; }
};

/// Star kernels only.
Stencil2Row stencil2row(const GlobalGrid& grid, const StencilKernel& kernel);

/// Plain binary64 GEMMs of the layout scattered back to the grid.
GlobalGrid stencil2row_apply(const Stencil2Row& s);

/// Tessellation of the 8x8 output block covering grid rows [8 * row_block,
/// +8) and column block `cb`.
TessellationInput tessellate(const Stencil2Row& s, int row_block, int cb,
                             int tiles_per_vitrolite = kDefaultTilesPerVitrolite);

struct PipelineResult {
  GlobalGrid grid;
  TessellationStats stats;
  std::uint64_t tessellations = 0;
};

/// stencil2row -> tessellation -> MMAs (unpacked F64Model or packed
/// TF32Model) -> scatter.
PipelineResult s2r_full_pipeline(const GlobalGrid& grid, const StencilKernel& kernel, Precision precision,
                                 int tiles_per_vitrolite = kDefaultTilesPerVitrolite);

}  // namespace wafermesh::s2r
