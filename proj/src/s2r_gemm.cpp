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

#include "wafermesh/s2r_gemm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "wafermesh/error.hpp"

namespace wafermesh::s2r {

float tf32_round(float x) {
  if (!std::isfinite(x)) return x;
  std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t lsb = (bits >> 13) & 1u;
  bits += 0x0FFFu + lsb;
  bits &= ~0x1FFFu;
  return std::bit_cast<float>(bits);
}

bool is_tf32(float x) { return !std::isfinite(x) || (std::bit_cast<std::uint32_t>(x) & 0x1FFFu) == 0; }

MmaShape mma_shape(Precision p) { return p == Precision::F64Model ? MmaShape{8, 4, 8} : MmaShape{16, 8, 16}; }

namespace {

std::pair<int, int> dims_of(Role role, Precision p) {
  const MmaShape s = mma_shape(p);
  switch (role) {
    case Role::A: return {s.m, s.k};
    case Role::B: return {s.k, s.n};
    case Role::C: return {s.m, s.n};
  }
  return {0, 0};
}

const char* role_name(Role r) { return r == Role::A ? "A" : r == Role::B ? "B" : "C"; }

}  // namespace

Fragment::Fragment(Role role, Precision precision) : role_(role), precision_(precision) {
  std::tie(rows_, cols_) = dims_of(role, precision);
  values_.assign(static_cast<std::size_t>(rows_) * cols_, 0.0);
}

Fragment::Fragment(Role role, Precision precision, std::vector<double> values) : Fragment(role, precision) {
  if (values.size() != values_.size()) {
    throw ShapeError(std::string("fragment ") + role_name(role) + " needs " + std::to_string(values_.size()) +
                     " values, got " + std::to_string(values.size()));
  }
  values_ = std::move(values);
}

Fragment mma(const Fragment& a, const Fragment& b, const Fragment& c) {
  if (a.role() != Role::A || b.role() != Role::B || c.role() != Role::C) {
    throw ShapeError("mma operands must be A, B and C fragments");
  }
  if (a.precision() != b.precision() || a.precision() != c.precision()) {
    throw ShapeError("mma operands mix precisions");
  }
  const Precision p = a.precision();
  const MmaShape s = mma_shape(p);
  Fragment d(Role::C, p);
  if (p == Precision::F64Model) {
    for (int i = 0; i < s.m; ++i) {
      for (int j = 0; j < s.n; ++j) {
        double acc = c.at(i, j);
        for (int k = 0; k < s.k; ++k) acc = acc + a.at(i, k) * b.at(k, j);
        d.at(i, j) = acc;
      }
    }
    return d;
  }
  for (double v : a.values()) {
    if (!is_tf32(static_cast<float>(v)) || static_cast<double>(static_cast<float>(v)) != v) {
      throw PreconditionError("TF32 A fragment holds a value that is not tf32-rounded");
    }
  }
  for (double v : b.values()) {
    if (!is_tf32(static_cast<float>(v)) || static_cast<double>(static_cast<float>(v)) != v) {
      throw PreconditionError("TF32 B fragment holds a value that is not tf32-rounded");
    }
  }
  for (int i = 0; i < s.m; ++i) {
    for (int j = 0; j < s.n; ++j) {
      float acc = static_cast<float>(c.at(i, j));
      for (int k = 0; k < s.k; ++k) {
        const float product = static_cast<float>(a.at(i, k)) * static_cast<float>(b.at(k, j));
        acc = acc + product;
      }
      d.at(i, j) = acc;
    }
  }
  return d;
}

TessellationInput TessellationInput::zeros(int tiles_per_vitrolite) {
  if (tiles_per_vitrolite < 1) throw PreconditionError("a Vitrolite needs at least one tile");
  TessellationInput t;
  for (auto& v : t.vitrolite) v.assign(static_cast<std::size_t>(tiles_per_vitrolite), TilePair{});
  return t;
}

TessellationStats& TessellationStats::operator+=(const TessellationStats& o) {
  mma_per_vitrolite[0] += o.mma_per_vitrolite[0];
  mma_per_vitrolite[1] += o.mma_per_vitrolite[1];
  mma_calls += o.mma_calls;
  scalar_macs += o.scalar_macs;
  zero_b_macs += o.zero_b_macs;
  right_half_zero = right_half_zero && o.right_half_zero;
  return *this;
}

namespace {

void check_input(const TessellationInput& in) {
  if (in.vitrolite[0].empty() || in.vitrolite[0].size() != in.vitrolite[1].size()) {
    throw ShapeError("both Vitrolites need the same non-zero tile count");
  }
}

}  // namespace

Block8x8 dual_tessellation_f64(const TessellationInput& input, TessellationStats* stats) {
  check_input(input);
  Fragment acc(Role::C, Precision::F64Model);
  TessellationStats local;
  for (int v = 0; v < 2; ++v) {
    for (const TilePair& tp : input.vitrolite[static_cast<std::size_t>(v)]) {
      const Fragment a(Role::A, Precision::F64Model, {tp.a.begin(), tp.a.end()});
      const Fragment b(Role::B, Precision::F64Model, {tp.b.begin(), tp.b.end()});
      acc = mma(a, b, acc);
      ++local.mma_per_vitrolite[static_cast<std::size_t>(v)];
      ++local.mma_calls;
      local.scalar_macs += 8 * 4 * 8;
    }
  }
  if (stats != nullptr) *stats += local;
  Block8x8 out{};
  std::copy(acc.values().begin(), acc.values().end(), out.begin());
  return out;
}

Block8x8 dual_tessellation_tf32(const TessellationInput& input, TessellationStats* stats) {
  check_input(input);
  std::array<float, 64> acc{};
  TessellationStats local;
  for (int v = 0; v < 2; ++v) {
    for (const TilePair& tp : input.vitrolite[static_cast<std::size_t>(v)]) {
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          float sum = acc[static_cast<std::size_t>(i * 8 + j)];
          for (int k = 0; k < 4; ++k) {
            const float product = tf32_round(static_cast<float>(tp.a[static_cast<std::size_t>(i * 4 + k)])) *
                                  tf32_round(static_cast<float>(tp.b[static_cast<std::size_t>(k * 8 + j)]));
            sum = sum + product;
          }
          acc[static_cast<std::size_t>(i * 8 + j)] = sum;
        }
      }
      ++local.mma_per_vitrolite[static_cast<std::size_t>(v)];
      ++local.mma_calls;
      local.scalar_macs += 8 * 4 * 8;
    }
  }
  if (stats != nullptr) *stats += local;
  Block8x8 out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = acc[i];
  return out;
}

std::pair<Fragment, Fragment> pack_fragments(const TessellationInput& dt1, const TessellationInput& dt2,
                                             int vitrolite, int k) {
  check_input(dt1);
  check_input(dt2);
  if (dt1.tiles() != dt2.tiles()) throw ShapeError("packed tessellations differ in tile count");
  if (vitrolite < 0 || vitrolite > 1) throw PreconditionError("vitrolite index must be 0 or 1");
  if (k < 0 || k >= dt1.tiles() || k % 2 != 0) {
    throw PreconditionError("tile index " + std::to_string(k) + " is not an even index below " +
                            std::to_string(dt1.tiles()));
  }
  const auto& v1 = dt1.vitrolite[static_cast<std::size_t>(vitrolite)];
  const auto& v2 = dt2.vitrolite[static_cast<std::size_t>(vitrolite)];
  static const TilePair kZero{};
  auto tile = [&](const std::vector<TilePair>& v, int idx) -> const TilePair& {
    return idx < static_cast<int>(v.size()) ? v[static_cast<std::size_t>(idx)] : kZero;
  };
  for (int t = k; t < k + 2; ++t) {
    if (tile(v1, t).b != tile(v2, t).b) {
      throw PreconditionError("packed tessellations must share their weight tiles");
    }
  }
  Fragment a(Role::A, Precision::TF32Model);
  Fragment b(Role::B, Precision::TF32Model);
  auto load = [](double v) { return static_cast<double>(tf32_round(static_cast<float>(v))); };
  for (int half = 0; half < 2; ++half) {
    const auto& v = half == 0 ? v1 : v2;
    for (int t = 0; t < 2; ++t) {
      const TilePair& tp = tile(v, k + t);
      for (int i = 0; i < 8; ++i) {
        for (int kk = 0; kk < 4; ++kk) a.at(half * 8 + i, t * 4 + kk) = load(tp.a[static_cast<std::size_t>(i * 4 + kk)]);
      }
    }
  }
  for (int t = 0; t < 2; ++t) {
    const TilePair& tp = tile(v1, k + t);
    for (int kk = 0; kk < 4; ++kk) {
      for (int j = 0; j < 8; ++j) b.at(t * 4 + kk, j) = load(tp.b[static_cast<std::size_t>(kk * 8 + j)]);
    }
  }
  return {std::move(a), std::move(b)};
}

std::pair<Block8x8, Block8x8> packed_dual_tessellation_tf32(const TessellationInput& dt1,
                                                            const TessellationInput& dt2,
                                                            TessellationStats* stats) {
  Fragment acc(Role::C, Precision::TF32Model);
  TessellationStats local;
  for (int v = 0; v < 2; ++v) {
    for (int k = 0; k < dt1.tiles(); k += 2) {
      const auto [a, b] = pack_fragments(dt1, dt2, v, k);
      acc = mma(a, b, acc);
      ++local.mma_per_vitrolite[static_cast<std::size_t>(v)];
      ++local.mma_calls;
      local.scalar_macs += 16 * 8 * 16;
      local.zero_b_macs += 16 * 8 * 8;  // every row of A against B's 8 padded columns
      for (int i = 0; i < 16; ++i) {
        for (int j = 8; j < 16; ++j) local.right_half_zero = local.right_half_zero && acc.at(i, j) == 0.0;
      }
    }
  }
  if (stats != nullptr) *stats += local;
  Block8x8 upper{};
  Block8x8 lower{};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      upper[static_cast<std::size_t>(i * 8 + j)] = acc.at(i, j);
      lower[static_cast<std::size_t>(i * 8 + j)] = acc.at(8 + i, j);
    }
  }
  return {upper, lower};
}

Stencil2Row stencil2row(const GlobalGrid& grid, const StencilKernel& kernel) {
  if (kernel.shape() != StencilShape::Star) throw PreconditionError("stencil2row supports star kernels only");
  if (grid.rows() < 1 || grid.cols() < 1) throw PreconditionError("grid must be non-empty");
  Stencil2Row s;
  const int r = kernel.radius();
  s.grid_rows = grid.rows();
  s.grid_cols = grid.cols();
  s.radius = r;
  s.blocks = (grid.cols() + 7) / 8;
  s.ka = 8 + 2 * r;
  s.kb = 16 * r;
  s.mat_a.assign(static_cast<std::size_t>(s.m()) * s.ka, 0.0);
  s.mat_b.assign(static_cast<std::size_t>(s.m()) * s.kb, 0.0);
  s.weights_a.assign(static_cast<std::size_t>(s.ka) * 8, 0.0);
  s.weights_b.assign(static_cast<std::size_t>(s.kb) * 8, 0.0);

  auto sample = [&](int y, int x) -> double {
    if (y < 0 || x < 0 || y >= grid.rows() || x >= grid.cols()) return 0.0;
    return grid.at(y, x);
  };
  std::vector<int> dys;
  for (int dy = -r; dy <= r; ++dy) {
    if (dy != 0) dys.push_back(dy);
  }
  for (int y = 0; y < grid.rows(); ++y) {
    for (int cb = 0; cb < s.blocks; ++cb) {
      const std::size_t row = static_cast<std::size_t>(y) * s.blocks + cb;
      for (int t = 0; t < s.ka; ++t) s.mat_a[row * s.ka + t] = sample(y, 8 * cb - r + t);
      for (std::size_t q = 0; q < dys.size(); ++q) {
        for (int c = 0; c < 8; ++c) s.mat_b[row * s.kb + q * 8 + c] = sample(y + dys[q], 8 * cb + c);
      }
    }
  }
  for (int t = 0; t < s.ka; ++t) {
    for (int j = 0; j < 8; ++j) {
      const int dx = t - r - j;
      if (dx >= -r && dx <= r) s.weights_a[static_cast<std::size_t>(t) * 8 + j] = kernel.weight({0, dx});
    }
  }
  for (std::size_t q = 0; q < dys.size(); ++q) {
    for (int c = 0; c < 8; ++c) s.weights_b[(q * 8 + c) * 8 + c] = kernel.weight({dys[q], 0});
  }
  return s;
}

GlobalGrid stencil2row_apply(const Stencil2Row& s) {
  GlobalGrid out(s.grid_rows, s.grid_cols, 0.0f);
  for (int y = 0; y < s.grid_rows; ++y) {
    for (int cb = 0; cb < s.blocks; ++cb) {
      const int row = y * s.blocks + cb;
      for (int j = 0; j < 8 && 8 * cb + j < s.grid_cols; ++j) {
        double acc = 0.0;
        for (int t = 0; t < s.ka; ++t) acc += s.a(row, t) * s.wa(t, j);
        for (int t = 0; t < s.kb; ++t) acc += s.b(row, t) * s.wb(t, j);
        out.at(y, 8 * cb + j) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

TessellationInput tessellate(const Stencil2Row& s, int row_block, int cb, int tiles_per_vitrolite) {
  const int need_a = (s.ka + 3) / 4;
  const int need_b = (s.kb + 3) / 4;
  if (need_a > tiles_per_vitrolite || need_b > tiles_per_vitrolite) {
    throw PreconditionError("radius " + std::to_string(s.radius) + " needs " + std::to_string(std::max(need_a, need_b)) +
                            " tiles per Vitrolite, only " + std::to_string(tiles_per_vitrolite) + " available");
  }
  if (row_block < 0 || cb < 0 || 8 * row_block >= s.grid_rows || cb >= s.blocks) {
    throw PreconditionError("output block outside the grid");
  }
  TessellationInput in = TessellationInput::zeros(tiles_per_vitrolite);
  for (int v = 0; v < 2; ++v) {
    const int width = v == 0 ? s.ka : s.kb;
    for (int k = 0; k < tiles_per_vitrolite; ++k) {
      TilePair& tp = in.vitrolite[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)];
      for (int kk = 0; kk < 4; ++kk) {
        const int col = 4 * k + kk;
        if (col >= width) continue;
        for (int i = 0; i < 8; ++i) {
          const int y = 8 * row_block + i;
          if (y >= s.grid_rows) continue;
          const int row = y * s.blocks + cb;
          tp.a[static_cast<std::size_t>(i * 4 + kk)] = v == 0 ? s.a(row, col) : s.b(row, col);
        }
        for (int j = 0; j < 8; ++j) tp.b[static_cast<std::size_t>(kk * 8 + j)] = v == 0 ? s.wa(col, j) : s.wb(col, j);
      }
    }
  }
  return in;
}

namespace {

void scatter(GlobalGrid& out, const Block8x8& c, int row_block, int cb) {
  for (int i = 0; i < 8; ++i) {
    const int y = 8 * row_block + i;
    if (y >= out.rows()) break;
    for (int j = 0; j < 8; ++j) {
      const int x = 8 * cb + j;
      if (x >= out.cols()) break;
      out.at(y, x) = static_cast<float>(c[static_cast<std::size_t>(i * 8 + j)]);
    }
  }
}

}  // namespace

PipelineResult s2r_full_pipeline(const GlobalGrid& grid, const StencilKernel& kernel, Precision precision,
                                 int tiles_per_vitrolite) {
  const Stencil2Row s = stencil2row(grid, kernel);
  PipelineResult res;
  res.grid = GlobalGrid(grid.rows(), grid.cols(), 0.0f);
  std::vector<std::pair<int, int>> blocks;
  for (int rb = 0; rb < (grid.rows() + 7) / 8; ++rb) {
    for (int cb = 0; cb < s.blocks; ++cb) blocks.emplace_back(rb, cb);
  }
  if (precision == Precision::F64Model) {
    for (const auto& [rb, cb] : blocks) {
      scatter(res.grid, dual_tessellation_f64(tessellate(s, rb, cb, tiles_per_vitrolite), &res.stats), rb, cb);
      ++res.tessellations;
    }
    return res;
  }
  for (std::size_t i = 0; i < blocks.size(); i += 2) {
    const TessellationInput dt1 = tessellate(s, blocks[i].first, blocks[i].second, tiles_per_vitrolite);
    TessellationInput dt2;
    if (i + 1 < blocks.size()) {
      dt2 = tessellate(s, blocks[i + 1].first, blocks[i + 1].second, tiles_per_vitrolite);
    } else {
      dt2 = dt1;
      for (auto& v : dt2.vitrolite) {
        for (auto& tp : v) tp.a.fill(0.0);
      }
    }
    const auto [c1, c2] = packed_dual_tessellation_tf32(dt1, dt2, &res.stats);
    scatter(res.grid, c1, blocks[i].first, blocks[i].second);
    ++res.tessellations;
    if (i + 1 < blocks.size()) {
      scatter(res.grid, c2, blocks[i + 1].first, blocks[i + 1].second);
      ++res.tessellations;
    }
  }
  return res;
}

}  // namespace wafermesh::s2r
