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

#include <string>
#include <vector>

#include "wafermesh/core_model.hpp"

namespace wafermesh::oracle {

/// Accumulation order for one Jacobi update: centre first, then every other
/// weighted offset of the kernel exactly once.
class WeightOrder {
 public:
  WeightOrder(const StencilKernel& kernel, std::vector<Offset> offsets);

  /// The order the on-mesh update uses.
  static WeightOrder compute_order(const StencilKernel& kernel);

  const std::vector<Offset>& offsets() const { return offsets_; }

 private:
  std::vector<Offset> offsets_;
};

/// One zero-boundary Jacobi step in binary32, accumulating left to right in
/// the kernel's row-major offset order.
GlobalGrid jacobi_step(const GlobalGrid& grid, const StencilKernel& kernel);

/// One step with the given order: acc = w0*u0, then acc = acc + wk*uk with
/// the product and the sum each rounded.
GlobalGrid jacobi_step_ordered(const GlobalGrid& grid, const StencilKernel& kernel,
                               const WeightOrder& order);

/// `steps` applications of jacobi_step_ordered.
GlobalGrid jacobi_iterate(const GlobalGrid& grid, const StencilKernel& kernel,
                          const WeightOrder& order, int steps);

/// Binary64 reference of jacobi_step over binary32 inputs.
std::vector<double> jacobi_step_f64(const GlobalGrid& grid, const StencilKernel& kernel);

struct CompareMode {
  enum class Kind { BitExact, MaxRel, MaxAbs };
  Kind kind = Kind::BitExact;
  double tolerance = 0.0;

  static CompareMode bitexact() { return {Kind::BitExact, 0.0}; }
  static CompareMode max_rel(double tol) { return {Kind::MaxRel, tol}; }
  static CompareMode max_abs(double tol) { return {Kind::MaxAbs, tol}; }
};

struct CompareReport {
  bool pass = true;
  std::size_t mismatches = 0;  // cells outside tolerance
  int worst_row = -1;          // -1 when every cell is exactly equal
  int worst_col = -1;
  float worst_a = 0.0f;
  float worst_b = 0.0f;
  double worst_error = 0.0;  // abs or rel, matching the mode

  std::string describe() const;
};

/// Relative error is |a-b| / max(|a|,|b|), zero when both are zero.
CompareReport compare(const GlobalGrid& a, const GlobalGrid& b, CompareMode mode);

/// max |a-b| over all cells.
double max_abs_diff(const GlobalGrid& a, const GlobalGrid& b);

}  // namespace wafermesh::oracle
