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

#include "wafermesh/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>

#include "wafermesh/error.hpp"

namespace wafermesh::oracle {

WeightOrder::WeightOrder(const StencilKernel& kernel, std::vector<Offset> offsets)
    : offsets_(std::move(offsets)) {
  if (offsets_.empty() || offsets_.front() != Offset{0, 0}) {
    throw PreconditionError("weight order must start with the centre offset");
  }
  std::set<Offset> seen(offsets_.begin(), offsets_.end());
  if (seen.size() != offsets_.size()) throw PreconditionError("weight order repeats an offset");
  if (seen.size() != kernel.point_count()) {
    throw PreconditionError("weight order has " + std::to_string(seen.size()) +
                            " offsets, kernel has " + std::to_string(kernel.point_count()));
  }
  for (const Offset& o : offsets_) {
    if (!kernel.weights().contains(o)) {
      throw PreconditionError("weight order names offset (" + std::to_string(o.dy) + "," +
                              std::to_string(o.dx) + ") which the kernel does not weight");
    }
  }
}

WeightOrder WeightOrder::compute_order(const StencilKernel& kernel) {
  return WeightOrder(kernel, kernel.compute_order());
}

namespace {

float sample(const GlobalGrid& g, int r, int c) {
  if (r < 0 || c < 0 || r >= g.rows() || c >= g.cols()) return 0.0f;
  return g.at(r, c);
}

GlobalGrid apply(const GlobalGrid& grid, const StencilKernel& kernel, const std::vector<Offset>& order) {
  if (grid.rows() < 1 || grid.cols() < 1) throw PreconditionError("grid must be non-empty");
  std::vector<float> weights;
  weights.reserve(order.size());
  for (const Offset& o : order) weights.push_back(kernel.weight(o));
  GlobalGrid out(grid.rows(), grid.cols(), 0.0f);
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      float acc = weights[0] * sample(grid, r + order[0].dy, c + order[0].dx);
      for (std::size_t k = 1; k < order.size(); ++k) {
        const float product = weights[k] * sample(grid, r + order[k].dy, c + order[k].dx);
        acc = acc + product;
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

GlobalGrid jacobi_step(const GlobalGrid& grid, const StencilKernel& kernel) {
  return apply(grid, kernel, kernel.natural_order());
}

GlobalGrid jacobi_step_ordered(const GlobalGrid& grid, const StencilKernel& kernel, const WeightOrder& order) {
  return apply(grid, kernel, order.offsets());
}

GlobalGrid jacobi_iterate(const GlobalGrid& grid, const StencilKernel& kernel, const WeightOrder& order,
                          int steps) {
  if (steps < 0) throw PreconditionError("step count must be non-negative");
  GlobalGrid g = grid;
  for (int s = 0; s < steps; ++s) g = jacobi_step_ordered(g, kernel, order);
  return g;
}

std::vector<double> jacobi_step_f64(const GlobalGrid& grid, const StencilKernel& kernel) {
  if (grid.rows() < 1 || grid.cols() < 1) throw PreconditionError("grid must be non-empty");
  std::vector<double> out(grid.size(), 0.0);
  const auto order = kernel.natural_order();
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      double acc = 0.0;
      for (const Offset& o : order) {
        acc += static_cast<double>(kernel.weight(o)) * static_cast<double>(sample(grid, r + o.dy, c + o.dx));
      }
      out[static_cast<std::size_t>(r) * grid.cols() + c] = acc;
    }
  }
  return out;
}

CompareReport compare(const GlobalGrid& a, const GlobalGrid& b, CompareMode mode) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("cannot compare " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " with " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  CompareReport rep;
  bool worst_bad = false;
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) {
      const float x = a.at(r, c);
      const float y = b.at(r, c);
      double err = 0.0;
      bool bad = false;
      if (mode.kind == CompareMode::Kind::BitExact) {
        bad = std::bit_cast<std::uint32_t>(x) != std::bit_cast<std::uint32_t>(y);
        err = bad ? std::fabs(static_cast<double>(x) - static_cast<double>(y)) : 0.0;
        if (bad && std::isnan(err)) err = INFINITY;
      } else {
        const double dx = x;
        const double dy = y;
        const double diff = std::fabs(dx - dy);
        if (mode.kind == CompareMode::Kind::MaxAbs) {
          err = diff;
        } else {
          const double scale = std::max(std::fabs(dx), std::fabs(dy));
          err = scale == 0.0 ? 0.0 : diff / scale;
        }
        if (std::isnan(err)) err = INFINITY;
        bad = !(err <= mode.tolerance);
      }
      if (bad) ++rep.mismatches;
      // Mismatching cells outrank matching ones, then larger error wins.
      const bool worse = bad != worst_bad ? bad : err > rep.worst_error;
      if (worse && (bad || err > 0.0)) {
        worst_bad = bad;
        rep.worst_row = r;
        rep.worst_col = c;
        rep.worst_a = x;
        rep.worst_b = y;
        rep.worst_error = err;
      }
    }
  }
  rep.pass = rep.mismatches == 0;
  return rep;
}

std::string CompareReport::describe() const {
  std::ostringstream out;
  out.precision(9);
  out << (pass ? "pass" : "fail") << ": " << mismatches << " mismatching cells";
  if (worst_row >= 0) {
    out << ", worst at (" << worst_row << "," << worst_col << ") " << worst_a << " vs " << worst_b
        << " error " << worst_error;
  }
  return out.str();
}

double max_abs_diff(const GlobalGrid& a, const GlobalGrid& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("grid shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]));
    if (std::isnan(d)) return INFINITY;
    m = std::max(m, d);
  }
  return m;
}

}  // namespace wafermesh::oracle
