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

#include "wafermesh/dsd.hpp"

#include <algorithm>
#include <string>

#include "wafermesh/error.hpp"

namespace wafermesh::dsd {

Dsd Dsd::memory(std::size_t limit, std::int64_t base, std::initializer_list<Dim> dims) {
  return memory(limit, base, std::span<const Dim>(dims.begin(), dims.size()));
}

Dsd Dsd::memory(std::size_t limit, std::int64_t base, std::span<const Dim> dims) {
  if (dims.empty() || dims.size() > kMaxDims) {
    throw ShapeError("a DSD needs 1 to 4 dimensions, got " + std::to_string(dims.size()));
  }
  Dsd d;
  d.target_ = Target::Memory;
  d.base_ = base;
  d.limit_ = limit;
  d.ndims_ = dims.size();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i].count < 0) throw ShapeError("DSD dimension count must be >= 0");
    d.dims_[i] = dims[i];
  }
  d.check_bounds();
  return d;
}

Dsd Dsd::fabric_out(Color color, std::size_t count) {
  Dsd d;
  d.target_ = Target::FabricOut;
  d.color_ = color;
  d.dims_[0] = {static_cast<std::int64_t>(count), 1};
  d.ndims_ = 1;
  return d;
}

Dsd Dsd::fabric_in(Color color, std::size_t count) {
  Dsd d = fabric_out(color, count);
  d.target_ = Target::FabricIn;
  return d;
}

std::size_t Dsd::element_count() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < ndims_; ++i) n *= static_cast<std::size_t>(dims_[i].count);
  return n;
}

std::int64_t Dsd::address(std::size_t k) const {
  std::int64_t addr = base_;
  for (std::size_t i = ndims_; i-- > 0;) {
    const auto count = static_cast<std::size_t>(dims_[i].count);
    addr += static_cast<std::int64_t>(k % count) * dims_[i].stride;
    k /= count;
  }
  return addr;
}

std::vector<std::int64_t> Dsd::addresses() const {
  std::vector<std::int64_t> out;
  out.reserve(element_count());
  for_each_address([&](std::int64_t a) { out.push_back(a); });
  return out;
}

std::pair<std::int64_t, std::int64_t> Dsd::address_range() const {
  std::int64_t lo = base_, hi = base_;
  for (std::size_t i = 0; i < ndims_; ++i) {
    const std::int64_t span = dims_[i].stride * (dims_[i].count - 1);
    if (span >= 0) hi += span; else lo += span;
  }
  return {lo, hi};
}

void Dsd::check_bounds() const {
  if (!is_memory() || element_count() == 0) return;
  const auto [lo, hi] = address_range();
  if (lo < 0 || hi >= static_cast<std::int64_t>(limit_)) {
    throw BoundsError("DSD addresses [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] fall outside the " + std::to_string(limit_) + "-word memory");
  }
}

Dsd shift(const Dsd& d, int drow, int dcol, std::int64_t row_stride) {
  if (!d.is_memory()) throw ShapeError("only memory DSDs can be shifted");
  return Dsd::memory(d.limit(), d.base() + drow * row_stride + dcol, d.dims());
}

bool overlaps(const Dsd& a, const Dsd& b) {
  if (a.element_count() == 0 || b.element_count() == 0) return false;
  const auto [alo, ahi] = a.address_range();
  const auto [blo, bhi] = b.address_range();
  if (ahi < blo || bhi < alo) return false;
  auto x = a.addresses();
  auto y = b.addresses();
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] == y[j]) return true;
    if (x[i] < y[j]) ++i; else ++j;
  }
  return false;
}

namespace {

void check_pair(std::span<float> memory, const Dsd& dest, const Dsd& src) {
  if (!dest.is_memory() || !src.is_memory()) {
    throw ShapeError("vector ops need memory DSDs on both operands");
  }
  if (dest.element_count() != src.element_count()) {
    throw ShapeError("element count mismatch: dest " + std::to_string(dest.element_count()) +
                     " vs src " + std::to_string(src.element_count()));
  }
  if (dest.limit() > memory.size() || src.limit() > memory.size()) {
    throw BoundsError("DSD limit exceeds the supplied memory");
  }
  if (overlaps(dest, src)) throw AliasingError("dest and src DSDs overlap");
}

template <class Op>
void zip(std::span<float> memory, const Dsd& dest, const Dsd& src, Op op) {
  // Walk src in lock-step with dest through a precomputed address list.
  std::vector<std::int64_t> src_addr = src.addresses();
  std::size_t k = 0;
  dest.for_each_address([&](std::int64_t a) {
    op(memory[static_cast<std::size_t>(a)], memory[static_cast<std::size_t>(src_addr[k++])]);
  });
}

}  // namespace

std::size_t fmuls(std::span<float> memory, const Dsd& dest, const Dsd& src, float scalar) {
  check_pair(memory, dest, src);
  zip(memory, dest, src, [scalar](float& d, float s) { d = s * scalar; });
  return dest.element_count();
}

std::size_t fmacs(std::span<float> memory, const Dsd& dest, const Dsd& src, float scalar) {
  check_pair(memory, dest, src);
  zip(memory, dest, src, [scalar](float& d, float s) {
    const float product = s * scalar;
    d = d + product;
  });
  return dest.element_count();
}

std::uint64_t vector_op_cycles(std::size_t elements, int elements_per_cycle) {
  if (elements_per_cycle < 1) throw ConfigError("elements_per_cycle must be >= 1");
  const auto epc = static_cast<std::uint64_t>(elements_per_cycle);
  return (static_cast<std::uint64_t>(elements) + epc - 1) / epc;
}

}  // namespace wafermesh::dsd
