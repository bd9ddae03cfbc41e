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
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace wafermesh {

/// Virtual-channel id carried by every wavelet.
using Color = std::uint8_t;

namespace dsd {

/// One level of a strided access pattern.
struct Dim {
  std::int64_t count = 0;
  std::int64_t stride = 1;

  bool operator==(const Dim&) const = default;
};

enum class Target { Memory, FabricOut, FabricIn };

/// Data Structure Descriptor: a 1-4 level strided walk over PE-local
/// memory, or a counted stream of wavelets on a color.
///
/// Iteration order is outermost dimension first, innermost last. Memory
/// descriptors are bounds-checked against the owning PE's allocated memory
/// (`limit()` words) when constructed and when shifted.
class Dsd {
 public:
  static constexpr std::size_t kMaxDims = 4;

  static Dsd memory(std::size_t limit, std::int64_t base, std::initializer_list<Dim> dims);
  static Dsd memory(std::size_t limit, std::int64_t base, std::span<const Dim> dims);
  static Dsd fabric_out(Color color, std::size_t count);
  static Dsd fabric_in(Color color, std::size_t count);

  Target target() const { return target_; }
  bool is_memory() const { return target_ == Target::Memory; }
  Color color() const { return color_; }
  std::int64_t base() const { return base_; }
  std::span<const Dim> dims() const { return {dims_.data(), ndims_}; }
  std::size_t limit() const { return limit_; }
  std::size_t element_count() const;

  /// Address of the k-th element in iteration order (memory descriptors).
  std::int64_t address(std::size_t k) const;

  template <class F>
  void for_each_address(F&& f) const {
    if (element_count() == 0) return;
    std::array<std::int64_t, kMaxDims> idx{};
    std::int64_t addr = base_;
    const std::size_t n = ndims_;
    while (true) {
      f(addr);
      std::size_t d = n;
      while (d > 0) {
        --d;
        if (++idx[d] < dims_[d].count) {
          addr += dims_[d].stride;
          break;
        }
        addr -= dims_[d].stride * (dims_[d].count - 1);
        idx[d] = 0;
        if (d == 0) return;
      }
    }
  }

  std::vector<std::int64_t> addresses() const;

  /// Smallest and largest addressed word; only meaningful when non-empty.
  std::pair<std::int64_t, std::int64_t> address_range() const;

  bool operator==(const Dsd&) const = default;

 private:
  void check_bounds() const;

  Target target_ = Target::Memory;
  Color color_ = 0;
  std::int64_t base_ = 0;
  std::array<Dim, kMaxDims> dims_{};
  std::size_t ndims_ = 0;
  std::size_t limit_ = 0;
};

/// Moves the base by `drow * row_stride + dcol` words; dims unchanged.
Dsd shift(const Dsd& d, int drow, int dcol, std::int64_t row_stride);

/// True when the two memory descriptors address at least one common word.
bool overlaps(const Dsd& a, const Dsd& b);

/// dest[i] = src[i] * scalar. Returns the element count.
std::size_t fmuls(std::span<float> memory, const Dsd& dest, const Dsd& src, float scalar);

/// dest[i] = dest[i] + src[i] * scalar, rounded after the multiply and
/// again after the add. Returns the element count.
std::size_t fmacs(std::span<float> memory, const Dsd& dest, const Dsd& src, float scalar);

/// ceil(elements / elements_per_cycle).
std::uint64_t vector_op_cycles(std::size_t elements, int elements_per_cycle);

}  // namespace dsd
}  // namespace wafermesh
