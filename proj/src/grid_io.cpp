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

#include "wafermesh/grid_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "wafermesh/error.hpp"

namespace wafermesh {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_grid(const GlobalGrid& grid) {
  std::vector<std::uint8_t> out;
  out.reserve(kGridHeaderBytes + grid.size() * 4);
  out.insert(out.end(), std::begin(kGridMagic), std::end(kGridMagic));
  put_u32(out, static_cast<std::uint32_t>(grid.rows()));
  put_u32(out, static_cast<std::uint32_t>(grid.cols()));
  put_u32(out, 0);
  for (float v : grid.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

GlobalGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kGridHeaderBytes) throw IoError("grid file shorter than its header");
  if (!std::equal(std::begin(kGridMagic), std::end(kGridMagic), bytes.begin())) {
    throw IoError("bad grid magic (expected WMS1)");
  }
  const std::uint32_t rows = get_u32(bytes, 4);
  const std::uint32_t cols = get_u32(bytes, 8);
  if (rows == 0 || cols == 0) throw IoError("grid file has a zero dimension");
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  if (bytes.size() != kGridHeaderBytes + count * 4) {
    throw IoError("grid payload size does not match " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  }
  std::vector<float> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kGridHeaderBytes + 4 * i));
  }
  return GlobalGrid(static_cast<int>(rows), static_cast<int>(cols), std::move(values));
}

void write_grid(const std::filesystem::path& path, const GlobalGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_grid(grid);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

GlobalGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

}  // namespace wafermesh
