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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wafermesh/core_model.hpp"

namespace wafermesh {

// Binary grid file: "WMS1", u32 rows, u32 cols, u32 reserved (0), then
// rows*cols binary32 values. Everything little-endian.
inline constexpr char kGridMagic[4] = {'W', 'M', 'S', '1'};
inline constexpr std::size_t kGridHeaderBytes = 16;

std::vector<std::uint8_t> encode_grid(const GlobalGrid& grid);
GlobalGrid decode_grid(const std::vector<std::uint8_t>& bytes);

void write_grid(const std::filesystem::path& path, const GlobalGrid& grid);
GlobalGrid read_grid(const std::filesystem::path& path);

}  // namespace wafermesh
