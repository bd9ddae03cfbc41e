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

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "wafermesh/config_file.hpp"
#include "wafermesh/error.hpp"

using namespace wafermesh;

TEST_CASE("key value parsing") {
  std::istringstream in(
      "# program\n"
      "pattern = box   # trailing comment\n"
      "\n"
      "  radius=2\n"
      "eps = inf\n"
      "weights = 0:0:1, -1:0:0.5\n");
  const auto cfg = KeyValueConfig::parse(in);
  CHECK(cfg.get("pattern") == "box");
  CHECK(cfg.get_int("radius", 1) == 2);
  CHECK(std::isinf(cfg.get_double("eps", 0.0)));
  CHECK(cfg.get_or("weights", "") == "0:0:1, -1:0:0.5");
  CHECK(cfg.get_int("missing", 7) == 7);
  CHECK_NOTHROW(cfg.require_known({"pattern", "radius", "eps", "weights"}));
  CHECK_THROWS_AS(cfg.require_known({"pattern"}), ConfigError);
}

TEST_CASE("malformed lines are rejected") {
  auto parse = [](const char* text) {
    std::istringstream in(text);
    return KeyValueConfig::parse(in);
  };
  CHECK_THROWS_AS(parse("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("bad-key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("a =\n"), ConfigError);
  CHECK_THROWS_AS(parse("radius = two\n").get_int("radius", 1), ConfigError);
}

TEST_CASE("number and dimension parsing") {
  CHECK(parse_int("42", "x") == 42);
  CHECK_THROWS_AS(parse_int("4x", "x"), ConfigError);
  CHECK(parse_double("1e-3", "x") == doctest::Approx(1e-3));
  CHECK(parse_dims("16x8", "grid") == std::pair{16, 8});
  CHECK(parse_dims("3 x 5", "grid") == std::pair{3, 5});
  CHECK_THROWS_AS(parse_dims("0x4", "grid"), ConfigError);
  CHECK_THROWS_AS(parse_dims("4", "grid"), ConfigError);
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/wms.cfg"), IoError);
}
