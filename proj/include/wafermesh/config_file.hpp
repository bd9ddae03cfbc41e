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

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace wafermesh {

/// Line-based `key = value` file.
///
/// Grammar: one assignment per line; `#` starts a comment anywhere on a
/// line; blank lines are ignored; keys are `[A-Za-z0-9_]+`; leading and
/// trailing whitespace around keys and values is trimmed. A key may appear
/// only once.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws ConfigError naming the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

int parse_int(const std::string& text, const std::string& what);
double parse_double(const std::string& text, const std::string& what);
/// Parses "RxC" / "R x C" into a pair of positive integers.
std::pair<int, int> parse_dims(const std::string& text, const std::string& what);

}  // namespace wafermesh
