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

#include <stdexcept>
#include <string>

namespace wafermesh {

/// Base of every error raised by the library. `kind()` is a stable short tag
/// used by the CLI's machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define WAFERMESH_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(tag, message) {}     \
  }

WAFERMESH_DEFINE_ERROR(ConfigError, "config");
WAFERMESH_DEFINE_ERROR(PreconditionError, "precondition");
WAFERMESH_DEFINE_ERROR(IntegrityError, "integrity");
WAFERMESH_DEFINE_ERROR(BoundsError, "bounds");
WAFERMESH_DEFINE_ERROR(ShapeError, "shape");
WAFERMESH_DEFINE_ERROR(AliasingError, "aliasing");
WAFERMESH_DEFINE_ERROR(ResourceError, "resource");
WAFERMESH_DEFINE_ERROR(OverflowError, "overflow");
WAFERMESH_DEFINE_ERROR(RegistrationError, "registration");
WAFERMESH_DEFINE_ERROR(IoError, "io");

#undef WAFERMESH_DEFINE_ERROR

/// Raised by Mesh::run_until_quiescent when the cycle budget runs out.
/// `snapshot()` lists, per non-idle PE, queued tasks, live microthreads and
/// occupied queues.
class DeadlockError : public Error {
 public:
  DeadlockError(const std::string& message, std::string snapshot)
      : Error("deadlock", message), snapshot_(std::move(snapshot)) {}

  const std::string& snapshot() const noexcept { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace wafermesh
