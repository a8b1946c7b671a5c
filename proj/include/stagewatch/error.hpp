/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace stagewatch {

// Base of every error raised by the library. kind() is the stable,
// machine-readable tag the CLI reports on stderr.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string &what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string &kind() const noexcept { return kind_; }

  private:
    std::string kind_;
};

#define STAGEWATCH_ERROR(Name, Tag)                                            \
    class Name : public Error {                                                \
      public:                                                                  \
        explicit Name(const std::string &what) : Error(Tag, what) {}           \
    }

STAGEWATCH_ERROR(ConfigError, "config");
STAGEWATCH_ERROR(DataError, "data");
STAGEWATCH_ERROR(DomainError, "domain");
STAGEWATCH_ERROR(TrainingError, "training");
STAGEWATCH_ERROR(ConstraintError, "constraint");
STAGEWATCH_ERROR(CompatibilityError, "compatibility");
STAGEWATCH_ERROR(FileError, "file");
STAGEWATCH_ERROR(UsageError, "usage");

#undef STAGEWATCH_ERROR

} // namespace stagewatch
