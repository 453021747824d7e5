// Copyright 2026 The qclkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace qcl {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid gate indices, mismatched sizes, malformed circuits.
class StructuralError : public Error {
  public:
    using Error::Error;
};

/// A circuit slot was referenced but no value was bound to it.
class BindingError : public Error {
  public:
    using Error::Error;
};

/// Input outside the mathematical domain (e.g. |x| > 1 under arcsin encoding).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Noise model or problem configuration is inconsistent.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Text input could not be parsed. Carries the 1-based line when known.
class ParseError : public Error {
  public:
    ParseError(const std::string &what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Parsed values violate a documented constraint.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Requested operation is not supported (e.g. derivative order > 2).
class UnsupportedError : public Error {
  public:
    using Error::Error;
};

} // namespace qcl
