/*
 * Copyright 2026 The PHD Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PHD_ERROR_H_
#define PHD_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace phd {

// Root of every error raised by the library. Callers that only need a
// message can catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed cohort, config or checkpoint content. `line` is 1-based for
// text formats; `offset` is a byte offset (within the line for text).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::int64_t line, std::int64_t offset)
      : Error(what + " (line " + std::to_string(line) + ", offset " +
              std::to_string(offset) + ")"),
        line_(line),
        offset_(offset) {}

  std::int64_t line() const { return line_; }
  std::int64_t offset() const { return offset_; }

 private:
  std::int64_t line_;
  std::int64_t offset_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Every horizon of a sample is masked; the caller is expected to skip it.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

// AUC-type metric requested on data with a single class after masking.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was requested before the artifacts it consumes exist.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// Named configuration field is missing or has an invalid value.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace phd

#endif  // PHD_ERROR_H_
