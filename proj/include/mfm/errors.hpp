// Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <stdexcept>
#include <string>

namespace mfm {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or preset values (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad arguments to an operation: shapes, ranges, unknown ids (exit code 2).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A value failed validation, e.g. a non-finite entry (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file, checksum mismatch (exit code 3).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure (exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in activations, losses or updates (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfm
