// Copyright 2026 The CorneaField Authors.
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

namespace cf {

// Error classes map one-to-one onto the C API status codes and CLI exit codes.
enum class ErrorKind {
  kArgument = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
  kGeometry = 5,
  kState = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ArgumentError(const std::string& what) {
  return Error(ErrorKind::kArgument, what);
}
inline Error ConfigError(const std::string& what) {
  return Error(ErrorKind::kConfig, what);
}
inline Error IoError(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}
inline Error NumericError(const std::string& what) {
  return Error(ErrorKind::kNumeric, what);
}
inline Error GeometryError(const std::string& what) {
  return Error(ErrorKind::kGeometry, what);
}
inline Error StateError(const std::string& what) {
  return Error(ErrorKind::kState, what);
}

}  // namespace cf
