// Copyright 2026 The afca-lab Authors
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

namespace afca_lab {

// Root of every error thrown by the library. The CLI maps the subclasses
// onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed input values (overlapping segments, duplicate ids, bad boxes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Fewer audio tokens than the temporal window rule needs.
class ShortfallError : public ValidationError {
 public:
  ShortfallError(const std::string& what, long required)
      : ValidationError(what), required_(required) {}
  long required() const { return required_; }

 private:
  long required_;
};

// Unreadable, missing or corrupted files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in a computation that must stay finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented protocol (e.g. stage-2 data with one identity).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace afca_lab
