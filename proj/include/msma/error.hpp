// Copyright 2026 The MSMA-TTS Authors
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

#ifndef MSMA_ERROR_HPP_
#define MSMA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace msma {

/// Runtime failure: bad data, missing files, numerical breakdown.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration document or override.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace msma

#endif  // MSMA_ERROR_HPP_
