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

// Little-endian binary helpers and the "MEL1" matrix container:
//
//   bytes 0..3   magic "MEL1"
//   bytes 4..7   uint32 row count (frames, or phonemes for H_L blocks)
//   bytes 8..11  uint32 column count (80 for mels, D_L for H_L blocks)
//   then rows*cols float32, row-major

#ifndef MSMA_IO_HPP_
#define MSMA_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "msma/autodiff.hpp"

namespace msma::io {

void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);

std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
void read_exact(std::istream& in, char* dst, std::size_t n);

/// Writes a matrix in the MEL1 layout (values narrowed to float32).
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
/// Reads a MEL1 file. If expected_cols > 0 the column count must match.
Matrix read_matrix_file(const std::filesystem::path& path, int expected_cols = 0);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace msma::io

#endif  // MSMA_IO_HPP_
