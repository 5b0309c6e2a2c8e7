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

#include "msma/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "msma/error.hpp"

namespace msma::io {

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  read_exact(in, reinterpret_cast<char*>(bytes), sizeof(T));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return v;
}

}  // namespace

void write_u16(std::ostream& out, std::uint16_t v) { write_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) {
  write_le(out, std::bit_cast<std::uint32_t>(v));
}
void write_f64(std::ostream& out, double v) {
  write_le(out, std::bit_cast<std::uint64_t>(v));
}

std::uint16_t read_u16(std::istream& in) { return read_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
float read_f32(std::istream& in) {
  return std::bit_cast<float>(read_le<std::uint32_t>(in));
}
double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in));
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw Error("unexpected end of file");
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("MEL1", 4);
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    write_f32(out, static_cast<float>(m.data()[i]));
  if (!out) throw Error("write failed: " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path, int expected_cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file: " + path.string());
  char magic[4];
  read_exact(in, magic, 4);
  if (std::memcmp(magic, "MEL1", 4) != 0)
    throw Error("bad magic in " + path.string());
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  if (expected_cols > 0 && cols != static_cast<std::uint32_t>(expected_cols))
    throw Error(path.string() + ": expected " + std::to_string(expected_cols) +
                " columns, found " + std::to_string(cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(read_f32(in));
  return m;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace msma::io
