// emovar/binary_io.hpp

// Copyright 2026 The emovar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitives shared by the state, model and payload formats.

#ifndef EMOVAR_BINARY_IO_HPP_
#define EMOVAR_BINARY_IO_HPP_

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>

#include "emovar/error.hpp"

namespace emovar::io {

template <typename UInt>
inline void WriteLe(std::ostream &os, UInt value) {
  static_assert(std::is_unsigned_v<UInt>);
  std::array<char, sizeof(UInt)> bytes;
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename UInt>
inline UInt ReadLe(std::istream &is, Errc on_short) {
  static_assert(std::is_unsigned_v<UInt>);
  std::array<unsigned char, sizeof(UInt)> bytes;
  is.read(reinterpret_cast<char *>(bytes.data()), bytes.size());
  if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw Error(on_short, "unexpected end of stream");
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

inline void WriteF64(std::ostream &os, double v) {
  WriteLe(os, std::bit_cast<std::uint64_t>(v));
}
inline double ReadF64(std::istream &is, Errc on_short) {
  return std::bit_cast<double>(ReadLe<std::uint64_t>(is, on_short));
}

inline void WriteMagic(std::ostream &os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void ExpectMagic(std::istream &is, std::string_view magic, Errc code) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
    throw Error(code, "bad magic, expected \"" + std::string(magic) + "\"");
}

/// Row-major, 64-bit IEEE-754; dimensions are written by the caller.
inline void WriteMatrix(std::ostream &os, const Eigen::MatrixXd &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) WriteF64(os, m(r, c));
}

inline Eigen::MatrixXd ReadMatrix(std::istream &is, Eigen::Index rows,
                                  Eigen::Index cols, Errc on_short) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = ReadF64(is, on_short);
  return m;
}

inline void WriteVector(std::ostream &os, const Eigen::VectorXd &v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) WriteF64(os, v(i));
}

inline Eigen::VectorXd ReadVector(std::istream &is, Eigen::Index n,
                                  Errc on_short) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = ReadF64(is, on_short);
  return v;
}

/// Writes via a sibling temporary file then renames, so readers never see a
/// partially written file.
template <typename Fn>
inline void AtomicWrite(const std::filesystem::path &path, Fn &&writer,
                        bool binary = false) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, binary ? std::ios::binary : std::ios::out);
    if (!os) throw Error(Errc::kIo, "cannot open " + tmp.string());
    writer(os);
    os.flush();
    if (!os) throw Error(Errc::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIo, "rename to " + path.string() + ": " + ec.message());
}

}  // namespace emovar::io

#endif  // EMOVAR_BINARY_IO_HPP_
