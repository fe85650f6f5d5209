// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitives shared by the checkpoint and feature-file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "emoda/errors.hpp"

namespace emoda::io {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 4);
}

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(b.data(), 8);
}

/// Returns false on clean EOF before any byte was read.
inline bool try_get_u32(std::istream& in, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() == 0) return false;
  if (in.gcount() != 4) throw IngestionError("truncated u32");
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!try_get_u32(in, v)) throw IngestionError("unexpected end of file");
  return v;
}

inline double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (in.gcount() != 8) throw IngestionError("truncated float64 payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace emoda::io
