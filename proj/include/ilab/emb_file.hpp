#pragma once

// EMB1 binary matrix files:
//   "EMB1" | u32 rows | u32 dim | rows*dim float32 | u32 CRC32(float payload)
// All integers and floats little-endian.

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

static_assert(std::endian::native == std::endian::little,
              "EMB1 I/O assumes a little-endian host");

inline std::uint32_t crc32_of(const void* data, std::size_t len) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

// CRC32 of the float32 encoding of a matrix; the identity every downstream
// artifact uses to refer to "these features".
inline std::uint32_t matrix_checksum(const Matrix& m) {
  std::vector<float> f(m.data().begin(), m.data().end());
  return crc32_of(f.data(), f.size() * sizeof(float));
}

inline std::string encode_emb1(const Matrix& m) {
  std::vector<float> f(m.data().begin(), m.data().end());
  const auto rows = static_cast<std::uint32_t>(m.rows());
  const auto dim = static_cast<std::uint32_t>(m.cols());
  const std::uint32_t crc = crc32_of(f.data(), f.size() * sizeof(float));
  std::string out;
  out.reserve(16 + f.size() * 4);
  out.append("EMB1", 4);
  out.append(reinterpret_cast<const char*>(&rows), 4);
  out.append(reinterpret_cast<const char*>(&dim), 4);
  out.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(&crc), 4);
  return out;
}

// Parses an EMB1 blob. Rejects bad magic, truncation, CRC mismatch and
// non-finite values (naming the offending row).
inline Matrix decode_emb1(std::string_view bytes, const std::string& what = "embedding file") {
  if (bytes.size() < 16 || bytes.substr(0, 4) != "EMB1")
    throw Error(Errc::parse_error, what + ": missing EMB1 header");
  std::uint32_t rows = 0, dim = 0;
  std::memcpy(&rows, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  const std::size_t count = static_cast<std::size_t>(rows) * dim;
  if (bytes.size() != 12 + count * 4 + 4)
    throw Error(Errc::parse_error, what + ": size does not match header " +
                                       std::to_string(rows) + "x" + std::to_string(dim));
  std::vector<float> f(count);
  std::memcpy(f.data(), bytes.data() + 12, count * 4);
  std::uint32_t crc = 0;
  std::memcpy(&crc, bytes.data() + 12 + count * 4, 4);
  if (crc != crc32_of(f.data(), count * 4))
    throw Error(Errc::parse_error, what + ": CRC32 mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(f[i]))
      throw Error(Errc::non_finite, what + ": non-finite value at row " + std::to_string(i / dim));
  }
  return Matrix(rows, dim, std::vector<double>(f.begin(), f.end()));
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io_error, "short write to " + path);
}

inline Matrix read_emb1(const std::string& path) { return decode_emb1(read_file_bytes(path), path); }

inline void write_emb1(const std::string& path, const Matrix& m) { write_file_bytes(path, encode_emb1(m)); }

}  // namespace ilab
