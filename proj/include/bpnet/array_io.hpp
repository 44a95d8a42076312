#pragma once

// Binary array format shared by feature files and checkpoints:
//   u64 rows, u64 cols (little-endian), then rows*cols float32 values
//   (little-endian, row-major).

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "bpnet/error.hpp"

namespace bpnet {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& os, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  std::array<char, 4> bytes{};
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

inline float get_f32(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline void write_array(std::ostream& os, const FloatMatrix& m) {
  detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_f32(os, m.data()[i]);
}

inline FloatMatrix read_array(std::istream& is, const std::string& what = "array") {
  const std::uint64_t rows = detail::get_u64(is);
  const std::uint64_t cols = detail::get_u64(is);
  require(static_cast<bool>(is), ErrorCode::kIo, what + ": truncated header");
  require(rows < (1ull << 32) && cols < (1ull << 32), ErrorCode::kIo,
          what + ": implausible shape " + std::to_string(rows) + "x" + std::to_string(cols));
  FloatMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::string buffer(static_cast<std::size_t>(rows * cols * 4), '\0');
  is.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  require(static_cast<std::size_t>(is.gcount()) == buffer.size(), ErrorCode::kIo,
          what + ": truncated payload");
  const auto* bytes = reinterpret_cast<const unsigned char*>(buffer.data());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::get_f32(bytes + 4 * i);
  return m;
}

inline void save_array(const std::string& path, const FloatMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot open for writing: " + path);
  write_array(os, m);
  require(static_cast<bool>(os), ErrorCode::kIo, "write failed: " + path);
}

inline FloatMatrix load_array(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::kIo, "cannot open: " + path);
  return read_array(is, path);
}

}  // namespace bpnet
