#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pag/errors.hpp"
#include "pag/nn/tensor.hpp"

namespace pag::nn {

static_assert(std::endian::native == std::endian::little,
              "serialized containers assume a little-endian host");

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw Error("io: write failed");
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw CorruptDataError(std::string("io: truncated input while reading ") + what);
}

template <typename U>
void write_le(std::ostream& os, U v) {
  write_bytes(os, &v, sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const char* what) {
  U v;
  read_bytes(is, &v, sizeof(U), what);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, const char* what) {
  uint32_t n = read_le<uint32_t>(is, what);
  if (n > (1u << 20)) throw CorruptDataError(std::string("io: unreasonable string length in ") + what);
  std::string s(n, '\0');
  read_bytes(is, s.data(), n, what);
  return s;
}

// dtype codes for the "PGD1" tensor container.
enum class Dtype : uint8_t { f32 = 1, f64 = 2, u8 = 3, i32 = 4, i64 = 5 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr Dtype value = Dtype::f32;
};
template <>
struct dtype_of<double> {
  static constexpr Dtype value = Dtype::f64;
};
template <>
struct dtype_of<uint8_t> {
  static constexpr Dtype value = Dtype::u8;
};
template <>
struct dtype_of<int32_t> {
  static constexpr Dtype value = Dtype::i32;
};
template <>
struct dtype_of<int64_t> {
  static constexpr Dtype value = Dtype::i64;
};

// Tensor container, little-endian throughout:
//   magic "PGD1" | u8 dtype | u8 rank | u32 dims[rank] | row-major values
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  write_bytes(os, "PGD1", 4);
  write_le<uint8_t>(os, static_cast<uint8_t>(dtype_of<T>::value));
  write_le<uint8_t>(os, static_cast<uint8_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_le<uint32_t>(os, static_cast<uint32_t>(t.dim(i)));
  write_bytes(os, t.data(), t.numel() * sizeof(T));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  read_bytes(is, magic, 4, "tensor magic");
  if (std::memcmp(magic, "PGD1", 4) != 0)
    throw CorruptDataError("tensor container: bad magic (expected PGD1)");
  auto dtype = read_le<uint8_t>(is, "tensor dtype");
  if (dtype != static_cast<uint8_t>(dtype_of<T>::value))
    throw CorruptDataError("tensor container: dtype mismatch");
  auto rank = read_le<uint8_t>(is, "tensor rank");
  if (rank > 8) throw CorruptDataError("tensor container: rank too large");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_le<uint32_t>(is, "tensor dims"));
  Tensor<T> t(shape);
  read_bytes(is, t.data(), t.numel() * sizeof(T), "tensor body");
  return t;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing file: " + path);
  return is;
}

}  // namespace pag::nn
