#pragma once

// DITF binary tensor format:
//   "DITF" | u8 version (1) | u8 dtype (1=f32, 2=f64) | u8 rank |
//   rank x u32 LE extents | row-major LE payload

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "dipred/numerics/tensor.hpp"

namespace dipred::ditf {

inline constexpr std::array<char, 4> kMagic{'D', 'I', 'T', 'F'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kDtypeF64 = 2;

class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U)))
    throw FormatError("DITF: truncated stream");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  U v;
  std::memcpy(&v, bytes.data(), sizeof(U));
  return v;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? kDtypeF32 : kDtypeF64;
}

}  // namespace detail

template <typename T>
void write(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic.data(), kMagic.size());
  detail::put_le<std::uint8_t>(os, kVersion);
  detail::put_le<std::uint8_t>(os, detail::dtype_code<T>());
  if (t.rank() > 255) throw FormatError("DITF: rank exceeds 255");
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(T)));
  } else {
    for (T v : t.data()) detail::put_le<T>(os, v);
  }
  if (!os) throw FormatError("DITF: write failed");
}

// Reads one tensor; payload of either dtype is converted to T.
template <typename T>
Tensor<T> read(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("DITF: bad magic");
  const auto version = detail::get_le<std::uint8_t>(is);
  if (version != kVersion) throw FormatError("DITF: unsupported version " + std::to_string(version));
  const auto dtype = detail::get_le<std::uint8_t>(is);
  if (dtype != kDtypeF32 && dtype != kDtypeF64)
    throw FormatError("DITF: unknown dtype code " + std::to_string(dtype));
  const auto rank = detail::get_le<std::uint8_t>(is);
  Shape shape(rank);
  for (auto& e : shape) e = detail::get_le<std::uint32_t>(is);
  Tensor<T> t(shape);
  if (dtype == detail::dtype_code<T>() && std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(T))))
      throw FormatError("DITF: truncated payload");
  } else if (dtype == kDtypeF32) {
    for (auto& v : t.data()) v = static_cast<T>(detail::get_le<float>(is));
  } else {
    for (auto& v : t.data()) v = static_cast<T>(detail::get_le<double>(is));
  }
  return t;
}

template <typename T>
void save(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path);
  write(os, t);
}

template <typename T>
Tensor<T> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  return read<T>(is);
}

}  // namespace dipred::ditf
