#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ghfr/error.hpp"

// Little-endian primitives shared by the GHFR / GHRW file formats.
namespace ghfr::io {

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t k = 0; k < sizeof(T); ++k) buf[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xFF);
  write_bytes(out, buf, sizeof(T));
}

inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }

inline void write_f32_array(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    write_bytes(out, values.data(), values.size() * sizeof(float));
  } else {
    for (float v : values) write_f32(out, v);
  }
}

inline void write_varint(std::ostream& out, std::uint64_t v) {
  while (v >= 0x80) {
    const unsigned char b = static_cast<unsigned char>(v & 0x7F) | 0x80;
    write_bytes(out, &b, 1);
    v >>= 7;
  }
  const unsigned char b = static_cast<unsigned char>(v);
  write_bytes(out, &b, 1);
}

inline void write_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw Error("string too long for binary field");
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw Error("unexpected end of file");
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  read_bytes(in, buf, sizeof(T));
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) u |= static_cast<U>(U(buf[k]) << (8 * k));
  return static_cast<T>(u);
}

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }

inline void read_f32_array(std::istream& in, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    read_bytes(in, values.data(), values.size() * sizeof(float));
  } else {
    for (float& v : values) v = read_f32(in);
  }
}

inline std::uint64_t read_varint(std::istream& in) {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    unsigned char b = 0;
    read_bytes(in, &b, 1);
    v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
    if (!(b & 0x80)) return v;
  }
  throw Error("malformed varint");
}

inline std::string read_string(std::istream& in) {
  const auto n = read_le<std::uint16_t>(in);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char buf[4];
  read_bytes(in, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0) throw Error(what + ": bad magic");
}

}  // namespace ghfr::io
