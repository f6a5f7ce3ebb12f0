#pragma once

// Little-endian primitives shared by the on-disk containers.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "kgprobe/error.hpp"

namespace kgprobe::detail {

template <typename T>
T to_little(T value) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }
}

template <typename T>
void put(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s);
}

/// Reads exactly sizeof(T) bytes; short reads raise Errc::truncated.
template <typename T>
T get(std::istream& in, std::string_view what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(Errc::truncated, "truncated while reading " + std::string(what));
  }
  return to_little(value);
}

inline std::string get_bytes(std::istream& in, std::size_t n, std::string_view what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw Error(Errc::truncated, "truncated while reading " + std::string(what));
  }
  return s;
}

inline std::string get_string(std::istream& in, std::string_view what) {
  const auto n = get<std::uint32_t>(in, what);
  return get_bytes(in, n, what);
}

}  // namespace kgprobe::detail
