#pragma once

// Little-endian scalar IO shared by the grid cache and checkpoints.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "mislstm/types.hpp"

namespace mislstm::detail {

template <class T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <class T>
void write_le(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("unexpected end of binary file");
  return to_little(value);
}

}  // namespace mislstm::detail
