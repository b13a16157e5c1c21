#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "chainnet/errors.hpp"

namespace chainnet::le {

template <class U>
void put(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

// `what` names the stream in the truncation error.
template <class U>
U get(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError(std::string(what) + " truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put<std::uint32_t>(out, bits);
}

inline void put_f64(std::ostream& out, double f) {
  std::uint64_t bits;
  std::memcpy(&bits, &f, 8);
  put<std::uint64_t>(out, bits);
}

inline float get_f32(std::istream& in, const char* what) {
  const std::uint32_t bits = get<std::uint32_t>(in, what);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline double get_f64(std::istream& in, const char* what) {
  const std::uint64_t bits = get<std::uint64_t>(in, what);
  double f;
  std::memcpy(&f, &bits, 8);
  return f;
}

}  // namespace chainnet::le
