#pragma once

// Weight blob layout (all integers little-endian):
//
//   "CNW1"
//   u32  parameter count
//   per parameter:
//     u16  tag length, tag bytes (UTF-8)
//     u8   rank, then rank x u32 extents
//     u8   precision code (0 = float32, 1 = float64)
//     raw scalars, product(extents) of them, in that precision
//
// Tensors are written with rank 4 in (n, h, w, c) order; readers accept any
// rank <= 4 and left-pad the extents with ones.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chainnet/nn/tensor.hpp"

namespace chainnet::nn {

enum class Precision : std::uint8_t { Float32 = 0, Float64 = 1 };

template <class T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::Float32; }
template <>
constexpr Precision precision_of<double>() { return Precision::Float64; }

struct StoredTensor {
  std::string tag;
  Shape shape;
  Precision precision = Precision::Float32;
  std::vector<double> values;  // widened for inspection and conversion
};

template <class T>
void write_weights(std::ostream& out, std::span<const Parameter<T>> params);

std::vector<StoredTensor> read_weights(std::istream& in);

// Copies stored values into `params`, matching by position and checking tag
// and shape. Precision is converted as needed.
template <class T>
void assign_weights(std::span<Parameter<T>> params, const std::vector<StoredTensor>& stored);

}  // namespace chainnet::nn
