#include "chainnet/nn/checkpoint.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <type_traits>

#include "chainnet/errors.hpp"
#include "../common/le_io.hpp"

namespace chainnet::nn {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'N', 'W', '1'};

constexpr const char* kWhat = "weight blob";

}  // namespace

template <class T>
void write_weights(std::ostream& out, std::span<const Parameter<T>> params) {
  out.write(kMagic.data(), kMagic.size());
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter<T>& p : params) {
    if (p.tag.size() > 0xFFFF) throw ConfigError("parameter tag too long: " + p.tag);
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(p.tag.size()));
    out.write(p.tag.data(), static_cast<std::streamsize>(p.tag.size()));
    const Shape s = p.value.shape();
    le::put<std::uint8_t>(out, 4);
    for (std::size_t e : {s.n, s.h, s.w, s.c}) le::put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(precision_of<T>()));
    for (T v : p.value.data()) {
      if constexpr (std::is_same_v<T, float>) {
        le::put_f32(out, v);
      } else {
        le::put_f64(out, v);
      }
    }
  }
  if (!out) throw IoError("failed writing weight blob");
}

std::vector<StoredTensor> read_weights(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("weight blob: bad magic (expected CNW1)");
  const std::uint32_t count = le::get<std::uint32_t>(in, kWhat);
  std::vector<StoredTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const std::uint16_t len = le::get<std::uint16_t>(in, kWhat);
    t.tag.resize(len);
    in.read(t.tag.data(), len);
    if (!in) throw IoError("weight blob truncated in tag");
    const std::uint8_t rank = le::get<std::uint8_t>(in, kWhat);
    if (rank > 4) throw IoError("weight blob: rank " + std::to_string(rank) + " > 4 for '" + t.tag + "'");
    std::array<std::size_t, 4> ext{1, 1, 1, 1};
    for (std::uint8_t r = 0; r < rank; ++r) ext[4 - rank + r] = le::get<std::uint32_t>(in, kWhat);
    t.shape = {ext[0], ext[1], ext[2], ext[3]};
    const std::uint8_t code = le::get<std::uint8_t>(in, kWhat);
    if (code > 1) throw IoError("weight blob: unknown precision code " + std::to_string(code));
    t.precision = static_cast<Precision>(code);
    t.values.resize(t.shape.count());
    for (double& v : t.values) {
      v = t.precision == Precision::Float32 ? static_cast<double>(le::get_f32(in, kWhat))
                                            : le::get_f64(in, kWhat);
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
void assign_weights(std::span<Parameter<T>> params, const std::vector<StoredTensor>& stored) {
  if (params.size() != stored.size())
    throw ConfigError("checkpoint holds " + std::to_string(stored.size()) + " tensors, network expects " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    const StoredTensor& s = stored[i];
    if (p.tag != s.tag) throw ConfigError("checkpoint tensor " + std::to_string(i) + " is '" + s.tag + "', expected '" + p.tag + "'");
    if (p.value.shape() != s.shape)
      throw ConfigError("checkpoint tensor '" + s.tag + "' has shape " + s.shape.str() + ", expected " + p.value.shape().str());
    for (std::size_t k = 0; k < s.values.size(); ++k) p.value[k] = static_cast<T>(s.values[k]);
  }
}

template void write_weights<float>(std::ostream&, std::span<const Parameter<float>>);
template void write_weights<double>(std::ostream&, std::span<const Parameter<double>>);
template void assign_weights<float>(std::span<Parameter<float>>, const std::vector<StoredTensor>&);
template void assign_weights<double>(std::span<Parameter<double>>, const std::vector<StoredTensor>&);

}  // namespace chainnet::nn
