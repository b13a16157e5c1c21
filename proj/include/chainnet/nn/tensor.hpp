#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <new>
#include <type_traits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chainnet/errors.hpp"

namespace chainnet::nn {

// Extents of a rank-4 tensor in (batch, height, width, channels) order.
struct Shape {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  constexpr std::size_t count() const { return n * h * w * c; }
  constexpr std::size_t spatial() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;

  // "n x h x w x c"
  std::string str() const;
  // "h x w x c", the per-example volume.
  std::string volume_str() const;
};

// Allocator that leaves elements default-initialised (indeterminate for
// arithmetic types) on resize, so buffers about to be overwritten skip the
// zero fill.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

template <class T>
using Buffer = std::vector<T, DefaultInitAllocator<T>>;

struct Uninitialized {};
inline constexpr Uninitialized uninitialized{};

// Dense NHWC array. Value type; copies are deep.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {}
  // Contents are indeterminate; every element must be written before use.
  Tensor(Shape shape, Uninitialized) : shape_(shape), data_(shape.count()) {}
  Tensor(Shape shape, const std::vector<T>& data) : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.count())
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  std::size_t index(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
    return ((n * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }
  T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) { return data_[index(n, h, w, c)]; }
  const T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
    return data_[index(n, h, w, c)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Same data, different extents with the same element count.
  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(shape);
    return out;
  }
  void reshape(Shape shape) {
    if (shape.count() != data_.size())
      throw ConfigError("cannot reshape " + shape_.str() + " to " + shape.str());
    shape_ = shape;
  }

 private:
  Shape shape_;
  Buffer<T> data_;
};

enum class ParamRole { Weight, Bias };

// A learnable tensor plus its accumulated gradient. Gradients are zeroed at
// the start of each minibatch and accumulated across backward passes.
template <class T>
struct Parameter {
  std::string tag;
  ParamRole role = ParamRole::Weight;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string t, ParamRole r, Shape shape)
      : tag(std::move(t)), role(r), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

}  // namespace chainnet::nn
