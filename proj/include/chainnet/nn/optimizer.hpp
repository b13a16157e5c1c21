#pragma once

#include <span>
#include <vector>

#include "chainnet/nn/tensor.hpp"

namespace chainnet::nn {

// Stochastic gradient descent with classical momentum:
//   velocity <- momentum * velocity - lr * grad
//   value    <- value + velocity
// momentum = 0 gives plain SGD.
template <class T>
class Sgd {
 public:
  Sgd(double learning_rate, double momentum);

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }

  // Applies one update to every parameter. All gradients are checked for
  // finiteness first; a NaN/Inf raises DivergenceError naming the parameter
  // tag and leaves every value untouched.
  void step(std::span<Parameter<T>> params);

  const std::vector<Tensor<T>>& velocities() const { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace chainnet::nn
