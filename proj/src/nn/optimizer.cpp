#include "chainnet/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "chainnet/errors.hpp"
#include "chainnet/simd/kernels.hpp"

namespace chainnet::nn {

template <class T>
Sgd<T>::Sgd(double learning_rate, double momentum) : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
}

template <class T>
void Sgd<T>::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd: learning_rate must be positive");
  learning_rate_ = lr;
}

template <class T>
void Sgd<T>::step(std::span<Parameter<T>> params) {
  for (const Parameter<T>& p : params) {
    if (p.grad.shape() != p.value.shape())
      throw ConfigError("sgd: gradient of '" + p.tag + "' is not populated");
    for (T v : p.grad.data()) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in parameter '" + p.tag + "'");
    }
  }
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const Parameter<T>& p : params) velocity_.emplace_back(p.value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (velocity_[i].shape() != p.value.shape())
      throw ConfigError("sgd: parameter '" + p.tag + "' changed shape between steps");
    simd::sgd_momentum<T>(p.value.size(), static_cast<T>(learning_rate_), static_cast<T>(momentum_),
                          p.grad.ptr(), velocity_[i].ptr(), p.value.ptr());
  }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace chainnet::nn
