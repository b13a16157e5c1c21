#include "chainnet/nn/tensor.hpp"

namespace chainnet::nn {

std::string Shape::str() const {
  return std::to_string(n) + " x " + std::to_string(h) + " x " + std::to_string(w) + " x " +
         std::to_string(c);
}

std::string Shape::volume_str() const {
  return std::to_string(h) + " x " + std::to_string(w) + " x " + std::to_string(c);
}

}  // namespace chainnet::nn
