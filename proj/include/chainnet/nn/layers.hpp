#pragma once

// The operation set of the engine. Each function appends one node to the
// graph and returns its output variable. Shape violations throw ConfigError
// naming the offending axis.

#include <cstddef>
#include <cstdint>
#include <utility>

#include "chainnet/nn/graph.hpp"
#include "chainnet/nn/tensor.hpp"

namespace chainnet::nn {

// SameCeil pads with zeros so that out = ceil(in / stride) on every axis,
// splitting the total padding as floor(total / 2) before and the rest after.
enum class Padding { SameCeil, None };

struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

// `axis` is only used for error messages ("height" / "width").
AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding,
                           const char* axis);

struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::SameCeil;

  // (kernel_h, kernel_w, in_channels, out_channels)
  Shape weight_shape() const { return {kernel_h, kernel_w, in_channels, out_channels}; }
  Shape bias_shape() const { return {1, 1, 1, out_channels}; }
  std::size_t fan_in() const { return kernel_h * kernel_w * in_channels; }
  void validate() const;
};

Shape conv_output_shape(const Shape& input, const ConvSpec& spec);

struct PoolSpec {
  std::size_t pool_h = 1;
  std::size_t pool_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::SameCeil;
};

Shape pool_output_shape(const Shape& input, const PoolSpec& spec);

enum class Mode { Train, Infer };

// Floor applied to probabilities before the log in cross_entropy.
inline constexpr double kLogFloor = 1e-12;

template <class T>
Var conv2d(Graph<T>& g, Var x, const ConvSpec& spec, Var weights, Var bias);

template <class T>
Var relu(Graph<T>& g, Var x);

// Gradient goes to the first maximal element in row-major window order.
template <class T>
Var maxpool(Graph<T>& g, Var x, const PoolSpec& spec);

// (n, h, w, c) -> (n, 1, 1, c), arithmetic mean over h * w.
template <class T>
Var global_avgpool(Graph<T>& g, Var x);

// Channels of a precede channels of b.
template <class T>
Var depthcat(Graph<T>& g, Var a, Var b);

template <class T>
Var add(Graph<T>& g, Var a, Var b);

// x flattened per example to h * w * c = in; weights (1, 1, in, out),
// bias (1, 1, 1, out); output (n, 1, 1, out).
template <class T>
Var fully_connected(Graph<T>& g, Var x, Var weights, Var bias);

// Inverted dropout: survivors scaled by 1 / (1 - ratio) in Train mode,
// identity in Infer mode. The mask is a pure function of (seed, index).
template <class T>
Var dropout(Graph<T>& g, Var x, double ratio, Mode mode, std::uint64_t seed);

// Softmax over the channel axis of every (n, h, w) row.
template <class T>
Var softmax(Graph<T>& g, Var logits);

// -(1 / normalizer) * sum t * ln(max(p, kLogFloor)); normalizer <= 0 means
// "number of rows". Output is a 1 x 1 x 1 x 1 tensor.
template <class T>
Var cross_entropy(Graph<T>& g, Var probs, Var targets, double normalizer = 0.0);

struct SoftmaxLoss {
  Var loss;
  Var probs;  // no gradient flows through this node
};

// Fused softmax + cross-entropy; d loss / d logits = (p - t) / normalizer.
template <class T>
SoftmaxLoss softmax_cross_entropy(Graph<T>& g, Var logits, Var targets, double normalizer = 0.0);

// Inverse of depthcat for plain tensors.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t at);

// Dropout keep decision for element `index` under `seed`.
bool dropout_keeps(std::uint64_t seed, std::size_t index, double ratio);

}  // namespace chainnet::nn
