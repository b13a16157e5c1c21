#pragma once

// The chain network: an initial conv/ReLU/maxpool stack, a cascade of chain
// blocks that each carry a horizontal (1x3) and a vertical (3x1) flow, a
// final depth concatenation of the two flows, global average pooling, three
// fully connected layers with dropout before the last, and softmax.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "chainnet/nn/graph.hpp"
#include "chainnet/nn/layers.hpp"
#include "chainnet/nn/tensor.hpp"

namespace chainnet::model {

struct NetworkConfig {
  std::size_t signal_length = 1024;  // I/Q samples per frame
  std::size_t kernel_count = 64;     // kernels per conv layer
  std::size_t class_count = 14;
  std::size_t block_count = 6;
  std::size_t fc_width = 128;
  double dropout_ratio = 0.5;
  std::uint64_t seed = 1;
  // Start the 1x1 rescale convolutions at zero weights so every block is
  // initially the identity on its flows; false gives them He init too.
  bool zero_init_rescale = true;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Closed-form number of learnable scalars (weights and biases).
std::size_t count_parameters(const NetworkConfig& config);

struct ShapeTraceEntry {
  std::string layer;
  nn::Shape shape;  // batch extent is 1
};
using ShapeTrace = std::vector<ShapeTraceEntry>;

// "input        2 x 1024 x 1" style listing, one layer per line.
std::string format_shape_trace(const ShapeTrace& trace);

// Graph handles of one chain block's parameters.
struct ChainBlockVars {
  nn::Var conv_1x3_w, conv_1x3_b;
  nn::Var conv_3x1_w, conv_3x1_b;
  nn::Var conv_1x1_w, conv_1x1_b;
};

nn::ConvSpec horizontal_flow_spec(std::size_t kernels);
nn::ConvSpec vertical_flow_spec(std::size_t kernels);
nn::ConvSpec rescale_spec(std::size_t kernels);

// f_h = relu(conv1x3(in_h)), f_v = relu(conv3x1(in_v)),
// r = relu(conv1x1(depthcat(f_h, f_v))), returns (f_h + r, f_v + r).
template <class T>
std::pair<nn::Var, nn::Var> chain_block_forward(nn::Graph<T>& g, nn::Var in_h, nn::Var in_v,
                                                const ChainBlockVars& params, std::size_t kernels);

template <class T>
class ChainNet {
 public:
  explicit ChainNet(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  std::vector<nn::Parameter<T>>& parameters() { return params_; }
  const std::vector<nn::Parameter<T>>& parameters() const { return params_; }

  // frames: (N, 2, signal_length, 1). Returns the logits, (N, 1, 1, C).
  // The mutable overload binds parameters for gradient accumulation when
  // the graph records gradients.
  nn::Var forward(nn::Graph<T>& g, nn::Var frames, nn::Mode mode, std::uint64_t dropout_seed,
                  ShapeTrace* trace = nullptr);
  nn::Var forward(nn::Graph<T>& g, nn::Var frames, nn::Mode mode, std::uint64_t dropout_seed,
                  ShapeTrace* trace = nullptr) const;

  // Inference-mode class probabilities, (N, 1, 1, C). Safe to call
  // concurrently on a network nobody is mutating.
  nn::Tensor<T> classify(const nn::Tensor<T>& frames) const;

  ShapeTrace shape_trace() const;

  // Sum of parameter tensor sizes in the instantiated graph.
  std::size_t parameter_count() const;

  void zero_grad();

  // FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

 private:
  template <class Self>
  static nn::Var forward_impl(Self& self, nn::Graph<T>& g, nn::Var frames, nn::Mode mode,
                              std::uint64_t dropout_seed, ShapeTrace* trace);

  void check_frames(const nn::Shape& s) const;

  NetworkConfig config_;
  std::vector<nn::Parameter<T>> params_;
};

// Checkpoint file: a text header of key=value lines (network config plus
// free-form metadata) terminated by an empty line, followed by the CNW1
// weight blob.
template <class T>
void save_checkpoint(const std::string& path, const ChainNet<T>& net,
                     const std::map<std::string, std::string>& metadata = {});

struct CheckpointHeader {
  NetworkConfig config;
  std::map<std::string, std::string> metadata;
};

CheckpointHeader read_checkpoint_header(const std::string& path);

template <class T>
ChainNet<T> load_checkpoint(const std::string& path, CheckpointHeader* header = nullptr);

}  // namespace chainnet::model
