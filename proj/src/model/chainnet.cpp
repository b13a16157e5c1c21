#include "chainnet/model/chainnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "chainnet/errors.hpp"
#include "chainnet/nn/checkpoint.hpp"
#include "chainnet/seed.hpp"

namespace chainnet::model {

using nn::ConvSpec;
using nn::Graph;
using nn::Mode;
using nn::Parameter;
using nn::ParamRole;
using nn::Shape;
using nn::Tensor;
using nn::Var;

void NetworkConfig::validate() const {
  if (signal_length < 4) throw ConfigError("network.signal_length must be >= 4, got " + std::to_string(signal_length));
  if (kernel_count == 0) throw ConfigError("network.kernel_count must be positive");
  if (class_count == 0) throw ConfigError("network.class_count must be positive");
  if (block_count == 0) throw ConfigError("network.block_count must be positive");
  if (fc_width == 0) throw ConfigError("network.fc_width must be positive");
  if (!(dropout_ratio >= 0.0 && dropout_ratio < 1.0))
    throw ConfigError("network.dropout_ratio must lie in [0, 1)");
}

std::size_t count_parameters(const NetworkConfig& c) {
  c.validate();
  const std::size_t k = c.kernel_count;
  const std::size_t f = c.fc_width;
  const std::size_t stack = 1 * 5 * 1 * k + k;
  const std::size_t block = 2 * (3 * k * k + k) + (2 * k * k + k);
  const std::size_t head = (2 * k * f + f) + (f * f + f) + (f * c.class_count + c.class_count);
  return stack + c.block_count * block + head;
}

std::string format_shape_trace(const ShapeTrace& trace) {
  std::ostringstream os;
  for (const auto& e : trace) os << std::left << std::setw(10) << e.layer << e.shape.volume_str() << '\n';
  return os.str();
}

nn::ConvSpec horizontal_flow_spec(std::size_t kernels) { return {1, 3, kernels, kernels, 1, 2}; }
nn::ConvSpec vertical_flow_spec(std::size_t kernels) { return {3, 1, kernels, kernels, 1, 2}; }
nn::ConvSpec rescale_spec(std::size_t kernels) { return {1, 1, 2 * kernels, kernels, 1, 1}; }

namespace {

ConvSpec stack_spec(std::size_t kernels) { return {1, 5, 1, kernels, 1, 2}; }
constexpr nn::PoolSpec kStackPool{1, 2, 1, 2};

// Parameter layout: stack (w, b), then per block 1x3 (w, b), 3x1 (w, b),
// 1x1 (w, b), then fc1, fc2, fc3 (w, b each).
constexpr std::size_t kStackParams = 2;
constexpr std::size_t kBlockParams = 6;

std::size_t fc_index(const NetworkConfig& c, std::size_t layer) {
  return kStackParams + c.block_count * kBlockParams + 2 * layer;
}

template <class T>
void push_conv(std::vector<Parameter<T>>& params, const std::string& name, const ConvSpec& spec) {
  params.emplace_back(name + ".w", ParamRole::Weight, spec.weight_shape());
  params.emplace_back(name + ".b", ParamRole::Bias, spec.bias_shape());
}

template <class T>
void push_fc(std::vector<Parameter<T>>& params, const std::string& name, std::size_t in, std::size_t out) {
  params.emplace_back(name + ".w", ParamRole::Weight, Shape{1, 1, in, out});
  params.emplace_back(name + ".b", ParamRole::Bias, Shape{1, 1, 1, out});
}

// Uniform weights with bound sqrt(3 * gain / fan_in); zero biases. Gain 2 (He)
// for layers feeding a ReLU; the classifier gets 0.25 so the first predictions
// are close to uniform.
template <class T>
void init_weight(Parameter<T>& p, std::size_t fan_in, std::uint64_t seed, double gain = 2.0) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(3.0 * gain / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : p.value.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <class T>
std::pair<Var, Var> chain_block_forward(Graph<T>& g, Var in_h, Var in_v, const ChainBlockVars& p,
                                        std::size_t kernels) {
  if (g.value(in_h).shape() != g.value(in_v).shape())
    throw ConfigError("chain block: flow shapes differ (" + g.value(in_h).shape().str() + " vs " +
                      g.value(in_v).shape().str() + ")");
  const Var f_h = nn::relu(g, nn::conv2d(g, in_h, horizontal_flow_spec(kernels), p.conv_1x3_w, p.conv_1x3_b));
  const Var f_v = nn::relu(g, nn::conv2d(g, in_v, vertical_flow_spec(kernels), p.conv_3x1_w, p.conv_3x1_b));
  const Var d = nn::depthcat(g, f_h, f_v);
  const Var r = nn::relu(g, nn::conv2d(g, d, rescale_spec(kernels), p.conv_1x1_w, p.conv_1x1_b));
  return {nn::add(g, f_h, r), nn::add(g, f_v, r)};
}

template <class T>
ChainNet<T>::ChainNet(NetworkConfig config) : config_(config) {
  config_.validate();
  const std::size_t k = config_.kernel_count;
  push_conv(params_, "stack.conv1x5", stack_spec(k));
  for (std::size_t b = 0; b < config_.block_count; ++b) {
    const std::string name = "block" + std::to_string(b + 1);
    push_conv(params_, name + ".conv1x3", horizontal_flow_spec(k));
    push_conv(params_, name + ".conv3x1", vertical_flow_spec(k));
    push_conv(params_, name + ".conv1x1", rescale_spec(k));
  }
  push_fc(params_, "fc1", 2 * k, config_.fc_width);
  push_fc(params_, "fc2", config_.fc_width, config_.fc_width);
  push_fc(params_, "fc3", config_.fc_width, config_.class_count);

  init_weight(params_[0], stack_spec(k).fan_in(), derive_seed(config_.seed, {0, 0}));
  for (std::size_t b = 0; b < config_.block_count; ++b) {
    const std::uint64_t block_seed = derive_seed(config_.seed, {1, b});
    const std::size_t base = kStackParams + b * kBlockParams;
    init_weight(params_[base + 0], horizontal_flow_spec(k).fan_in(), derive_seed(block_seed, {0}));
    init_weight(params_[base + 2], vertical_flow_spec(k).fan_in(), derive_seed(block_seed, {1}));
    if (!config_.zero_init_rescale)
      init_weight(params_[base + 4], rescale_spec(k).fan_in(), derive_seed(block_seed, {2}));
  }
  init_weight(params_[fc_index(config_, 0)], 2 * k, derive_seed(config_.seed, {2, 0}));
  init_weight(params_[fc_index(config_, 1)], config_.fc_width, derive_seed(config_.seed, {2, 1}));
  init_weight(params_[fc_index(config_, 2)], config_.fc_width, derive_seed(config_.seed, {2, 2}), 0.25);
}

template <class T>
void ChainNet<T>::check_frames(const Shape& s) const {
  if (s.h != 2) throw ConfigError("frames must have height 2 (I and Q rows), got " + std::to_string(s.h));
  if (s.w != config_.signal_length)
    throw ConfigError("frame length " + std::to_string(s.w) + " does not match network signal_length " +
                      std::to_string(config_.signal_length));
  if (s.c != 1) throw ConfigError("frames must have 1 channel, got " + std::to_string(s.c));
}

template <class T>
template <class Self>
Var ChainNet<T>::forward_impl(Self& self, Graph<T>& g, Var frames, Mode mode, std::uint64_t dropout_seed,
                              ShapeTrace* trace) {
  const NetworkConfig& c = self.config_;
  self.check_frames(g.value(frames).shape());
  auto& params = self.params_;
  auto bind = [&](std::size_t i) { return g.parameter(params[i]); };
  auto record = [&](const char* name, Var v) {
    if (trace == nullptr) return;
    Shape s = g.value(v).shape();
    s.n = 1;
    trace->push_back({name, s});
  };
  const std::size_t k = c.kernel_count;

  record("input", frames);
  Var x = nn::conv2d(g, frames, stack_spec(k), bind(0), bind(1));
  x = nn::relu(g, x);
  x = nn::maxpool(g, x, kStackPool);
  record("stack", x);

  Var flow_h = x;
  Var flow_v = x;
  for (std::size_t b = 0; b < c.block_count; ++b) {
    const std::size_t base = kStackParams + b * kBlockParams;
    const ChainBlockVars vars{bind(base), bind(base + 1), bind(base + 2),
                              bind(base + 3), bind(base + 4), bind(base + 5)};
    std::tie(flow_h, flow_v) = chain_block_forward(g, flow_h, flow_v, vars, k);
    if (trace) record(("block" + std::to_string(b + 1)).c_str(), flow_h);
  }

  x = nn::depthcat(g, flow_h, flow_v);
  record("depthcat", x);
  x = nn::global_avgpool(g, x);
  record("avgpool", x);
  x = nn::relu(g, nn::fully_connected(g, x, bind(fc_index(c, 0)), bind(fc_index(c, 0) + 1)));
  record("fc1", x);
  x = nn::relu(g, nn::fully_connected(g, x, bind(fc_index(c, 1)), bind(fc_index(c, 1) + 1)));
  record("fc2", x);
  x = nn::dropout(g, x, c.dropout_ratio, mode, dropout_seed);
  x = nn::fully_connected(g, x, bind(fc_index(c, 2)), bind(fc_index(c, 2) + 1));
  record("fc3", x);
  return x;
}

template <class T>
Var ChainNet<T>::forward(Graph<T>& g, Var frames, Mode mode, std::uint64_t dropout_seed, ShapeTrace* trace) {
  return forward_impl(*this, g, frames, mode, dropout_seed, trace);
}

template <class T>
Var ChainNet<T>::forward(Graph<T>& g, Var frames, Mode mode, std::uint64_t dropout_seed, ShapeTrace* trace) const {
  return forward_impl(*this, g, frames, mode, dropout_seed, trace);
}

template <class T>
Tensor<T> ChainNet<T>::classify(const Tensor<T>& frames) const {
  Graph<T> g(nn::GradMode::Disabled);
  const Var in = g.input(frames);
  const Var logits = forward(g, in, Mode::Infer, 0);
  return g.value(nn::softmax(g, logits));
}

template <class T>
ShapeTrace ChainNet<T>::shape_trace() const {
  Graph<T> g(nn::GradMode::Disabled);
  const Var in = g.input(Tensor<T>(Shape{1, 2, config_.signal_length, 1}));
  ShapeTrace trace;
  const Var logits = forward(g, in, Mode::Infer, 0, &trace);
  Shape s = g.value(nn::softmax(g, logits)).shape();
  trace.push_back({"softmax", s});
  return trace;
}

template <class T>
std::size_t ChainNet<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

template <class T>
void ChainNet<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
    p.zero_grad();
  }
}

template <class T>
std::uint64_t ChainNet<T>::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.ptr());
    for (std::size_t i = 0; i < p.value.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

constexpr const char* kHeaderLine = "chainnet-checkpoint 1";

void write_config(std::ostream& os, const NetworkConfig& c) {
  os << "signal_length=" << c.signal_length << '\n'
     << "kernel_count=" << c.kernel_count << '\n'
     << "class_count=" << c.class_count << '\n'
     << "block_count=" << c.block_count << '\n'
     << "fc_width=" << c.fc_width << '\n'
     << "dropout_ratio=" << std::setprecision(17) << c.dropout_ratio << '\n'
     << "seed=" << c.seed << '\n'
     << "zero_init_rescale=" << (c.zero_init_rescale ? 1 : 0) << '\n';
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw IoError("checkpoint header: bad value for " + key + ": '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw IoError("checkpoint header: bad value for " + key + ": '" + v + "'");
  }
}

CheckpointHeader parse_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != kHeaderLine) throw IoError(path + ": not a chainnet checkpoint");
  CheckpointHeader h;
  while (std::getline(in, line)) {
    if (line.empty()) return h;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(path + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "signal_length") h.config.signal_length = parse_size(key, val);
    else if (key == "kernel_count") h.config.kernel_count = parse_size(key, val);
    else if (key == "class_count") h.config.class_count = parse_size(key, val);
    else if (key == "block_count") h.config.block_count = parse_size(key, val);
    else if (key == "fc_width") h.config.fc_width = parse_size(key, val);
    else if (key == "dropout_ratio") h.config.dropout_ratio = parse_real(key, val);
    else if (key == "seed") h.config.seed = parse_size(key, val);
    else if (key == "zero_init_rescale") h.config.zero_init_rescale = parse_size(key, val) != 0;
    else h.metadata[key] = val;
  }
  throw IoError(path + ": checkpoint header not terminated");
}

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, const ChainNet<T>& net, const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kHeaderLine << '\n';
  write_config(out, net.config());
  for (const auto& [k, v] : metadata) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("checkpoint metadata key/value may not contain '=' or newlines: " + k);
    out << k << '=' << v << '\n';
  }
  out << '\n';
  nn::write_weights<T>(out, std::span<const Parameter<T>>(net.parameters()));
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return parse_header(in, path);
}

template <class T>
ChainNet<T> load_checkpoint(const std::string& path, CheckpointHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  CheckpointHeader h = parse_header(in, path);
  ChainNet<T> net(h.config);
  const auto stored = nn::read_weights(in);
  nn::assign_weights<T>(std::span<Parameter<T>>(net.parameters()), stored);
  if (header) *header = std::move(h);
  return net;
}

template std::pair<Var, Var> chain_block_forward<float>(Graph<float>&, Var, Var, const ChainBlockVars&, std::size_t);
template std::pair<Var, Var> chain_block_forward<double>(Graph<double>&, Var, Var, const ChainBlockVars&, std::size_t);
template class ChainNet<float>;
template class ChainNet<double>;
template void save_checkpoint<float>(const std::string&, const ChainNet<float>&, const std::map<std::string, std::string>&);
template void save_checkpoint<double>(const std::string&, const ChainNet<double>&, const std::map<std::string, std::string>&);
template ChainNet<float> load_checkpoint<float>(const std::string&, CheckpointHeader*);
template ChainNet<double> load_checkpoint<double>(const std::string&, CheckpointHeader*);

}  // namespace chainnet::model
