#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "chainnet/model/chainnet.hpp"
#include "chainnet/nn/optimizer.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"

using namespace chainnet;
using namespace chainnet::nn;
using model::ChainNet;
using model::NetworkConfig;

namespace {

std::string volume(const model::ShapeTrace& t, const std::string& layer) {
  for (const auto& e : t)
    if (e.layer == layer) return e.shape.volume_str();
  return "<missing " + layer + ">";
}

NetworkConfig with(std::size_t length, std::size_t kernels, std::size_t classes = 14) {
  NetworkConfig c;
  c.signal_length = length;
  c.kernel_count = kernels;
  c.class_count = classes;
  return c;
}

}  // namespace

TEST_CASE("default shape trace matches the architecture table") {
  const auto trace = ChainNet<float>(NetworkConfig{}).shape_trace();
  CHECK(volume(trace, "input") == "2 x 1024 x 1");
  CHECK(volume(trace, "stack") == "2 x 256 x 64");
  CHECK(volume(trace, "block6") == "2 x 4 x 64");
  CHECK(volume(trace, "depthcat") == "2 x 4 x 128");
  CHECK(volume(trace, "avgpool") == "1 x 1 x 128");
  CHECK(volume(trace, "fc3") == "1 x 1 x 14");
  const std::string text = model::format_shape_trace(trace);
  CHECK(text.substr(text.size() - 11) == "1 x 1 x 14\n");
}

TEST_CASE("short signals follow the ceil-division width trace") {
  for (std::size_t len : {16, 100, 128, 256, 512, 1000, 1024}) {
    const auto trace = ChainNet<float>(with(len, 8)).shape_trace();
    const auto widths = oracle::ceil_width_trace(len, 6);
    CHECK(ChainNet<float>(with(len, 8)).shape_trace()[1].shape.w == widths[0]);
    for (std::size_t b = 1; b <= 6; ++b) CHECK(trace[1 + b].shape.w == widths[b]);
    CHECK(volume(trace, "avgpool") == "1 x 1 x 16");
  }
  const auto trace = ChainNet<float>(with(128, 64)).shape_trace();
  CHECK(volume(trace, "stack") == "2 x 32 x 64");
  std::vector<std::size_t> widths;
  for (std::size_t b = 1; b <= 6; ++b) widths.push_back(trace[1 + b].shape.w);
  CHECK(widths == std::vector<std::size_t>{16, 8, 4, 2, 1, 1});
  CHECK(volume(trace, "avgpool") == "1 x 1 x 128");
}

TEST_CASE("two-class head") {
  const ChainNet<float> net(with(64, 4, 2));
  CHECK(volume(net.shape_trace(), "fc3") == "1 x 1 x 2");
  std::mt19937_64 rng(1);
  const auto p = net.classify(oracle::random_tensor<float>({3, 2, 64, 1}, rng));
  CHECK(p.shape() == Shape{3, 1, 1, 2});
}

TEST_CASE("parameter count") {
  CHECK(oracle::graph_walk_parameter_count(NetworkConfig{}) == 232974);
  CHECK(model::count_parameters(NetworkConfig{}) == 232974);
  CHECK(ChainNet<float>(NetworkConfig{}).parameter_count() == 232974);
  for (std::size_t len : {128, 256, 512, 1024})
    for (std::size_t k : {16, 32, 64, 128}) {
      const NetworkConfig c = with(len, k);
      CHECK(model::count_parameters(c) == oracle::graph_walk_parameter_count(c));
      CHECK(ChainNet<float>(c).parameter_count() == oracle::graph_walk_parameter_count(c));
    }
  CHECK(model::count_parameters(with(1024, 16)) < model::count_parameters(with(1024, 32)));
  CHECK(model::count_parameters(with(1024, 32)) < model::count_parameters(with(1024, 64)));
  CHECK(model::count_parameters(with(1024, 64, 14)) - model::count_parameters(with(1024, 64, 2)) == 128 * 12 + 12);
}

TEST_CASE("forward and backward run for every sweep configuration") {
  std::mt19937_64 rng(2);
  for (std::size_t len : {128, 256, 512, 1024})
    for (std::size_t k : {16, 32, 64, 128}) {
      ChainNet<float> net(with(len, k));
      Graph<float> g;
      Tensor<float> t({1, 1, 1, 14});
      t[0] = 1;
      const auto out = softmax_cross_entropy(
          g, net.forward(g, g.input(oracle::random_tensor<float>({1, 2, len, 1}, rng)), Mode::Train, 1), g.input(t));
      g.backward(out.loss);
      CHECK(std::isfinite(g.value(out.loss)[0]));
    }
}

TEST_CASE("chain block") {
  const std::size_t k = 64;
  auto make = [&](Graph<double>& g, std::vector<Parameter<double>>& ps) {
    ps.clear();
    ps.emplace_back("h.w", ParamRole::Weight, model::horizontal_flow_spec(k).weight_shape());
    ps.emplace_back("h.b", ParamRole::Bias, Shape{1, 1, 1, k});
    ps.emplace_back("v.w", ParamRole::Weight, model::vertical_flow_spec(k).weight_shape());
    ps.emplace_back("v.b", ParamRole::Bias, Shape{1, 1, 1, k});
    ps.emplace_back("r.w", ParamRole::Weight, model::rescale_spec(k).weight_shape());
    ps.emplace_back("r.b", ParamRole::Bias, Shape{1, 1, 1, k});
    return model::ChainBlockVars{g.parameter(ps[0]), g.parameter(ps[1]), g.parameter(ps[2]),
                                 g.parameter(ps[3]), g.parameter(ps[4]), g.parameter(ps[5])};
  };
  std::mt19937_64 rng(3);
  std::vector<Parameter<double>> ps;

  SUBCASE("zero input and zero biases give zero output") {
    Graph<double> g;
    const auto vars = make(g, ps);
    for (std::size_t i : {0, 2, 4}) ps[i].value = oracle::random_tensor<double>(ps[i].value.shape(), rng);
    const Var x = g.input(Tensor<double>({1, 2, 256, k}));
    const auto [h, v] = model::chain_block_forward(g, x, x, vars, k);
    for (double e : g.value(h).data()) CHECK(e == 0.0);
    for (double e : g.value(v).data()) CHECK(e == 0.0);
  }
  SUBCASE("shapes halve the width") {
    Graph<double> g;
    const auto vars = make(g, ps);
    const Var x = g.input(oracle::random_tensor<double>({1, 2, 256, k}, rng));
    const auto [h, v] = model::chain_block_forward(g, x, x, vars, k);
    CHECK(g.value(h).shape().volume_str() == "2 x 128 x 64");
    CHECK(g.value(v).shape().volume_str() == "2 x 128 x 64");
    // The rescale input d is the node right before the 1x1 convolution.
    bool found = false;
    for (std::size_t i = 0; i < g.size(); ++i)
      found = found || g.value(Var{i}).shape().volume_str() == "2 x 128 x 128";
    CHECK(found);
  }
  SUBCASE("zero rescale weights make the block its flows") {
    Graph<double> g;
    const auto vars = make(g, ps);
    for (std::size_t i : {0, 1, 2, 3}) ps[i].value = oracle::random_tensor<double>(ps[i].value.shape(), rng);
    const auto xin = oracle::random_tensor<double>({1, 2, 32, k}, rng);
    const Var x = g.input(xin);
    const auto [h, v] = model::chain_block_forward(g, x, x, vars, k);
    Graph<double> g2;
    const Var fh = relu(g2, conv2d(g2, g2.input(xin), model::horizontal_flow_spec(k), g2.parameter(ps[0]),
                                   g2.parameter(ps[1])));
    const Var fv = relu(g2, conv2d(g2, g2.input(xin), model::vertical_flow_spec(k), g2.parameter(ps[2]),
                                   g2.parameter(ps[3])));
    CHECK(std::equal(g.value(h).data().begin(), g.value(h).data().end(), g2.value(fh).data().begin()));
    CHECK(std::equal(g.value(v).data().begin(), g.value(v).data().end(), g2.value(fv).data().begin()));
  }
}

TEST_CASE("default init makes every block the identity on its flows") {
  const ChainNet<float> net(NetworkConfig{});
  for (const auto& p : net.parameters())
    if (p.tag.find("conv1x1") != std::string::npos)
      for (float v : p.value.data()) CHECK(v == 0.0f);
  NetworkConfig he;
  he.zero_init_rescale = false;
  const ChainNet<float> other(he);
  bool nonzero = false;
  for (const auto& p : other.parameters())
    if (p.tag == "block1.conv1x1.w")
      for (float v : p.value.data()) nonzero = nonzero || v != 0.0f;
  CHECK(nonzero);
}

TEST_CASE("zeroed asymmetric convolutions give logits from the head biases only") {
  NetworkConfig c = with(64, 4, 5);
  ChainNet<double> net(c);
  std::mt19937_64 rng(4);
  for (auto& p : net.parameters()) {
    const bool flow = p.tag.find("conv1x3") != std::string::npos || p.tag.find("conv3x1") != std::string::npos;
    if (flow)
      p.value.fill(0.0);
    else if (p.tag.find("conv1x1") == std::string::npos)
      p.value = oracle::random_tensor<double>(p.value.shape(), rng);
  }
  const auto x = oracle::random_tensor<double>({4, 2, 64, 1}, rng);
  Graph<double> g(GradMode::Disabled);
  const auto logits = g.value(net.forward(g, g.input(x), Mode::Infer, 0));
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t j = 0; j < 5; ++j) CHECK(logits[r * 5 + j] == logits[j]);
}

TEST_CASE("end-to-end gradient of the tiny network") {
  const auto errors = oracle::end_to_end_gradient_check(oracle::tiny_network());
  CHECK(errors.size() == 2 + 2 * 6 + 6);
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.error < 1e-5);
  }
}

TEST_CASE("classification invariants") {
  const ChainNet<float> net(with(256, 16));
  std::mt19937_64 rng(5);
  const auto batch = oracle::random_tensor<float>({6, 2, 256, 1}, rng);
  const auto p = net.classify(batch);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 14; ++c) s += p[r * 14 + c];
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  Tensor<float> same({5, 2, 256, 1});
  for (std::size_t r = 0; r < 5; ++r) std::copy_n(batch.ptr(), 512, same.ptr() + r * 512);
  const auto q = net.classify(same);
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 14; ++c) CHECK(q[r * 14 + c] == q[c]);
  for (std::size_t r = 0; r < 6; ++r) {
    Tensor<float> one({1, 2, 256, 1});
    std::copy_n(batch.ptr() + r * 512, 512, one.ptr());
    const auto single = net.classify(one);
    for (std::size_t c = 0; c < 14; ++c) CHECK(std::abs(single[c] - p[r * 14 + c]) <= 1e-6);
  }
  CHECK_THROWS_AS(net.classify(oracle::random_tensor<float>({1, 2, 128, 1}, rng)), ConfigError);
}

TEST_CASE("identical seeds give identical parameter trajectories") {
  std::mt19937_64 rng(6);
  const auto x = oracle::random_tensor<float>({4, 2, 128, 1}, rng);
  Tensor<float> t({4, 1, 1, 14});
  for (std::size_t r = 0; r < 4; ++r) t[r * 14 + r] = 1;
  auto trajectory = [&] {
    ChainNet<float> net(with(128, 8));
    Sgd<float> opt(0.01, 0.9);
    std::vector<std::uint64_t> sums;
    for (int step = 0; step < 4; ++step) {
      net.zero_grad();
      Graph<float> g;
      g.backward(softmax_cross_entropy(g, net.forward(g, g.input(x), Mode::Train, 100 + step), g.input(t)).loss);
      opt.step(net.parameters());
      sums.push_back(net.checksum());
    }
    return sums;
  };
  const auto a = trajectory();
  CHECK(a == trajectory());
  CHECK(a[0] != a[1]);

  NetworkConfig other = with(128, 8);
  other.seed = 2;
  CHECK(ChainNet<float>(other).checksum() != ChainNet<float>(with(128, 8)).checksum());
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "chainnet_model_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "net.ckpt").string();
  NetworkConfig c = with(256, 8, 5);
  c.dropout_ratio = 0.25;
  c.seed = 99;
  ChainNet<float> net(c);
  model::save_checkpoint(path, net, {{"epoch", "7"}});
  const auto header = model::read_checkpoint_header(path);
  CHECK(header.config.signal_length == 256);
  CHECK(header.config.kernel_count == 8);
  CHECK(header.config.class_count == 5);
  CHECK(header.config.dropout_ratio == 0.25);
  CHECK(header.config.zero_init_rescale);
  CHECK(header.metadata.at("epoch") == "7");
  const auto loaded = model::load_checkpoint<float>(path);
  CHECK(loaded.checksum() == net.checksum());
  const auto wide = model::load_checkpoint<double>(path);
  CHECK(wide.parameters()[0].value[3] == static_cast<double>(net.parameters()[0].value[3]));

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  CHECK_THROWS_AS(model::load_checkpoint<float>(path), IoError);
  CHECK_THROWS_AS(model::read_checkpoint_header((dir / "missing.ckpt").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation names the field") {
  NetworkConfig c;
  c.kernel_count = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("kernel_count"), ConfigError);
  c = NetworkConfig{};
  c.dropout_ratio = 1.0;
  CHECK_THROWS_WITH_AS(ChainNet<float>{c}, doctest::Contains("dropout_ratio"), ConfigError);
}
