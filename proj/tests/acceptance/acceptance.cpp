// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <deque>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "chainnet/dataset/dataset.hpp"
#include "chainnet/model/chainnet.hpp"
#include "chainnet/modem/modem.hpp"
#include "chainnet/trainer/trainer.hpp"
#include "channel_stats.hpp"
#include "fixtures.hpp"
#include "gradient_suite.hpp"
#include "loopback.hpp"
#include "oracles.hpp"

using namespace chainnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

void log(const std::string& s) { std::cerr << "  " << s << std::endl; }

// Criterion 1
Outcome shape_conformance() {
  const auto trace = model::ChainNet<float>(model::NetworkConfig{}).shape_trace();
  const std::vector<std::pair<std::string, std::string>> table{{"input", "2 x 1024 x 1"}, {"stack", "2 x 256 x 64"},
                                                               {"block6", "2 x 4 x 64"},   {"depthcat", "2 x 4 x 128"},
                                                               {"avgpool", "1 x 1 x 128"}, {"fc3", "1 x 1 x 14"}};
  std::size_t ok = 0;
  std::string bad;
  for (const auto& [layer, want] : table) {
    std::string got = "<missing>";
    for (const auto& e : trace)
      if (e.layer == layer) got = e.shape.volume_str();
    if (got == want) ++ok;
    else bad += " " + layer + "=" + got;
  }
  return {ok == table.size(), std::to_string(ok) + "/6 shapes match" + bad};
}

// Criterion 2
Outcome parameter_count() {
  const model::NetworkConfig c;
  const std::size_t walk = oracle::graph_walk_parameter_count(c);
  const std::size_t closed = model::count_parameters(c);
  const std::size_t built = model::ChainNet<float>(c).parameter_count();
  return {walk == closed && closed == built,
          "graph walk " + std::to_string(walk) + ", closed form " + std::to_string(closed) + ", built " +
              std::to_string(built)};
}

// Criterion 3
Outcome gradient_suite() {
  const double layers = oracle::worst(oracle::layer_gradient_suite());
  const double net = oracle::worst(oracle::end_to_end_gradient_check(oracle::tiny_network()));
  return {layers < 1e-6 && net < 1e-5, "worst per-layer " + fmt(layers, 3) + ", end-to-end " + fmt(net, 3)};
}

// Criterion 4
Outcome softmax_identities() {
  nn::Graph<double> g(nn::GradMode::Disabled);
  std::mt19937_64 rng(4);
  const auto z = oracle::random_tensor<double>({64, 1, 1, 14}, rng, -30, 30);
  auto shifted = z;
  for (double& v : shifted.data()) v += 123.25;
  const auto p = g.value(nn::softmax(g, g.input(z)));
  const auto q = g.value(nn::softmax(g, g.input(shifted)));
  double row_err = 0, shift_err = 0;
  for (std::size_t r = 0; r < 64; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 14; ++c) {
      s += p[r * 14 + c];
      shift_err = std::max(shift_err, std::abs(p[r * 14 + c] - q[r * 14 + c]));
    }
    row_err = std::max(row_err, std::abs(s - 1.0));
  }
  nn::Tensor<double> targets({5, 1, 1, 14});
  for (std::size_t r = 0; r < 5; ++r) targets[r * 14 + (r * 3) % 14] = 1.0;
  const double uniform = g.value(nn::softmax_cross_entropy(g, g.input(nn::Tensor<double>({5, 1, 1, 14}, 0.7)),
                                                           g.input(targets)).loss)[0];
  const double loss_err = std::abs(uniform - std::log(14.0));
  return {row_err <= 1e-6 && loss_err <= 1e-6 && shift_err <= 1e-12,
          "row sum error " + fmt(row_err, 3) + ", uniform loss error " + fmt(loss_err, 3) + ", shift error " +
              fmt(shift_err, 3)};
}

// Criterion 5
Outcome channel_statistics() {
  double snr_err = 0;
  for (double snr : {-20.0, -10.0, 0.0, 10.0, 20.0})
    snr_err = std::max(snr_err, std::abs(oracle::measure_awgn(1'000'000, snr, 50).snr_db - snr));
  const auto db = oracle::epa_tap_powers_db(100'000);
  const std::vector<double> want{0, -1, -2, -3, -8, -17.2, -20.8};
  double tap_err = 0;
  for (std::size_t i = 0; i < want.size(); ++i) tap_err = std::max(tap_err, std::abs(db[i] - want[i]));
  const double ks = oracle::rayleigh_envelope_ks(100'000);
  return {snr_err <= 0.1 && tap_err <= 0.3 && ks < 0.01,
          "worst SNR error " + fmt(snr_err, 3) + " dB, worst tap error " + fmt(tap_err, 3) + " dB, KS " + fmt(ks, 3)};
}

// Criterion 6
Outcome modem_loopback() {
  double worst_recovery = 2.0, worst_power = 0.0;
  std::string worst_name;
  for (modem::Scheme s : modem::all_schemes()) {
    if (!modem::is_digital(s)) continue;
    oracle::LoopbackStats st;
    for (std::uint64_t seed = 0; seed < 10; ++seed) st.merge(oracle::loopback(s, 1024, 600 + seed));
    if (st.recovery() < worst_recovery) {
      worst_recovery = st.recovery();
      worst_name = modem::scheme_name(s);
    }
    double power = 0;
    const auto pts = modem::make_constellation(s).points;
    for (const auto& z : pts) power += std::norm(z);
    worst_power = std::max(worst_power, std::abs(power / static_cast<double>(pts.size()) - 1.0));
  }
  return {worst_recovery >= 0.999 && worst_power <= 1e-9,
          "lowest recovery " + fmt(100 * worst_recovery, 6) + "% (" + worst_name + "), unit power error " +
              fmt(worst_power, 3)};
}

// Criterion 7
Outcome overfit() {
  dataset::DatasetManifest m;
  m.frame_len = 256;
  m.schemes = {modem::Scheme::Fm, modem::Scheme::Pam16, modem::Scheme::Qam16};
  m.snrs_db = {20};
  m.frames_per_cell = 10;
  m.scenario = channel::Scenario::None;
  m.master_seed = 7;
  const auto data = oracle::synthesize_dataset(m);
  dataset::Splits s;
  for (std::size_t i = 0; i < data.size(); ++i) s.train.push_back(i);

  model::NetworkConfig nc;
  nc.signal_length = 256;
  nc.kernel_count = 16;
  nc.class_count = 3;
  model::ChainNet<float> net(nc);
  trainer::TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 10;
  std::optional<std::size_t> reached;
  double best = 0;
  trainer::TrainHooks hooks;
  hooks.on_epoch = [&](const trainer::EpochRecord& e) {
    if (reached) return;
    const double acc = trainer::evaluate(net, data, s.train).pooled_accuracy();
    best = std::max(best, acc);
    if (acc >= 0.99) reached = e.epoch;
  };
  trainer::train(net, data, s, tc, hooks);
  return {reached.has_value(), reached ? "training accuracy >= 99% at epoch " + std::to_string(*reached)
                                       : "best training accuracy " + fmt(best) + " after 200 epochs"};
}

// Criteria 8 to 10 share one reduced EPA dataset.
dataset::DatasetManifest reduced_manifest() {
  dataset::DatasetManifest m = dataset::DatasetManifest::full_grid();
  m.snrs_db = {-10, 0, 10, 20};
  m.frames_per_cell = 200;
  m.scenario = channel::Scenario::Epa;
  return m;
}

trainer::TrainConfig desk_training(std::size_t epochs) {
  trainer::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 64;
  tc.learning_rate = 0.01;
  tc.momentum = 0.9;
  return tc;
}

struct DeskRun {
  std::string label;
  trainer::EvalReport report;
  double seconds = 0;
};

class DeskScale {
 public:
  DeskScale(fs::path dir, std::size_t epochs) : dir_(std::move(dir)), epochs_(epochs) {}

  const fs::path& dataset_file() {
    if (path_.empty()) {
      fs::create_directories(dir_);
      path_ = dir_ / "reduced_epa.cnds";
      if (!fs::exists(path_) || dataset::read_dataset_manifest(path_) != reduced_manifest()) {
        log("generating " + path_.string());
        dataset::generate_dataset(reduced_manifest(), path_);
      }
    }
    return path_;
  }

  const DeskRun& run(std::size_t length, std::size_t kernels) {
    const std::string label = "l=" + std::to_string(length) + ",K=" + std::to_string(kernels);
    for (const auto& r : runs_)
      if (r.label == label) return r;
    if (!data_) data_.emplace(dataset::load_dataset(dataset_file()));
    const auto splits = dataset::split_dataset(data_->manifest(), {});
    model::NetworkConfig nc;
    nc.signal_length = length;
    nc.kernel_count = kernels;
    model::ChainNet<float> net(nc);
    const auto t0 = Clock::now();
    trainer::TrainHooks hooks;
    hooks.on_epoch = [&](const trainer::EpochRecord& e) {
      log(label + " epoch " + std::to_string(e.epoch) + " loss " + fmt(e.train_loss) + " val acc " +
          fmt(e.val_accuracy.value_or(0)));
    };
    trainer::train(net, *data_, splits, desk_training(epochs_), hooks);
    DeskRun r{label, trainer::evaluate(net, *data_, splits.test),
              std::chrono::duration<double>(Clock::now() - t0).count()};
    std::string line = label + " test accuracy by SNR:";
    for (const auto& b : r.report.buckets) line += " " + std::to_string(b.snr_db) + "dB=" + fmt(b.accuracy());
    log(line);
    runs_.push_back(std::move(r));
    return runs_.back();
  }

  std::size_t epochs() const { return epochs_; }

 private:
  fs::path dir_;
  std::size_t epochs_;
  fs::path path_;
  std::optional<dataset::Dataset> data_;
  std::deque<DeskRun> runs_;  // run() hands out references
};

double acc_at(const DeskRun& r, int snr) { return r.report.accuracy_at(static_cast<std::int8_t>(snr)).value_or(-1); }

// Criterion 8
Outcome learning_signal(DeskScale& desk) {
  const DeskRun& r = desk.run(1024, 64);
  const double hi = acc_at(r, 20), lo = acc_at(r, -10);
  return {desk.epochs() >= 30 && hi >= 3.0 / 14 && hi > lo,
          std::to_string(desk.epochs()) + " epochs, test accuracy +20 dB " + fmt(hi) + " (need >= 0.2143), -10 dB " +
              fmt(lo) + ", " + fmt(r.seconds / 60, 3) + " min"};
}

// Criterion 9
Outcome sensitivity(DeskScale& desk) {
  const DeskRun& base = desk.run(1024, 64);
  const DeskRun& shorter = desk.run(128, 64);
  const DeskRun& fewer = desk.run(1024, 16);
  const double l_long = acc_at(base, 20), l_short = acc_at(shorter, 20);
  const double k_many = acc_at(base, 10), k_few = acc_at(fewer, 10);
  return {l_long >= l_short && k_many >= k_few,
          "+20 dB: l=1024 " + fmt(l_long) + " vs l=128 " + fmt(l_short) + "; +10 dB: K=64 " + fmt(k_many) +
              " vs K=16 " + fmt(k_few)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Criterion 10
Outcome determinism(DeskScale& desk, const fs::path& dir) {
  const fs::path& first = desk.dataset_file();
  const fs::path second = dir / "regenerated.cnds";
  dataset::generate_dataset(reduced_manifest(), second);
  const bool same_bytes = slurp(first) == slurp(second);
  fs::remove(second);

  const dataset::Dataset data = dataset::load_dataset(first);
  const auto splits = dataset::split_dataset(data.manifest(), {});
  auto train_once = [&] {
    model::NetworkConfig nc;
    nc.signal_length = 256;
    nc.kernel_count = 16;
    model::ChainNet<float> net(nc);
    const auto r = trainer::train(net, data, splits, desk_training(2));
    std::vector<double> h;
    for (const auto& e : r.history) h.push_back(e.train_loss);
    return std::make_tuple(r.batch_losses, h, net.checksum());
  };
  const auto a = train_once();
  const auto b = train_once();
  const bool same_training = a == b;
  return {same_bytes && same_training,
          std::string("dataset regeneration ") + (same_bytes ? "byte-identical" : "DIFFERS") + ", " +
              std::to_string(std::get<0>(a).size()) + " batch losses " +
              (same_training ? "identical" : "DIFFER") + " across two seeded runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chainnet acceptance criteria"};
  std::vector<int> only;
  std::string dir = (fs::temp_directory_path() / "chainnet_acceptance").string();
  std::size_t epochs = 30;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--data-dir", dir, "where the reduced dataset is kept");
  app.add_option("--epochs", epochs, "epochs per desk-scale training run")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  DeskScale desk(dir, epochs);
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "shape conformance", 1, shape_conformance},
      {2, "parameter count", 1, parameter_count},
      {3, "gradient suite", 120, gradient_suite},
      {4, "softmax/loss identities", 1, softmax_identities},
      {5, "channel statistics", 300, channel_statistics},
      {6, "modem loopback", 60, modem_loopback},
      {7, "overfit sanity", 600, overfit},
      {8, "desk-scale learning signal", 4 * 3600, [&] { return learning_signal(desk); }},
      {9, "sensitivity directionality", 3 * 4 * 3600, [&] { return sensitivity(desk); }},
      {10, "determinism", 900, [&] { return determinism(desk, dir); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = s <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("criterion %2d %-28s %s  %s; %.2f s (budget %.0f s)%s\n", c.id, c.name.c_str(), pass ? "PASS" : "FAIL",
                o.detail.c_str(), s, c.budget_s, in_budget ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
