#include "chainnet/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "chainnet/errors.hpp"
#include "chainnet/nn/layers.hpp"
#include "chainnet/nn/optimizer.hpp"
#include "chainnet/seed.hpp"

namespace chainnet::trainer {
namespace {

using nn::Shape;
using nn::Tensor;

Tensor<float> slice_rows(const Tensor<float>& t, std::size_t first, std::size_t count) {
  const Shape s = t.shape();
  const std::size_t row = s.h * s.w * s.c;
  Tensor<float> out(Shape{count, s.h, s.w, s.c}, nn::uninitialized);
  std::copy(t.ptr() + first * row, t.ptr() + (first + count) * row, out.ptr());
  return out;
}

std::size_t argmax_row(const float* p, std::size_t n) {
  return static_cast<std::size_t>(std::max_element(p, p + n) - p);
}

std::string snr_label(std::int8_t snr) {
  return snr == dataset::kCleanSnr ? std::string("clean") : std::to_string(static_cast<int>(snr));
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(8);
  return out;
}

void check_compatible(const model::ChainNet<float>& net, const dataset::Dataset& data) {
  const std::size_t len = net.config().signal_length;
  const std::size_t stored = data.manifest().frame_len;
  if (len > stored)
    throw ConfigError("network signal_length " + std::to_string(len) + " exceeds dataset frame length " +
                      std::to_string(stored));
  if (net.config().class_count != data.manifest().schemes.size())
    throw ConfigError("network class_count " + std::to_string(net.config().class_count) + " differs from the " +
                      std::to_string(data.manifest().schemes.size()) + " schemes in the dataset");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (step_decay && !(decay_factor > 0.0)) throw ConfigError("train.decay_factor must be positive");
}

double EvalReport::pooled_accuracy() const {
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double EvalReport::mean_snr_accuracy() const {
  if (buckets.empty()) return 0.0;
  double acc = 0.0;
  for (const SnrBucket& b : buckets) acc += b.accuracy();
  return acc / static_cast<double>(buckets.size());
}

const SnrBucket* EvalReport::bucket(std::int8_t snr_db) const {
  for (const SnrBucket& b : buckets)
    if (b.snr_db == snr_db) return &b;
  return nullptr;
}

std::optional<double> EvalReport::accuracy_at(std::int8_t snr_db) const {
  const SnrBucket* b = bucket(snr_db);
  if (!b) return std::nullopt;
  return b->accuracy();
}

EvalReport evaluate(const model::ChainNet<float>& net, const dataset::Dataset& data,
                    std::span<const std::size_t> indices, std::size_t batch_size) {
  if (indices.empty()) throw ConfigError("evaluate: index set is empty");
  if (batch_size == 0) throw ConfigError("evaluate: batch_size must be >= 1");
  check_compatible(net, data);
  const std::size_t classes = net.config().class_count;
  const std::size_t len = net.config().signal_length;

  std::map<std::int8_t, SnrBucket> buckets;
  EvalReport r;
  r.classes = classes;
  double loss_sum = 0.0;
  for (std::size_t first = 0; first < indices.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, indices.size() - first);
    const dataset::Batch b = dataset::make_batch(data, indices.subspan(first, n), len);
    const Tensor<float> probs = net.classify(b.frames);
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = probs.ptr() + i * classes;
      const std::size_t truth = b.classes[i];
      const std::size_t pred = argmax_row(p, classes);
      SnrBucket& bk = buckets[b.snrs[i]];
      if (bk.confusion.empty()) {
        bk.snr_db = b.snrs[i];
        bk.confusion.assign(classes * classes, 0);
      }
      const double l = -std::log(std::max(static_cast<double>(p[truth]), nn::kLogFloor));
      bk.total += 1;
      bk.correct += pred == truth;
      bk.loss += l;
      bk.confusion[truth * classes + pred] += 1;
      loss_sum += l;
    }
  }
  for (auto& [snr, bk] : buckets) {
    bk.loss /= static_cast<double>(bk.total);
    r.total += bk.total;
    r.correct += bk.correct;
    r.buckets.push_back(std::move(bk));
  }
  r.loss = loss_sum / static_cast<double>(r.total);
  return r;
}

TrainResult train(model::ChainNet<float>& net, const dataset::Dataset& data, const dataset::Splits& splits,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (splits.train.empty()) throw ConfigError("train: the training split is empty");
  check_compatible(net, data);
  const std::size_t len = net.config().signal_length;
  const std::size_t classes = net.config().class_count;
  const std::size_t micro = cfg.micro_batch == 0 ? cfg.batch_size : std::min(cfg.micro_batch, cfg.batch_size);

  dataset::MinibatchStream stream(data, splits.train, cfg.batch_size, derive_seed(cfg.seed, {0}), len);
  nn::Sgd<float> opt(cfg.learning_rate, cfg.momentum);
  TrainResult result;
  std::vector<Tensor<float>> best;

  auto diverged = [&](const std::string& what) {
    std::string msg = "training diverged: " + what;
    if (result.last_checkpoint) msg += "; last good checkpoint: " + result.last_checkpoint->string();
    else msg += "; no checkpoint was written";
    return DivergenceError(msg);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const bool decayed = cfg.step_decay && epoch > cfg.decay_epoch;
    opt.set_learning_rate(decayed ? cfg.learning_rate * cfg.decay_factor : cfg.learning_rate);
    stream.begin_epoch(epoch - 1);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = opt.learning_rate();
    double loss_total = 0.0;
    std::size_t seen = 0, correct = 0, step = 0;
    dataset::Batch batch;
    while (stream.next(batch)) {
      net.zero_grad();
      double batch_loss = 0.0;
      const double norm = static_cast<double>(batch.size());
      for (std::size_t first = 0, chunk = 0; first < batch.size(); first += micro, ++chunk) {
        const std::size_t n = std::min(micro, batch.size() - first);
        nn::Graph<float> g;
        const nn::Var x = g.input(slice_rows(batch.frames, first, n));
        const nn::Var t = g.input(slice_rows(batch.targets, first, n));
        const nn::Var logits = net.forward(g, x, nn::Mode::Train, derive_seed(cfg.seed, {1, epoch, step, chunk}));
        const nn::SoftmaxLoss sl = nn::softmax_cross_entropy(g, logits, t, norm);
        const double l = g.value(sl.loss)[0];
        if (!std::isfinite(l))
          throw diverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
        batch_loss += l;
        const Tensor<float>& probs = g.value(sl.probs);
        for (std::size_t i = 0; i < n; ++i)
          correct += argmax_row(probs.ptr() + i * classes, classes) == batch.classes[first + i];
        g.backward(sl.loss);
      }
      try {
        opt.step(net.parameters());
      } catch (const DivergenceError& e) {
        throw diverged(e.what());
      }
      result.batch_losses.push_back(batch_loss);
      loss_total += batch_loss * norm;
      seen += batch.size();
      ++step;
    }
    rec.train_loss = loss_total / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);

    if (!splits.val.empty()) {
      const EvalReport v = evaluate(net, data, splits.val);
      rec.val_loss = v.loss;
      rec.val_accuracy = v.pooled_accuracy();
      if (!result.best_val_accuracy || *rec.val_accuracy > *result.best_val_accuracy) {
        result.best_val_accuracy = rec.val_accuracy;
        result.best_epoch = epoch;
        best.clear();
        for (const auto& p : net.parameters()) best.push_back(p.value);
      }
    } else {
      result.best_epoch = epoch;
    }

    if (cfg.checkpoint_every && !hooks.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0) {
      const std::filesystem::path path = hooks.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
      model::save_checkpoint(path.string(), net, {{"epoch", std::to_string(epoch)}});
      result.last_checkpoint = path;
    }
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }

  if (!best.empty()) {
    auto& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best[i];
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       const EvalReport* test, std::size_t test_epoch) {
  std::ofstream out = open_csv(path);
  out << "epoch,split,snr_db,accuracy,loss\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ",train,all," << r.train_accuracy << ',' << r.train_loss << '\n';
    if (r.val_accuracy) out << r.epoch << ",val,all," << *r.val_accuracy << ',' << *r.val_loss << '\n';
  }
  if (test) {
    for (const SnrBucket& b : test->buckets)
      out << test_epoch << ",test," << snr_label(b.snr_db) << ',' << b.accuracy() << ',' << b.loss << '\n';
    out << test_epoch << ",test,all," << test->pooled_accuracy() << ',' << test->loss << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_confusion_csvs(const std::filesystem::path& dir, const EvalReport& report,
                          const std::vector<std::string>& class_names) {
  if (class_names.size() != report.classes)
    throw ConfigError("confusion: " + std::to_string(class_names.size()) + " class names for " +
                      std::to_string(report.classes) + " classes");
  for (const SnrBucket& b : report.buckets) {
    std::ofstream out = open_csv(dir / ("confusion_snr_" + snr_label(b.snr_db) + ".csv"));
    out << "true\\predicted";
    for (const std::string& n : class_names) out << ',' << n;
    out << '\n';
    for (std::size_t t = 0; t < report.classes; ++t) {
      out << class_names[t];
      for (std::size_t p = 0; p < report.classes; ++p) out << ',' << b.confusion[t * report.classes + p];
      out << '\n';
    }
    if (!out) throw IoError("failed writing confusion CSV in " + dir.string());
  }
}

std::optional<Suite> parse_suite(std::string_view name) {
  if (name == "robustness") return Suite::Robustness;
  if (name == "length-sweep") return Suite::LengthSweep;
  if (name == "kernel-sweep") return Suite::KernelSweep;
  return std::nullopt;
}

std::string_view suite_name(Suite s) {
  switch (s) {
    case Suite::Robustness: return "robustness";
    case Suite::LengthSweep: return "length-sweep";
    case Suite::KernelSweep: return "kernel-sweep";
  }
  return "unknown";
}

std::filesystem::path dataset_path(const std::filesystem::path& data_dir, channel::Scenario s) {
  return data_dir / (std::string(channel::scenario_name(s)) + ".cnds");
}

SuiteResult run_experiment_suite(Suite suite, const SuiteConfig& cfg) {
  cfg.train.validate();
  cfg.network.validate();
  cfg.split.validate();

  auto load = [&](channel::Scenario s) {
    const std::filesystem::path p = dataset_path(cfg.data_dir, s);
    if (!std::filesystem::exists(p))
      throw IoError("dataset " + p.string() + " not found; generate it with: " + cfg.gen_hint +
                    " --set dataset.scenario=" + std::string(channel::scenario_name(s)) + " --out " +
                    cfg.data_dir.string());
    return dataset::load_dataset(p);
  };
  auto say = [&](const std::string& m) {
    if (cfg.log) cfg.log(m);
  };

  struct Run {
    std::string label;
    std::string key;  // first CSV column value
    channel::Scenario scenario;
    model::NetworkConfig net;
  };
  std::vector<Run> runs;
  std::string key_header;
  switch (suite) {
    case Suite::Robustness:
      key_header = "scenario";
      for (channel::Scenario s : {channel::Scenario::None, channel::Scenario::Flat, channel::Scenario::Epa})
        runs.push_back({std::string(channel::scenario_name(s)), std::string(channel::scenario_name(s)), s, cfg.network});
      break;
    case Suite::LengthSweep:
      key_header = "signal_length";
      for (std::size_t l : cfg.lengths) {
        model::NetworkConfig n = cfg.network;
        n.signal_length = l;
        runs.push_back({"l=" + std::to_string(l), std::to_string(l), channel::Scenario::Epa, n});
      }
      break;
    case Suite::KernelSweep:
      key_header = "kernel_count";
      for (std::size_t k : cfg.kernels) {
        model::NetworkConfig n = cfg.network;
        n.kernel_count = k;
        runs.push_back({"K=" + std::to_string(k), std::to_string(k), channel::Scenario::Epa, n});
      }
      break;
  }

  // Fail on a missing dataset before any training starts.
  for (const Run& r : runs) {
    const std::filesystem::path p = dataset_path(cfg.data_dir, r.scenario);
    if (!std::filesystem::exists(p)) load(r.scenario);
  }

  std::filesystem::create_directories(cfg.out_dir);
  SuiteResult result;
  result.suite = suite;
  std::map<channel::Scenario, dataset::Dataset> cache;
  for (const Run& r : runs) {
    auto it = cache.find(r.scenario);
    if (it == cache.end()) it = cache.emplace(r.scenario, load(r.scenario)).first;
    const dataset::Dataset& data = it->second;
    model::NetworkConfig ncfg = r.net;
    ncfg.class_count = data.manifest().schemes.size();
    model::ChainNet<float> net(ncfg);
    const dataset::Splits splits = dataset::split_dataset(data.manifest(), cfg.split);
    say(std::string(suite_name(suite)) + " " + r.label + ": training on " + std::to_string(splits.train.size()) +
        " frames");
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& e) {
      std::ostringstream o;
      o << "  " << r.label << " epoch " << e.epoch << " loss " << e.train_loss << " train acc " << e.train_accuracy;
      if (e.val_accuracy) o << " val acc " << *e.val_accuracy;
      say(o.str());
    };
    const TrainResult tr = train(net, data, splits, cfg.train, hooks);
    EvalReport rep = evaluate(net, data, splits.test);
    const std::string stem = std::string(suite_name(suite)) + "_" + r.key;
    write_history_csv(cfg.out_dir / (stem + "_history.csv"), tr.history, &rep, tr.best_epoch);
    result.points.push_back({r.label, std::move(rep)});
  }

  result.csv = cfg.out_dir / (std::string(suite_name(suite)) + ".csv");
  std::ofstream out = open_csv(result.csv);
  out << key_header;
  const EvalReport& first = result.points.front().report;
  for (const SnrBucket& b : first.buckets) out << ",snr_" << snr_label(b.snr_db);
  out << ",pooled,mean_over_snr\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const EvalReport& rep = result.points[i].report;
    out << runs[i].key;
    for (const SnrBucket& b : first.buckets) {
      const auto a = rep.accuracy_at(b.snr_db);
      out << ',';
      if (a) out << *a;
    }
    out << ',' << rep.pooled_accuracy() << ',' << rep.mean_snr_accuracy() << '\n';
  }
  if (!out) throw IoError("failed writing " + result.csv.string());
  return result;
}

}  // namespace chainnet::trainer
