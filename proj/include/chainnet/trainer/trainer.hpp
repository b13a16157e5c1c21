#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chainnet/dataset/dataset.hpp"
#include "chainnet/model/chainnet.hpp"

namespace chainnet::trainer {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  // Examples per forward/backward pass; gradients of a batch are summed
  // over its micro-batches before the update. 0 means the whole batch.
  std::size_t micro_batch = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  // Write a checkpoint every N epochs (0 disables).
  std::size_t checkpoint_every = 0;
  // Optional step decay: lr *= decay_factor once `decay_epoch` epochs have
  // completed.
  bool step_decay = false;
  std::size_t decay_epoch = 75;
  double decay_factor = 0.1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double train_loss = 0.0;      // mean over the epoch's examples, dropout active
  double train_accuracy = 0.0;  // running argmax accuracy during training
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct SnrBucket {
  std::int8_t snr_db = 0;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  double loss = 0.0;
  // confusion[true * classes + predicted]
  std::vector<std::uint64_t> confusion;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
  std::size_t classes = 0;
  std::vector<SnrBucket> buckets;  // ascending SNR
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  double loss = 0.0;  // mean cross-entropy per example

  // Over all frames.
  double pooled_accuracy() const;
  // Unweighted mean of the per-SNR accuracies.
  double mean_snr_accuracy() const;
  std::optional<double> accuracy_at(std::int8_t snr_db) const;
  const SnrBucket* bucket(std::int8_t snr_db) const;
};

// Inference-mode argmax evaluation; never mutates the network.
EvalReport evaluate(const model::ChainNet<float>& net, const dataset::Dataset& data,
                    std::span<const std::size_t> indices, std::size_t batch_size = 256);

struct TrainHooks {
  // Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
  // Directory for periodic checkpoints; empty disables them.
  std::filesystem::path checkpoint_dir;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> batch_losses;  // every optimizer step, in order
  std::size_t best_epoch = 0;
  std::optional<double> best_val_accuracy;
  std::optional<std::filesystem::path> last_checkpoint;
};

// SGD over splits.train. When splits.val is non-empty the parameters with
// the best validation accuracy are restored into `net` at the end;
// otherwise the final parameters are kept.
TrainResult train(model::ChainNet<float>& net, const dataset::Dataset& data, const dataset::Splits& splits,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// CSV with columns epoch,split,snr_db,accuracy,loss. snr_db is "all" for
// pooled rows.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       const EvalReport* test = nullptr, std::size_t test_epoch = 0);
// One file per SNR: confusion_snr_<snr>.csv with a header of class names.
void write_confusion_csvs(const std::filesystem::path& dir, const EvalReport& report,
                          const std::vector<std::string>& class_names);

enum class Suite { Robustness, LengthSweep, KernelSweep };

std::optional<Suite> parse_suite(std::string_view name);
std::string_view suite_name(Suite s);

struct SuiteConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  model::NetworkConfig network;
  TrainConfig train;
  dataset::SplitSpec split;
  std::vector<std::size_t> lengths{128, 256, 512, 1024};
  std::vector<std::size_t> kernels{16, 32, 64, 128};
  // Shown in the missing-dataset error.
  std::string gen_hint = "chainnet gen";
  std::function<void(const std::string&)> log;
};

struct SuitePoint {
  std::string label;  // "none", "l=128", "K=64", ...
  EvalReport report;
};

struct SuiteResult {
  Suite suite = Suite::Robustness;
  std::vector<SuitePoint> points;
  std::filesystem::path csv;
};

// The dataset for a scenario lives at data_dir / "<scenario>.cnds".
std::filesystem::path dataset_path(const std::filesystem::path& data_dir, channel::Scenario s);

SuiteResult run_experiment_suite(Suite suite, const SuiteConfig& cfg);

}  // namespace chainnet::trainer
