#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chainnet/channel/channel.hpp"
#include "chainnet/modem/modem.hpp"
#include "chainnet/nn/tensor.hpp"

namespace chainnet::dataset {

// SNR tag of frames generated without noise.
inline constexpr std::int8_t kCleanSnr = 127;
inline constexpr std::uint16_t kFormatVersion = 1;

struct DatasetManifest {
  std::uint16_t version = kFormatVersion;
  std::uint32_t frame_len = 1024;
  std::vector<modem::Scheme> schemes;
  std::vector<std::int8_t> snrs_db;
  std::uint32_t frames_per_cell = 100;
  channel::Scenario scenario = channel::Scenario::Epa;
  double max_doppler_hz = 10.0;
  double sample_rate_hz = 100e6;
  std::uint64_t master_seed = 1;

  // All 14 schemes, SNR -20..20 dB in 2 dB steps.
  static DatasetManifest full_grid();

  void validate() const;
  std::uint64_t record_count() const;
  std::size_t cell_count() const { return schemes.size() * snrs_db.size(); }
  // Class index of a stored label: its position in `schemes`.
  std::size_t class_of(std::uint8_t label) const;
  std::size_t header_bytes() const;
  std::size_t record_bytes() const { return 2 + 8 * static_cast<std::size_t>(frame_len); }
  std::uint64_t file_bytes() const { return header_bytes() + record_count() * record_bytes() + 8; }

  bool operator==(const DatasetManifest&) const = default;
};

struct FrameRecord {
  std::uint8_t label = 0;
  std::int8_t snr_db = 0;
  std::vector<float> iq;  // I0 Q0 I1 Q1 ...
};

// Seed for frame `index` of cell (scheme, snr).
std::uint64_t frame_seed(std::uint64_t master, modem::Scheme s, std::int8_t snr_db, std::uint64_t index);

// Clean frame, scenario channel, AWGN, cut to frame_len.
FrameRecord synthesize_record(const DatasetManifest& m, modem::Scheme s, std::int8_t snr_db, std::uint64_t index,
                              const modem::ModemConfig& modem_cfg = {});

using Progress = std::function<void(std::uint64_t done, std::uint64_t total)>;

// Writes header, records in (scheme, snr, index) order and the count footer.
void write_dataset(const DatasetManifest& m, std::ostream& out, const modem::ModemConfig& modem_cfg = {},
                   const Progress& progress = {});
void generate_dataset(const DatasetManifest& m, const std::filesystem::path& path,
                      const modem::ModemConfig& modem_cfg = {}, const Progress& progress = {});

void write_manifest(const DatasetManifest& m, std::ostream& out);
DatasetManifest read_manifest(std::istream& in);

// Fully loaded dataset; records are addressed by their position in the file.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest m, std::vector<FrameRecord> records);

  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return records_.size(); }
  const FrameRecord& record(std::size_t i) const { return records_.at(i); }
  const std::vector<FrameRecord>& records() const { return records_; }

 private:
  DatasetManifest manifest_;
  std::vector<FrameRecord> records_;
};

// Throws IoError naming the path when the file is missing, truncated or
// its footer disagrees with the manifest.
Dataset load_dataset(const std::filesystem::path& path);
DatasetManifest read_dataset_manifest(const std::filesystem::path& path);

// Human-readable "key = value" sidecar.
std::string manifest_text(const DatasetManifest& m);
void write_sidecar(const DatasetManifest& m, std::uint64_t checksum, const std::filesystem::path& path);

// FNV-1a over the file bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

// Writes the first `length` samples as rows I and Q of a (1, 2, length, 1)
// slot, divided by their root-mean-square value.
void frame_into(const FrameRecord& r, std::size_t length, float* dst);
nn::Tensor<float> frame_to_tensor(const FrameRecord& r, std::size_t length);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Stratified per (scheme, snr) cell. Per-cell counts are round(n * train)
// and round(n * val); test takes the remainder.
Splits split_dataset(const DatasetManifest& m, const SplitSpec& spec);

struct Batch {
  nn::Tensor<float> frames;   // (n, 2, length, 1)
  nn::Tensor<float> targets;  // (n, 1, 1, classes), one-hot
  std::vector<std::size_t> classes;
  std::vector<std::int8_t> snrs;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

// Epoch-wise shuffled minibatches; the last batch may be short.
class MinibatchStream {
 public:
  MinibatchStream(const Dataset& data, std::vector<std::size_t> indices, std::size_t batch_size,
                  std::uint64_t shuffle_seed, std::size_t length, bool shuffle = true);

  void begin_epoch(std::uint64_t epoch);
  bool next(Batch& out);
  std::size_t batches_per_epoch() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset* data_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t length_;
  bool shuffle_;
  std::size_t cursor_ = 0;
};

// Assembles a batch from explicit record indices.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, std::size_t length);

}  // namespace chainnet::dataset
