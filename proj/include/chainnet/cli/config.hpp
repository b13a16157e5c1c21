#pragma once

// Run configuration: flat "key = value" lines grouped under [section]
// headers. '#' starts a comment. Every field is addressed as section.key,
// both in files and in --set overrides.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "chainnet/dataset/dataset.hpp"
#include "chainnet/model/chainnet.hpp"
#include "chainnet/modem/modem.hpp"
#include "chainnet/trainer/trainer.hpp"

namespace chainnet::cli {

struct PathConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path dataset;     // empty: data_dir / "<scenario>.cnds"
  std::filesystem::path checkpoint;  // empty: <out> / "best.ckpt"
};

struct AppConfig {
  model::NetworkConfig network;
  dataset::DatasetManifest dataset;
  modem::ModemConfig modem;
  dataset::SplitSpec split;
  trainer::TrainConfig train;
  PathConfig paths;
  std::vector<std::size_t> suite_lengths{128, 256, 512, 1024};
  std::vector<std::size_t> suite_kernels{16, 32, 64, 128};
  std::string eval_split = "test";  // train | val | test | all
  std::string simd = "auto";        // auto | scalar | avx2
};

// All 14 schemes, SNR -20..20 dB step 2, 100 frames per cell, EPA.
AppConfig default_config();

// Parses config text on top of `base`. `origin` names the source in errors.
void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin);
AppConfig load_config(const std::filesystem::path& path);

// "section.key=value"
void apply_override(AppConfig& cfg, std::string_view assignment);
void set_field(AppConfig& cfg, const std::string& field, const std::string& value);

// Every field with its current value, loadable by load_config.
std::string dump_config(const AppConfig& cfg);

// Sets the dataset, network, split and training seeds.
void set_all_seeds(AppConfig& cfg, std::uint64_t seed);

// Validates every section, throwing ConfigError naming the field.
void validate(const AppConfig& cfg);

// Modem settings as "modem.key = value" lines (recorded next to datasets).
std::string modem_text(const modem::ModemConfig& m);

}  // namespace chainnet::cli
