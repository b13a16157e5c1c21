#pragma once

#include <filesystem>
#include <string>

#include "chainnet/dataset/dataset.hpp"

namespace oracle {

// In-memory dataset in file order, without touching disk.
inline chainnet::dataset::Dataset synthesize_dataset(const chainnet::dataset::DatasetManifest& m) {
  std::vector<chainnet::dataset::FrameRecord> records;
  records.reserve(m.record_count());
  for (auto s : m.schemes)
    for (auto snr : m.snrs_db)
      for (std::uint64_t i = 0; i < m.frames_per_cell; ++i)
        records.push_back(chainnet::dataset::synthesize_record(m, s, snr, i));
  return {m, std::move(records)};
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace oracle
