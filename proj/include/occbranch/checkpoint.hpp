#pragma once

#include <filesystem>
#include <string>

#include "occbranch/regressor.hpp"
#include "occbranch/segbaseline.hpp"
#include "occbranch/training.hpp"

namespace occbranch::checkpoint {

/// File layout: 8-byte magic "OCCBCKPT", little-endian u32 version, u64 header
/// length, UTF-8 JSON header, then for every parameter tensor in header order
/// its values, Adam first moments and Adam second moments as raw float32.
inline constexpr char kMagic[8] = {'O', 'C', 'C', 'B', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Loaded {
  std::string model;  // "hob" or "seg"
  TrainConfig train;
  History history;
  int best_epoch = -1;
};

void save(const std::filesystem::path& path, regressor::ModelState<float>& state, const TrainConfig& train,
          const History& history, int best_epoch);
void save(const std::filesystem::path& path, seg::SegModelState<float>& state, const TrainConfig& train,
          const History& history, int best_epoch);

/// Throws IoError on unreadable or corrupt files and SpecMismatch when the
/// file holds the other model type.
regressor::ModelState<float> load_regressor(const std::filesystem::path& path, Loaded* info = nullptr);
seg::SegModelState<float> load_segmodel(const std::filesystem::path& path, Loaded* info = nullptr);

}  // namespace occbranch::checkpoint
