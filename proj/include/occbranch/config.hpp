#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "occbranch/regressor.hpp"
#include "occbranch/segbaseline.hpp"
#include "occbranch/synthdata.hpp"
#include "occbranch/training.hpp"

namespace occbranch {

struct SceneConfig {
  synth::TreeKind kind = synth::TreeKind::y_shaped;
  int width = 64;
  int height = 64;
  int count = 700;
  int k = 7;  // cross-validation groups
  std::array<double, 3> regime_mix = {0.5, 0.25, 0.25};  // none, medium, heavy
  std::uint64_t scene_seed = 1;
  std::uint64_t split_seed = 2;
};

/// Everything a command needs. Every random stream has its own named seed.
struct RunConfig {
  std::filesystem::path dataset_dir = "run/dataset";
  std::filesystem::path checkpoint_dir = "run/checkpoints";
  std::filesystem::path report_dir = "run/reports";

  SceneConfig scenes;
  regressor::ModelSpec hob;
  seg::SegSpec seg;
  TrainConfig hob_train;
  TrainConfig seg_train;
  /// Share of the training groups held back for model selection.
  double val_fraction = 0.1;
  std::uint64_t val_seed = 3;
  int cv_group = 1;

  double seg_threshold = 0.5;
  int poly_order = 5;
  int min_blob_area = 65;
  double bucket_width = 0.05;

  RunConfig();

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Derives every seed from one value.
  void reseed(std::uint64_t seed);
};

nlohmann::json to_json(const regressor::ModelSpec& spec);
nlohmann::json to_json(const seg::SegSpec& spec);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// The parsers start from defaults and override the keys present. Unknown
/// keys and malformed values throw ConfigError.
regressor::ModelSpec model_spec_from_json(const nlohmann::json& j);
seg::SegSpec seg_spec_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Reads a JSON config file; relative paths inside it stay relative to the
/// working directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace occbranch
