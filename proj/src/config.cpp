#include "occbranch/config.hpp"

#include <set>

#include "occbranch/dataset.hpp"
#include "occbranch/error.hpp"
#include "occbranch/rng.hpp"

namespace occbranch {

using nlohmann::json;

namespace {

/// Rejects keys outside `allowed` so that typos do not silently fall back to
/// defaults.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() {
  hob_train.epochs = 120;
  hob_train.learning_rate = 1e-3;
  hob_train.max_shift = 4;
  hob_train.final_lr_fraction = 0.05;
  hob_train.seed = 4;
  seg_train.epochs = 50;
  seg_train.learning_rate = 3e-4;
  seg_train.max_shift = 4;
  seg_train.seed = 5;
  hob.seed = 6;
  seg.seed = 7;
}

void RunConfig::validate() const {
  if (scenes.width < 32 || scenes.height < 32) throw ConfigError("scene canvas must be at least 32x32");
  if (scenes.count < 1) throw ConfigError("scene count must be positive");
  if (scenes.k < 2) throw ConfigError("need at least two cross-validation groups");
  if (cv_group < 1 || cv_group > scenes.k) {
    throw ConfigError("cv_group " + std::to_string(cv_group) + " outside 1.." + std::to_string(scenes.k));
  }
  double mix = 0.0;
  for (double m : scenes.regime_mix) {
    if (m < 0.0) throw ConfigError("regime mix entries must be non-negative");
    mix += m;
  }
  if (!(mix > 0.0)) throw ConfigError("regime mix must not be all zero");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (hob.width != scenes.width || hob.height != scenes.height || seg.width != scenes.width ||
      seg.height != scenes.height) {
    throw ConfigError("model input size must match the scene canvas");
  }
  if (hob.n_branches != synth::branch_count(scenes.kind)) {
    throw ConfigError("hob.n_branches does not match the tree kind");
  }
  if (scenes.kind == synth::TreeKind::horizontal_vine && scenes.width != scenes.height) {
    throw ConfigError("horizontal vines need a square canvas");
  }
  if (!(seg_threshold > 0.0 && seg_threshold < 1.0)) throw ConfigError("seg_threshold must lie in (0, 1)");
  if (poly_order < 1) throw ConfigError("poly_order must be at least 1");
  if (min_blob_area < 0) throw ConfigError("min_blob_area must be non-negative");
  if (!(bucket_width > 0.0)) throw ConfigError("bucket_width must be positive");
  try {
    hob.validate();
    seg.validate();
    hob_train.validate();
    seg_train.validate();
  } catch (const SpecMismatch& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::reseed(std::uint64_t seed) {
  scenes.scene_seed = mix_seed(seed, 1);
  scenes.split_seed = mix_seed(seed, 2);
  val_seed = mix_seed(seed, 3);
  hob_train.seed = mix_seed(seed, 4);
  seg_train.seed = mix_seed(seed, 5);
  hob.seed = mix_seed(seed, 6);
  seg.seed = mix_seed(seed, 7);
}

json to_json(const regressor::ModelSpec& s) {
  return {{"channels", s.channels}, {"height", s.height},     {"width", s.width},
          {"backbone", s.backbone}, {"hidden", s.hidden},     {"n_branches", s.n_branches},
          {"conv_bias", s.conv_bias}, {"seed", s.seed}};
}

json to_json(const seg::SegSpec& s) {
  return {{"channels", s.channels},     {"height", s.height},
          {"width", s.width},           {"widths", s.widths},
          {"bottleneck", s.bottleneck}, {"variant", seg::to_string(s.variant)},
          {"seed", s.seed}};
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},           {"epsilon", c.epsilon},             {"epochs", c.epochs},
          {"hflip", c.hflip},           {"max_shift", c.max_shift},         {"final_lr_fraction", c.final_lr_fraction},
          {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  json scenes = {{"kind", synth::to_string(c.scenes.kind)},
                 {"width", c.scenes.width},
                 {"height", c.scenes.height},
                 {"count", c.scenes.count},
                 {"k", c.scenes.k},
                 {"regime_mix", c.scenes.regime_mix},
                 {"scene_seed", c.scenes.scene_seed},
                 {"split_seed", c.scenes.split_seed}};
  return {{"dataset_dir", c.dataset_dir.string()},
          {"checkpoint_dir", c.checkpoint_dir.string()},
          {"report_dir", c.report_dir.string()},
          {"scenes", scenes},
          {"hob", to_json(c.hob)},
          {"seg", to_json(c.seg)},
          {"hob_train", to_json(c.hob_train)},
          {"seg_train", to_json(c.seg_train)},
          {"val_fraction", c.val_fraction},
          {"val_seed", c.val_seed},
          {"cv_group", c.cv_group},
          {"seg_threshold", c.seg_threshold},
          {"poly_order", c.poly_order},
          {"min_blob_area", c.min_blob_area},
          {"bucket_width", c.bucket_width}};
}

regressor::ModelSpec model_spec_from_json(const json& j) {
  const std::string w = "hob";
  check_keys(j, {"channels", "height", "width", "backbone", "hidden", "n_branches", "conv_bias", "seed"}, w);
  regressor::ModelSpec s;
  read(j, "channels", s.channels, w);
  read(j, "height", s.height, w);
  read(j, "width", s.width, w);
  read(j, "backbone", s.backbone, w);
  read(j, "hidden", s.hidden, w);
  read(j, "n_branches", s.n_branches, w);
  read(j, "conv_bias", s.conv_bias, w);
  read(j, "seed", s.seed, w);
  return s;
}

seg::SegSpec seg_spec_from_json(const json& j) {
  const std::string w = "seg";
  check_keys(j, {"channels", "height", "width", "widths", "bottleneck", "variant", "seed"}, w);
  seg::SegSpec s;
  read(j, "channels", s.channels, w);
  read(j, "height", s.height, w);
  read(j, "width", s.width, w);
  read(j, "widths", s.widths, w);
  read(j, "bottleneck", s.bottleneck, w);
  std::string variant = seg::to_string(s.variant);
  read(j, "variant", variant, w);
  s.variant = seg::parse_variant(variant);
  read(j, "seed", s.seed, w);
  return s;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  check_keys(j,
             {"batch_size", "learning_rate", "beta1", "beta2", "epsilon", "epochs", "hflip", "max_shift",
              "final_lr_fraction", "seed"},
             w);
  TrainConfig c;
  read(j, "batch_size", c.batch_size, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "beta1", c.beta1, w);
  read(j, "beta2", c.beta2, w);
  read(j, "epsilon", c.epsilon, w);
  read(j, "epochs", c.epochs, w);
  read(j, "hflip", c.hflip, w);
  read(j, "max_shift", c.max_shift, w);
  read(j, "final_lr_fraction", c.final_lr_fraction, w);
  read(j, "seed", c.seed, w);
  return c;
}

RunConfig run_config_from_json(const json& j) {
  const std::string w = "config";
  check_keys(j,
             {"dataset_dir", "checkpoint_dir", "report_dir", "scenes", "hob", "seg", "hob_train", "seg_train",
              "val_fraction", "val_seed", "cv_group", "seg_threshold", "poly_order", "min_blob_area",
              "bucket_width"},
             w);
  RunConfig c;
  std::string dataset_dir = c.dataset_dir.string();
  read(j, "dataset_dir", dataset_dir, w);
  c.dataset_dir = dataset_dir;
  std::string checkpoint_dir = c.checkpoint_dir.string();
  read(j, "checkpoint_dir", checkpoint_dir, w);
  c.checkpoint_dir = checkpoint_dir;
  std::string report_dir = c.report_dir.string();
  read(j, "report_dir", report_dir, w);
  c.report_dir = report_dir;
  if (j.contains("scenes")) {
    const json& s = j.at("scenes");
    check_keys(s, {"kind", "width", "height", "count", "k", "regime_mix", "scene_seed", "split_seed"}, "scenes");
    std::string kind = synth::to_string(c.scenes.kind);
    read(s, "kind", kind, "scenes");
    c.scenes.kind = synth::parse_tree_kind(kind);
    read(s, "width", c.scenes.width, "scenes");
    read(s, "height", c.scenes.height, "scenes");
    read(s, "count", c.scenes.count, "scenes");
    read(s, "k", c.scenes.k, "scenes");
    read(s, "regime_mix", c.scenes.regime_mix, "scenes");
    read(s, "scene_seed", c.scenes.scene_seed, "scenes");
    read(s, "split_seed", c.scenes.split_seed, "scenes");
  }
  // Sections override the run defaults key by key.
  auto merged = [](const json& base, const json& src) {
    json out = base;
    if (!src.is_object()) return src;
    for (const auto& [k, v] : src.items()) out[k] = v;
    return out;
  };
  if (j.contains("hob")) c.hob = model_spec_from_json(merged(to_json(c.hob), j.at("hob")));
  if (j.contains("seg")) c.seg = seg_spec_from_json(merged(to_json(c.seg), j.at("seg")));
  if (j.contains("hob_train")) c.hob_train = train_config_from_json(merged(to_json(c.hob_train), j.at("hob_train")));
  if (j.contains("seg_train")) c.seg_train = train_config_from_json(merged(to_json(c.seg_train), j.at("seg_train")));
  read(j, "val_fraction", c.val_fraction, w);
  read(j, "val_seed", c.val_seed, w);
  read(j, "cv_group", c.cv_group, w);
  read(j, "seg_threshold", c.seg_threshold, w);
  read(j, "poly_order", c.poly_order, w);
  read(j, "min_blob_area", c.min_blob_area, w);
  read(j, "bucket_width", c.bucket_width, w);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace occbranch
