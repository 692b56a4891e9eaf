#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "occbranch/annotation.hpp"
#include "occbranch/position_target.hpp"
#include "occbranch/raster.hpp"
#include "occbranch/synthdata.hpp"

namespace occbranch {

/// One labelled scene as stored on disk.
struct Sample {
  std::string id;
  synth::TreeKind kind = synth::TreeKind::y_shaped;
  synth::OcclusionRegime regime = synth::OcclusionRegime::none;
  std::uint64_t seed = 0;
  double occlusion_fraction = 0.0;
  int group = 0;  // cross-validation group, 1-based; 0 = unassigned
  synth::SceneTraits traits;
  RgbImage image;
  MaskImage whole_mask;
  MaskImage visible_mask;
  PositionTarget target;
};

/// Builds a sample from a generated scene.
Sample make_sample(std::string id, const synth::TreeScene& scene, const synth::SceneBundle& bundle);

namespace io {

// PNG ------------------------------------------------------------------------

/// Writes 8-bit RGB (3 channels) or RGBA-coded RGB-D (4 channels).
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

/// Masks are written as 1-bit grayscale PNGs.
void write_mask_png(const std::filesystem::path& path, const MaskImage& mask);
MaskImage read_mask_png(const std::filesystem::path& path);

// Position targets -------------------------------------------------------------

/// CSV with header `row_index,branch_0_x[,branch_1_x...],valid_flag`; one line
/// per scan line. valid_flag is 1 when every channel is valid on that row.
/// Invalid channel entries are written as empty fields.
void write_target_csv(const std::filesystem::path& path, const PositionTarget& target);
PositionTarget read_target_csv(const std::filesystem::path& path, int width);

// Dataset layout -----------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string regime;
  int group = 0;
};

struct Manifest {
  std::string kind;
  int width = 0;
  int height = 0;
  int n_branches = 0;
  int k = 0;
  std::uint64_t scene_seed = 0;
  std::uint64_t split_seed = 0;
  std::vector<ManifestEntry> samples;

  std::vector<std::string> ids_in_groups(const std::vector<int>& groups) const;
  std::vector<std::string> ids_excluding_group(int group) const;
};

/// `<root>/<id>/{image.png, whole.png, visible.png, target.csv, meta.json}`.
void write_sample(const std::filesystem::path& root, const Sample& sample);
Sample read_sample(const std::filesystem::path& root, const std::string& id);

void write_manifest(const std::filesystem::path& root, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& root);

std::vector<Sample> read_samples(const std::filesystem::path& root, const std::vector<std::string>& ids);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace io
}  // namespace occbranch
