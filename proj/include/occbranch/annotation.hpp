#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "occbranch/position_target.hpp"
#include "occbranch/raster.hpp"
#include "occbranch/synthdata.hpp"

namespace occbranch::annotation {

/// Scans every row (or column, for `scan_columns`) of the canvas and records
/// the distinct positions where the polylines cross it, sorted left to right.
/// Where fewer positions than channels exist (branches have joined) the shared
/// position is written to every joined channel.
PositionTarget polyline_to_target(const std::vector<synth::Polyline>& polylines, synth::Canvas canvas,
                                  int n_branches, bool scan_columns = false);

/// Mirrors columns. Coordinates become (width-1) - x and channel order is
/// reversed so channel 0 stays the leftmost branch.
RgbImage hflip(const RgbImage& image);
PositionTarget hflip(const PositionTarget& target);
std::pair<RgbImage, PositionTarget> hflip(const RgbImage& image, const PositionTarget& target);

/// Integer translation by (dx, dy). Vacated pixels repeat the nearest edge
/// pixel; coordinates move by dx and rows by dy, and entries whose source row
/// or new coordinate falls outside the canvas become invalid.
RgbImage translate(const RgbImage& image, int dx, int dy);
PositionTarget translate(const PositionTarget& target, int dx, int dy);

enum class CropAnchor { top, center, bottom };

struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  int side = 0;
};

/// Square window of side round(ratio * H), centred horizontally, placed at
/// the anchor vertically.
CropWindow crop_window(int width, int height, CropAnchor anchor, double ratio);

/// Crops the window and resamples it to `out_size` x `out_size` (bilinear for
/// pixels, exact affine map for coordinates). Rows whose source position is
/// not covered by the input target, or whose coordinate leaves the window,
/// are invalidated. `out_size` <= 0 keeps the window side.
std::pair<RgbImage, PositionTarget> crop_augment(const RgbImage& image, const PositionTarget& target,
                                                 CropAnchor anchor, double ratio = 0.8, int out_size = 0);

/// Bilinear resample of an arbitrary rectangle of `src` (pixel-centre aligned).
RgbImage resample(const RgbImage& src, double x0, double y0, double src_w, double src_h, int out_w,
                  int out_h);

/// sample id -> group in 1..k
using SplitAssignment = std::map<std::string, int>;

/// Seeded shuffle followed by round-robin assignment into k groups.
SplitAssignment split_cv_groups(const std::vector<std::string>& sample_ids, int k, std::uint64_t seed);

}  // namespace occbranch::annotation
