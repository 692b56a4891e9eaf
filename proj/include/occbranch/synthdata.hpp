#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "occbranch/position_target.hpp"
#include "occbranch/raster.hpp"

namespace occbranch::synth {

enum class TreeKind { y_shaped, trunk_only, horizontal_vine };
enum class OcclusionRegime { none, medium, heavy };
enum class OccluderShape { disk, ellipse, leaf_blob };

std::string to_string(TreeKind kind);
std::string to_string(OcclusionRegime regime);
std::string to_string(OccluderShape shape);
TreeKind parse_tree_kind(const std::string& s);
OcclusionRegime parse_regime(const std::string& s);

/// Number of branch channels a kind produces.
int branch_count(TreeKind kind);

struct Point {
  double x = 0.0;  // column
  double y = 0.0;  // row
  bool operator==(const Point&) const = default;
};

using Polyline = std::vector<Point>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Occluder {
  OccluderShape shape = OccluderShape::disk;
  Point center;
  double size = 1.0;    // radius, or semi-major axis for ellipse/leaf_blob
  double aspect = 1.0;  // minor/major ratio, 1 for disks
  double angle = 0.0;   // radians
  Rgb color;

  /// Whether the pixel centred at (x, y) is covered.
  bool covers(double x, double y) const;
  bool operator==(const Occluder&) const = default;
};

/// Thin background structure (a neighbouring tree's branch or a trellis
/// wire). Drawn behind the tree; never part of the branch masks or targets.
struct Distractor {
  Polyline line;
  double radius = 1.0;
  Rgb color;
  bool operator==(const Distractor&) const = default;
};

struct Canvas {
  int width = 0;
  int height = 0;
  bool operator==(const Canvas&) const = default;
};

/// Procedural tree geometry before rasterisation. Branch polylines are
/// monotone along the scan axis (rows for vertical kinds, columns for vines)
/// and span it entirely; for Y-shaped trees the two branches share their
/// vertices from `merge_row` down.
struct TreeScene {
  TreeKind kind = TreeKind::y_shaped;
  OcclusionRegime regime = OcclusionRegime::none;
  std::vector<Polyline> branches;
  std::vector<std::vector<double>> thickness;  // stroke radius per vertex
  int merge_row = -1;
  std::vector<Occluder> occluders;
  std::vector<Distractor> background;
  Canvas canvas;
  std::uint64_t seed = 0;
  Rgb bark;

  bool scans_columns() const { return kind == TreeKind::horizontal_vine; }
  bool operator==(const TreeScene&) const = default;
};

struct SceneBundle {
  RgbImage image;  // 3 channels, or 4 when the depth band channel is on
  MaskImage whole_mask;
  MaskImage visible_mask;
  PositionTarget target;
  double occlusion_fraction = 0.0;
};

struct RegimeStats {
  double mean;
  double stddev;
};

/// Target occlusion statistics for each regime (none / medium / heavy).
RegimeStats regime_stats(OcclusionRegime regime);

TreeScene generate_scene(TreeKind kind, Canvas canvas, OcclusionRegime regime,
                         std::uint64_t seed);

struct RasterOptions {
  bool depth_channel = false;
  bool pixel_noise = true;
};

SceneBundle rasterize(const TreeScene& scene, const RasterOptions& options = {});

/// Stroke of all branch polylines with their thickness.
MaskImage stroke_mask(const TreeScene& scene);

/// Pixels hidden by any occluder.
MaskImage occluder_mask(const TreeScene& scene);

/// 1 - |visible| / |whole|. Throws EmptyReference when `whole` is empty.
double occlusion_percentage(const MaskImage& whole, const MaskImage& visible);

/// Branch position at scan line `s` by linear interpolation of a monotone
/// polyline. Returns false when `s` lies outside the polyline's span.
bool polyline_position(const Polyline& line, bool scan_columns, double s, double& out);

/// Largest heading change between consecutive segments, in degrees.
double max_bend_degrees(const Polyline& line);

/// Scene-level descriptors stored with each sample and used for error tagging.
struct SceneTraits {
  double min_radius = 0.0;
  double max_bend_deg = 0.0;
  double merge_fraction = -1.0;  // merge_row / height, y-shaped only
};

SceneTraits scene_traits(const TreeScene& scene);

}  // namespace occbranch::synth
