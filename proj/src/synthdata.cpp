#include "occbranch/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occbranch/error.hpp"
#include "occbranch/rng.hpp"

namespace occbranch::synth {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Rgb jitter_color(Rng& rng, double r, double g, double b, double spread) {
  return {clamp_u8(r + rng.uniform(-spread, spread)), clamp_u8(g + rng.uniform(-spread, spread)),
          clamp_u8(b + rng.uniform(-spread, spread))};
}

/// Vertex positions along the scan axis: 0, step, ..., with `must_include`
/// inserted and the last scan line always present.
std::vector<int> scan_stops(int length, int step, int must_include) {
  std::vector<int> stops;
  for (int s = 0; s < length - 1; s += step) stops.push_back(s);
  stops.push_back(length - 1);
  if (must_include >= 0) stops.push_back(must_include);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  return stops;
}

/// Smooth lateral irregularity of a branch: two sinusoids with random
/// wavelengths and phases. A polynomial of low order cannot follow it.
struct Wiggle {
  double amp[2] = {0.0, 0.0};
  double wavelength[2] = {1.0, 1.0};
  double phase[2] = {0.0, 0.0};

  Wiggle() = default;
  Wiggle(Rng& rng, double scale) {
    const double total = scale * rng.uniform(0.4, 1.4);
    const double split = rng.uniform(0.3, 0.7);
    amp[0] = total * split;
    amp[1] = total * (1.0 - split);
    for (int k = 0; k < 2; ++k) {
      wavelength[k] = scale * rng.uniform(10.0, 26.0);
      phase[k] = rng.uniform(0.0, 2.0 * kPi);
    }
  }
  double operator()(double s) const {
    return amp[0] * std::sin(2.0 * kPi * s / wavelength[0] + phase[0]) +
           amp[1] * std::sin(2.0 * kPi * s / wavelength[1] + phase[1]);
  }
};

/// A single bowed stroke along the scan axis. Returns positions across it.
struct SingleStroke {
  Polyline line;
  std::vector<double> radius;
};

SingleStroke make_single_stroke(Rng& rng, int scan_len, int extent, double scale, bool scan_cols) {
  const double start = extent * (0.5 + rng.uniform(-0.15, 0.15));
  const double end = start + extent * rng.uniform(-0.15, 0.15);
  const double bow = extent * rng.uniform(-0.06, 0.06);
  const double r_base = scale * rng.uniform(2.0, 3.0);
  const double r_tip = std::max(1.0, 0.7 * r_base);
  const Wiggle wiggle(rng, scale);
  SingleStroke out;
  for (int s : scan_stops(scan_len, std::max(1, scan_len / 32), -1)) {
    // u = 0 at the base (last scan line), 1 at the far end.
    const double u = 1.0 - static_cast<double>(s) / (scan_len - 1);
    double pos = start + (end - start) * u + bow * std::sin(kPi * u) + wiggle(s);
    pos = std::clamp(pos, 1.0, extent - 2.0);
    out.line.push_back(scan_cols ? Point{static_cast<double>(s), pos} : Point{pos, static_cast<double>(s)});
    out.radius.push_back(r_base + (r_tip - r_base) * u);
  }
  return out;
}

void build_y_shaped(Rng& rng, TreeScene& scene) {
  const int w = scene.canvas.width;
  const int h = scene.canvas.height;
  const double scale = std::min(w, h) / 64.0;
  const int step = std::max(1, h / 32);

  const int merge = static_cast<int>(std::lround(h * rng.uniform(0.5, 0.68)));
  const double x_bottom = w * (0.5 + rng.uniform(-0.08, 0.08));
  const double x_merge = x_bottom + w * rng.uniform(-0.06, 0.06);
  const double trunk_bow = w * rng.uniform(-0.03, 0.03);
  const double end_x[2] = {w * rng.uniform(0.08, 0.3), w * rng.uniform(0.7, 0.92)};
  const double power[2] = {rng.uniform(0.6, 1.6), rng.uniform(0.6, 1.6)};
  const double blend[2] = {rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)};
  const double r_trunk = scale * rng.uniform(2.0, 3.0);
  const double r_merge = 0.75 * r_trunk;
  const double r_tip[2] = {std::max(1.0, scale * rng.uniform(1.0, 1.6)),
                           std::max(1.0, scale * rng.uniform(1.0, 1.6))};
  const Wiggle trunk_wiggle(rng, scale);
  const Wiggle branch_wiggle[2] = {Wiggle(rng, scale), Wiggle(rng, scale)};

  scene.merge_row = merge;
  scene.branches.assign(2, {});
  scene.thickness.assign(2, {});
  for (int y : scan_stops(h, step, merge)) {
    for (int b = 0; b < 2; ++b) {
      double x;
      double r;
      if (y >= merge) {
        const double u = (h - 1 == merge) ? 0.0 : static_cast<double>(y - merge) / (h - 1 - merge);
        x = x_merge + (x_bottom - x_merge) * u + trunk_bow * std::sin(kPi * u) + trunk_wiggle(y);
        r = r_merge + (r_trunk - r_merge) * u;
      } else {
        const double t = static_cast<double>(merge - y) / merge;
        const double f = (1.0 - blend[b]) * std::pow(t, power[b]) + blend[b] * std::sin(kPi * t / 2.0);
        // Continuous at the merge row. The quadratic ramp keeps the wiggle
        // difference below the branch separation (>= 12.8 t^1.6 px at 64 px),
        // so the left branch stays strictly left.
        const double ramp = std::min(1.0, 2.0 * t) * std::min(1.0, 2.0 * t);
        x = x_merge + (end_x[b] - x_merge) * f + trunk_wiggle(merge) +
            ramp * (branch_wiggle[b](y) - branch_wiggle[b](merge));
        r = r_merge + (r_tip[b] - r_merge) * t;
      }
      scene.branches[b].push_back({std::clamp(x, 1.0, w - 2.0), static_cast<double>(y)});
      scene.thickness[b].push_back(std::max(1.0, r));
    }
  }
}

/// Calls `f(x, y)` for every pixel centre within the variable-radius stroke
/// of `line` (pixels may repeat).
template <typename F>
void for_each_stroke_pixel(const Polyline& line, const std::vector<double>& rad, int width, int height, F&& f) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point p0 = line[i];
    const Point p1 = line[i + 1];
    const double r0 = rad[i];
    const double r1 = rad[i + 1];
    const double rmax = std::max(r0, r1);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p0.x, p1.x) - rmax)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(p0.x, p1.x) + rmax)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(p0.y, p1.y) - rmax)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(p0.y, p1.y) + rmax)));
    const double dx = p1.x - p0.x;
    const double dy = p1.y - p0.y;
    const double len2 = dx * dx + dy * dy;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double t = len2 > 0.0 ? ((x - p0.x) * dx + (y - p0.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = x - (p0.x + t * dx);
        const double ey = y - (p0.y + t * dy);
        const double r = r0 + t * (r1 - r0);
        if (ex * ex + ey * ey <= r * r) f(x, y);
      }
    }
  }
}

/// Neighbouring-tree branches and trellis wires behind the tree.
void add_background(Rng& rng, TreeScene& scene) {
  const double w = scene.canvas.width;
  const double h = scene.canvas.height;
  const double scale = std::min(w, h) / 64.0;
  const int n = rng.uniform_int(1, 3);
  for (int k = 0; k < n; ++k) {
    Distractor d;
    if (rng.bernoulli(0.35)) {
      const double y = h * rng.uniform(0.1, 0.9);
      const double tilt = h * rng.uniform(-0.04, 0.04);
      d.line = {{-2.0, y}, {w + 1.0, y + tilt}};
      d.radius = scale * rng.uniform(0.5, 0.8);
      d.color = jitter_color(rng, 160, 160, 165, 20);
    } else {
      // Enters from the left or right edge and climbs toward the top.
      const bool left = rng.bernoulli(0.5);
      const double x0 = left ? w * rng.uniform(-0.1, 0.15) : w * rng.uniform(0.85, 1.1);
      const double y0 = h * rng.uniform(0.3, 1.05);
      const double x2 = x0 + (left ? 1.0 : -1.0) * w * rng.uniform(0.05, 0.35);
      const double y2 = h * rng.uniform(-0.05, 0.3);
      const Point mid{0.5 * (x0 + x2) + w * rng.uniform(-0.08, 0.08), 0.5 * (y0 + y2)};
      d.line = {{x0, y0}, mid, {x2, y2}};
      d.radius = scale * rng.uniform(0.8, 1.5);
      const double shade = rng.uniform(0.65, 0.95);
      d.color = {clamp_u8(scene.bark.r * shade), clamp_u8(scene.bark.g * shade), clamp_u8(scene.bark.b * shade)};
    }
    scene.background.push_back(d);
  }
}

Occluder random_occluder(Rng& rng, const TreeScene& scene) {
  const double scale = std::min(scene.canvas.width, scene.canvas.height) / 64.0;
  // Anchor on a random point of a random branch so that most occluders
  // actually hide branch pixels.
  const auto& line = scene.branches[rng.below(scene.branches.size())];
  const std::size_t seg = rng.below(line.size() - 1);
  const double t = rng.uniform();
  Occluder occ;
  occ.center = {line[seg].x + t * (line[seg + 1].x - line[seg].x) + rng.normal(0.0, 4.0 * scale),
                line[seg].y + t * (line[seg + 1].y - line[seg].y) + rng.normal(0.0, 4.0 * scale)};
  const double pick = rng.uniform();
  if (pick < 0.4) {
    occ.shape = OccluderShape::disk;
    occ.size = scale * rng.uniform(3.0, 6.0);
    occ.color = jitter_color(rng, 190, 35, 40, 20);
  } else if (pick < 0.75) {
    occ.shape = OccluderShape::ellipse;
    occ.size = scale * rng.uniform(4.0, 9.0);
    occ.aspect = rng.uniform(0.35, 0.7);
    occ.angle = rng.uniform(0.0, kPi);
    occ.color = jitter_color(rng, 55, 125, 45, 20);
  } else {
    occ.shape = OccluderShape::leaf_blob;
    occ.size = scale * rng.uniform(5.0, 11.0);
    occ.aspect = rng.uniform(0.3, 0.6);
    occ.angle = rng.uniform(0.0, kPi);
    occ.color = jitter_color(rng, 70, 140, 50, 20);
  }
  return occ;
}

void place_occluders(Rng& rng, TreeScene& scene) {
  if (scene.regime == OcclusionRegime::none) return;
  const RegimeStats stats = regime_stats(scene.regime);
  const double target = std::clamp(rng.normal(stats.mean, stats.stddev), 0.0, 0.9);
  if (target <= 0.0) return;

  const MaskImage whole = stroke_mask(scene);
  const double total = static_cast<double>(count_foreground(whole));
  std::vector<std::uint8_t> hidden(whole.data.size(), 0);
  std::size_t hidden_count = 0;
  constexpr int kMaxAttempts = 400;
  constexpr std::size_t kMaxOccluders = 80;

  for (int attempt = 0; attempt < kMaxAttempts && scene.occluders.size() < kMaxOccluders; ++attempt) {
    const Occluder occ = random_occluder(rng, scene);
    std::vector<std::size_t> newly;
    const int x0 = std::max(0, static_cast<int>(std::floor(occ.center.x - occ.size - 1)));
    const int x1 = std::min(whole.width - 1, static_cast<int>(std::ceil(occ.center.x + occ.size + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(occ.center.y - occ.size - 1)));
    const int y1 = std::min(whole.height - 1, static_cast<int>(std::ceil(occ.center.y + occ.size + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * whole.width + x;
        if (whole.data[i] && !hidden[i] && occ.covers(x, y)) newly.push_back(i);
      }
    }
    if (newly.empty()) continue;
    const double before = hidden_count / total;
    const double after = (hidden_count + newly.size()) / total;
    if (after >= target) {
      // Keep whichever side of the target is closer.
      if (std::abs(after - target) < std::abs(before - target)) scene.occluders.push_back(occ);
      return;
    }
    for (auto i : newly) hidden[i] = 1;
    hidden_count += newly.size();
    scene.occluders.push_back(occ);
  }
}

}  // namespace

std::string to_string(TreeKind kind) {
  switch (kind) {
    case TreeKind::y_shaped: return "y_shaped";
    case TreeKind::trunk_only: return "trunk_only";
    case TreeKind::horizontal_vine: return "horizontal_vine";
  }
  return "?";
}

std::string to_string(OcclusionRegime regime) {
  switch (regime) {
    case OcclusionRegime::none: return "none";
    case OcclusionRegime::medium: return "medium";
    case OcclusionRegime::heavy: return "heavy";
  }
  return "?";
}

std::string to_string(OccluderShape shape) {
  switch (shape) {
    case OccluderShape::disk: return "disk";
    case OccluderShape::ellipse: return "ellipse";
    case OccluderShape::leaf_blob: return "leaf_blob";
  }
  return "?";
}

TreeKind parse_tree_kind(const std::string& s) {
  if (s == "y_shaped") return TreeKind::y_shaped;
  if (s == "trunk_only") return TreeKind::trunk_only;
  if (s == "horizontal_vine") return TreeKind::horizontal_vine;
  throw ConfigError("unknown tree kind '" + s + "'");
}

OcclusionRegime parse_regime(const std::string& s) {
  if (s == "none") return OcclusionRegime::none;
  if (s == "medium") return OcclusionRegime::medium;
  if (s == "heavy") return OcclusionRegime::heavy;
  throw ConfigError("unknown occlusion regime '" + s + "'");
}

int branch_count(TreeKind kind) { return kind == TreeKind::y_shaped ? 2 : 1; }

RegimeStats regime_stats(OcclusionRegime regime) {
  switch (regime) {
    case OcclusionRegime::none: return {0.0, 0.0};
    case OcclusionRegime::medium: return {0.14, 0.15};
    case OcclusionRegime::heavy: return {0.36, 0.09};
  }
  return {0.0, 0.0};
}

bool Occluder::covers(double x, double y) const {
  const double dx = x - center.x;
  const double dy = y - center.y;
  if (shape == OccluderShape::disk) return dx * dx + dy * dy <= size * size;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double u = dx * c + dy * s;   // along the major axis
  const double v = -dx * s + dy * c;  // along the minor axis
  const double minor = size * aspect;
  if (shape == OccluderShape::ellipse) {
    return (u * u) / (size * size) + (v * v) / (minor * minor) <= 1.0;
  }
  // Leaf blob: lens formed by two overlapping disks, half-length `size`,
  // half-width `minor`.
  const double offset = (size * size / minor - minor) / 2.0;
  const double radius = offset + minor;
  const double r2 = radius * radius;
  return u * u + (v - offset) * (v - offset) <= r2 && u * u + (v + offset) * (v + offset) <= r2;
}

TreeScene generate_scene(TreeKind kind, Canvas canvas, OcclusionRegime regime, std::uint64_t seed) {
  if (canvas.width < 32 || canvas.height < 32) {
    throw InvalidCanvas("canvas " + std::to_string(canvas.width) + "x" + std::to_string(canvas.height) +
                        " is smaller than 32x32");
  }
  Rng rng(seed);
  TreeScene scene;
  scene.kind = kind;
  scene.regime = regime;
  scene.canvas = canvas;
  scene.seed = seed;
  scene.bark = jitter_color(rng, 105, 72, 45, 18);

  switch (kind) {
    case TreeKind::y_shaped:
      build_y_shaped(rng, scene);
      break;
    case TreeKind::trunk_only:
    case TreeKind::horizontal_vine: {
      const bool cols = kind == TreeKind::horizontal_vine;
      const double scale = std::min(canvas.width, canvas.height) / 64.0;
      SingleStroke stroke = cols ? make_single_stroke(rng, canvas.width, canvas.height, scale, true)
                                 : make_single_stroke(rng, canvas.height, canvas.width, scale, false);
      scene.branches = {std::move(stroke.line)};
      scene.thickness = {std::move(stroke.radius)};
      break;
    }
  }
  add_background(rng, scene);
  place_occluders(rng, scene);
  return scene;
}

MaskImage stroke_mask(const TreeScene& scene) {
  MaskImage mask = make_mask(scene.canvas.width, scene.canvas.height);
  for (std::size_t b = 0; b < scene.branches.size(); ++b) {
    for_each_stroke_pixel(scene.branches[b], scene.thickness[b], mask.width, mask.height,
                          [&](int x, int y) { mask.at(x, y) = 1; });
  }
  return mask;
}

MaskImage occluder_mask(const TreeScene& scene) {
  MaskImage mask = make_mask(scene.canvas.width, scene.canvas.height);
  for (const auto& occ : scene.occluders) {
    const int x0 = std::max(0, static_cast<int>(std::floor(occ.center.x - occ.size - 1)));
    const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(occ.center.x + occ.size + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(occ.center.y - occ.size - 1)));
    const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(occ.center.y + occ.size + 1)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (occ.covers(x, y)) mask.at(x, y) = 1;
  }
  return mask;
}

bool polyline_position(const Polyline& line, bool scan_columns, double s, double& out) {
  auto scan = [&](const Point& p) { return scan_columns ? p.x : p.y; };
  auto across = [&](const Point& p) { return scan_columns ? p.y : p.x; };
  if (line.empty() || s < scan(line.front()) || s > scan(line.back())) return false;
  auto it = std::lower_bound(line.begin(), line.end(), s,
                             [&](const Point& p, double v) { return scan(p) < v; });
  if (it == line.begin()) {
    out = across(*it);
    return true;
  }
  const Point& hi = *it;
  const Point& lo = *(it - 1);
  const double t = (s - scan(lo)) / (scan(hi) - scan(lo));
  out = across(lo) + t * (across(hi) - across(lo));
  return true;
}

SceneBundle rasterize(const TreeScene& scene, const RasterOptions& options) {
  const int w = scene.canvas.width;
  const int h = scene.canvas.height;
  SceneBundle bundle;
  bundle.whole_mask = stroke_mask(scene);
  const MaskImage hidden = occluder_mask(scene);

  bundle.visible_mask = bundle.whole_mask;
  for (std::size_t i = 0; i < hidden.data.size(); ++i)
    if (hidden.data[i]) bundle.visible_mask.data[i] = 0;

  // Target straight from the polylines: branch b feeds channel b.
  const bool cols = scene.scans_columns();
  const int scan_len = cols ? w : h;
  const int extent = cols ? h : w;
  const int n = static_cast<int>(scene.branches.size());
  bundle.target = PositionTarget(n, extent, scan_len);
  for (int b = 0; b < n; ++b) {
    for (int s = 0; s < scan_len; ++s) {
      double pos;
      if (polyline_position(scene.branches[b], cols, s, pos)) bundle.target.set(b, s, pos);
    }
  }

  const std::size_t whole_count = count_foreground(bundle.whole_mask);
  bundle.occlusion_fraction =
      whole_count > 0 ? occlusion_percentage(bundle.whole_mask, bundle.visible_mask) : 0.0;

  // Pixels: background gradient with faint clutter, background strokes, bark,
  // then occluders.
  Rng rng(mix_seed(scene.seed, 1));
  const int channels = options.depth_channel ? 4 : 3;
  RgbImage img(w, h, channels, 0);
  const Rgb top = jitter_color(rng, 150, 170, 185, 20);
  const Rgb bottom = jitter_color(rng, 115, 125, 95, 20);
  for (int y = 0; y < h; ++y) {
    const double t = static_cast<double>(y) / (h - 1);
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = clamp_u8(top.r + t * (bottom.r - top.r));
      img.at(x, y, 1) = clamp_u8(top.g + t * (bottom.g - top.g));
      img.at(x, y, 2) = clamp_u8(top.b + t * (bottom.b - top.b));
      if (channels == 4) img.at(x, y, 3) = 50;
    }
  }
  const int clutter = rng.uniform_int(2, 5);
  for (int k = 0; k < clutter; ++k) {
    const double cx = rng.uniform(0, w);
    const double cy = rng.uniform(0, h);
    const double rad = rng.uniform(3.0, 9.0) * std::min(w, h) / 64.0;
    const double shade = rng.uniform(-18.0, 18.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(img.at(x, y, c) + shade);
  }
  for (const auto& d : scene.background) {
    const std::vector<double> radius(d.line.size(), d.radius);
    for_each_stroke_pixel(d.line, radius, w, h, [&](int x, int y) {
      img.at(x, y, 0) = d.color.r;
      img.at(x, y, 1) = d.color.g;
      img.at(x, y, 2) = d.color.b;
    });
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bundle.whole_mask.at(x, y)) continue;
      img.at(x, y, 0) = scene.bark.r;
      img.at(x, y, 1) = scene.bark.g;
      img.at(x, y, 2) = scene.bark.b;
      if (channels == 4) img.at(x, y, 3) = 150;
    }
  }
  for (const auto& occ : scene.occluders) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!occ.covers(x, y)) continue;
        img.at(x, y, 0) = occ.color.r;
        img.at(x, y, 1) = occ.color.g;
        img.at(x, y, 2) = occ.color.b;
        if (channels == 4) img.at(x, y, 3) = 230;
      }
    }
  }
  if (options.pixel_noise) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(img.at(x, y, c) + rng.normal(0.0, 5.0));
  }
  bundle.image = std::move(img);
  return bundle;
}

double occlusion_percentage(const MaskImage& whole, const MaskImage& visible) {
  if (whole.width != visible.width || whole.height != visible.height) {
    throw ShapeError("whole and visible masks differ in size");
  }
  const std::size_t whole_count = count_foreground(whole);
  if (whole_count == 0) throw EmptyReference("whole-branch mask has no foreground pixels");
  return 1.0 - static_cast<double>(count_foreground(visible)) / static_cast<double>(whole_count);
}

double max_bend_degrees(const Polyline& line) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < line.size(); ++i) {
    const double a0 = std::atan2(line[i].y - line[i - 1].y, line[i].x - line[i - 1].x);
    const double a1 = std::atan2(line[i + 1].y - line[i].y, line[i + 1].x - line[i].x);
    double d = std::abs(a1 - a0);
    if (d > kPi) d = 2 * kPi - d;
    worst = std::max(worst, d * 180.0 / kPi);
  }
  return worst;
}

SceneTraits scene_traits(const TreeScene& scene) {
  SceneTraits traits;
  traits.min_radius = 1e300;
  for (const auto& radii : scene.thickness)
    for (double r : radii) traits.min_radius = std::min(traits.min_radius, r);
  for (const auto& line : scene.branches) traits.max_bend_deg = std::max(traits.max_bend_deg, max_bend_degrees(line));
  if (scene.kind == TreeKind::y_shaped && scene.canvas.height > 0) {
    traits.merge_fraction = static_cast<double>(scene.merge_row) / scene.canvas.height;
  }
  return traits;
}

}  // namespace occbranch::synth
