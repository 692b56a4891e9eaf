#include "occbranch/annotation.hpp"

#include <algorithm>
#include <cmath>

#include "occbranch/error.hpp"
#include "occbranch/rng.hpp"

namespace occbranch {

std::string check_target_invariants(const PositionTarget& t) {
  if (t.n_branches <= 0 || t.width <= 0 || t.height <= 0) return "empty target";
  if (t.coords.size() != static_cast<std::size_t>(t.n_branches) * t.height ||
      t.valid.size() != t.coords.size()) {
    return "storage size mismatch";
  }
  for (int b = 0; b < t.n_branches; ++b) {
    int runs = 0;
    bool in_run = false;
    for (int r = 0; r < t.height; ++r) {
      if (t.is_valid(b, r)) {
        const double x = t.coord(b, r);
        if (!std::isfinite(x) || x < 0.0 || x > t.width - 1) {
          return "channel " + std::to_string(b) + " row " + std::to_string(r) + " out of range";
        }
        if (!in_run) ++runs;
        in_run = true;
      } else {
        in_run = false;
      }
    }
    if (runs > 1) return "channel " + std::to_string(b) + " has " + std::to_string(runs) + " valid runs";
  }
  return {};
}

}  // namespace occbranch

namespace occbranch::annotation {

namespace {

constexpr double kJoinTolerance = 1e-9;

void require_monotone(const synth::Polyline& line, bool scan_columns) {
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double prev = scan_columns ? line[i - 1].x : line[i - 1].y;
    const double cur = scan_columns ? line[i].x : line[i].y;
    if (!(cur > prev)) {
      throw NonScannableGeometry("polyline vertex " + std::to_string(i) +
                                 " does not advance along the scan axis");
    }
  }
}

/// Keep only the longest valid run in each channel.
void keep_longest_run(PositionTarget& t) {
  for (int b = 0; b < t.n_branches; ++b) {
    int best_start = 0, best_len = 0;
    for (int r = 0; r < t.height;) {
      if (!t.is_valid(b, r)) {
        ++r;
        continue;
      }
      int s = r;
      while (r < t.height && t.is_valid(b, r)) ++r;
      if (r - s > best_len) {
        best_len = r - s;
        best_start = s;
      }
    }
    for (int r = 0; r < t.height; ++r)
      if (r < best_start || r >= best_start + best_len) t.set_valid(b, r, false);
  }
}

}  // namespace

PositionTarget polyline_to_target(const std::vector<synth::Polyline>& polylines, synth::Canvas canvas,
                                  int n_branches, bool scan_columns) {
  if (n_branches <= 0) throw SpecMismatch("n_branches must be positive");
  if (static_cast<int>(polylines.size()) > n_branches) {
    throw NonScannableGeometry("more polylines than branch channels");
  }
  for (const auto& line : polylines) require_monotone(line, scan_columns);

  const int scan_len = scan_columns ? canvas.width : canvas.height;
  const int extent = scan_columns ? canvas.height : canvas.width;
  PositionTarget target(n_branches, extent, scan_len);
  std::vector<double> hits;
  for (int s = 0; s < scan_len; ++s) {
    hits.clear();
    for (const auto& line : polylines) {
      double pos;
      if (synth::polyline_position(line, scan_columns, s, pos)) hits.push_back(pos);
    }
    if (hits.empty()) continue;
    std::sort(hits.begin(), hits.end());
    std::vector<double> distinct;
    for (double h : hits)
      if (distinct.empty() || h - distinct.back() > kJoinTolerance) distinct.push_back(h);
    const int k = static_cast<int>(distinct.size());
    for (int b = 0; b < n_branches; ++b) target.set(b, s, distinct[static_cast<std::size_t>(b) * k / n_branches]);
  }
  return target;
}

RgbImage hflip(const RgbImage& image) {
  RgbImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
  return out;
}

PositionTarget hflip(const PositionTarget& target) {
  PositionTarget out(target.n_branches, target.width, target.height);
  for (int b = 0; b < target.n_branches; ++b) {
    const int dst = target.n_branches - 1 - b;
    for (int r = 0; r < target.height; ++r) {
      if (target.is_valid(b, r)) out.set(dst, r, (target.width - 1) - target.coord(b, r));
    }
  }
  return out;
}

std::pair<RgbImage, PositionTarget> hflip(const RgbImage& image, const PositionTarget& target) {
  if (target.width != image.width) {
    throw ShapeError("target width " + std::to_string(target.width) + " != image width " +
                     std::to_string(image.width));
  }
  return {hflip(image), hflip(target)};
}

RgbImage translate(const RgbImage& image, int dx, int dy) {
  RgbImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    const int sy = std::clamp(y - dy, 0, image.height - 1);
    for (int x = 0; x < image.width; ++x) {
      const int sx = std::clamp(x - dx, 0, image.width - 1);
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return out;
}

PositionTarget translate(const PositionTarget& target, int dx, int dy) {
  PositionTarget out(target.n_branches, target.width, target.height);
  for (int b = 0; b < target.n_branches; ++b) {
    for (int r = 0; r < target.height; ++r) {
      const int src = r - dy;
      if (src < 0 || src >= target.height || !target.is_valid(b, src)) continue;
      const double x = target.coord(b, src) + dx;
      if (x >= 0.0 && x <= target.width - 1) out.set(b, r, x);
    }
  }
  return out;
}

CropWindow crop_window(int width, int height, CropAnchor anchor, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidCrop("crop ratio must lie in (0, 1]");
  if (width > height) throw InvalidCrop("crop expects an image at least as tall as it is wide");
  CropWindow win;
  win.side = static_cast<int>(std::lround(ratio * height));
  if (win.side < 1 || win.side > width) {
    throw InvalidCrop("window side " + std::to_string(win.side) + " does not fit width " +
                      std::to_string(width));
  }
  win.x0 = (width - win.side) / 2;
  switch (anchor) {
    case CropAnchor::top: win.y0 = 0; break;
    case CropAnchor::center: win.y0 = (height - win.side) / 2; break;
    case CropAnchor::bottom: win.y0 = height - win.side; break;
  }
  return win;
}

RgbImage resample(const RgbImage& src, double x0, double y0, double src_w, double src_h, int out_w,
                  int out_h) {
  RgbImage out(out_w, out_h, src.channels);
  const double sx = src_w / out_w;
  const double sy = src_h / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp(y0 + (y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int iy = std::min(static_cast<int>(fy), src.height - 1);
    const int iy1 = std::min(iy + 1, src.height - 1);
    const double ty = fy - iy;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp(x0 + (x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int ix = std::min(static_cast<int>(fx), src.width - 1);
      const int ix1 = std::min(ix + 1, src.width - 1);
      const double tx = fx - ix;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - ty) * ((1 - tx) * src.at(ix, iy, c) + tx * src.at(ix1, iy, c)) +
                         ty * ((1 - tx) * src.at(ix, iy1, c) + tx * src.at(ix1, iy1, c));
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::pair<RgbImage, PositionTarget> crop_augment(const RgbImage& image, const PositionTarget& target,
                                                 CropAnchor anchor, double ratio, int out_size) {
  if (target.width != image.width || target.height != image.height) {
    throw ShapeError("target does not match image dimensions");
  }
  const CropWindow win = crop_window(image.width, image.height, anchor, ratio);
  const int out = out_size > 0 ? out_size : win.side;
  const double scale = static_cast<double>(out) / win.side;

  RgbImage cropped;
  if (out == win.side) {
    cropped = RgbImage(out, out, image.channels);
    for (int y = 0; y < out; ++y)
      for (int x = 0; x < out; ++x)
        for (int c = 0; c < image.channels; ++c) cropped.at(x, y, c) = image.at(win.x0 + x, win.y0 + y, c);
  } else {
    cropped = resample(image, win.x0, win.y0, win.side, win.side, out, out);
  }

  PositionTarget t(target.n_branches, out, out);
  for (int r = 0; r < out; ++r) {
    const double src_row = win.y0 + (r + 0.5) / scale - 0.5;
    if (src_row < 0.0 || src_row > target.height - 1) continue;
    const int lo = static_cast<int>(std::floor(src_row));
    const int hi = std::min(lo + 1, target.height - 1);
    const double frac = src_row - lo;
    for (int b = 0; b < target.n_branches; ++b) {
      if (!target.is_valid(b, lo) || (frac > 0.0 && !target.is_valid(b, hi))) continue;
      const double x = frac > 0.0 ? (1 - frac) * target.coord(b, lo) + frac * target.coord(b, hi)
                                  : target.coord(b, lo);
      const double mapped = (x - win.x0 + 0.5) * scale - 0.5;
      if (mapped < 0.0 || mapped > out - 1) continue;
      t.set(b, r, mapped);
    }
  }
  keep_longest_run(t);
  return {std::move(cropped), std::move(t)};
}

SplitAssignment split_cv_groups(const std::vector<std::string>& sample_ids, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least two cross-validation groups");
  if (static_cast<std::size_t>(k) > sample_ids.size()) {
    throw TooFewSamples(std::to_string(sample_ids.size()) + " samples cannot fill " + std::to_string(k) +
                        " groups");
  }
  std::vector<std::string> order = sample_ids;
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));
  SplitAssignment out;
  for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = static_cast<int>(i % k) + 1;
  return out;
}

}  // namespace occbranch::annotation
