#include "occbranch/curvefit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "occbranch/error.hpp"

namespace occbranch::curvefit {

double PolyCurve::normalize(double row) const {
  const double span = row_max - row_min;
  return span > 0.0 ? (2.0 * row - (row_min + row_max)) / span : 0.0;
}

double PolyCurve::operator()(double row) const {
  const double t = normalize(row);
  double x = 0.0;
  for (std::size_t j = coeffs.size(); j-- > 0;) x = x * t + coeffs[j];
  return x;
}

MaskImage blob_filter(const MaskImage& mask, int min_area, int* removed) {
  MaskImage out = mask;
  const int w = mask.width, h = mask.height;
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  std::vector<int> stack, component;
  int dropped = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.data[start] || seen[start]) continue;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const int px = p % w, py = p / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int qx = px + dx, qy = py + dy;
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          const int q = qy * w + qx;
          if (mask.data[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    if (static_cast<int>(component.size()) < min_area) {
      for (int p : component) out.data[p] = 0;
      ++dropped;
    }
  }
  if (removed) *removed = dropped;
  return out;
}

std::vector<WaypointRow> extract_waypoints(const MaskImage& mask) {
  std::vector<WaypointRow> rows;
  for (int y = 0; y < mask.height; ++y) {
    WaypointRow row{y, {}};
    int x = 0;
    while (x < mask.width) {
      if (!mask.at(x, y)) {
        ++x;
        continue;
      }
      const int begin = x;
      while (x < mask.width && mask.at(x, y)) ++x;
      row.centers.push_back(0.5 * (begin + x - 1));
    }
    if (!row.centers.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Path> split_left_right(std::span<const WaypointRow> waypoints, int n_branches) {
  if (n_branches != 1 && n_branches != 2) throw ConfigError("curve fitting supports 1 or 2 branches");
  if (waypoints.empty()) throw NoBranchDetected("mask has no waypoints");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (waypoints[i].row <= waypoints[i - 1].row) throw ConfigError("waypoint rows must be strictly ascending");
  }

  if (n_branches == 1) {
    std::vector<Path> paths(1);
    for (auto it = waypoints.rbegin(); it != waypoints.rend(); ++it) {
      double sum = 0.0;
      for (double c : it->centers) sum += c;
      paths[0].push_back({it->row, sum / static_cast<double>(it->centers.size())});
    }
    return paths;
  }

  int merge = -1;
  for (const auto& w : waypoints)
    if (w.centers.size() >= 2) merge = std::max(merge, w.row);

  std::vector<Path> paths(2);
  Path& left = paths[0];
  Path& right = paths[1];
  for (auto it = waypoints.rbegin(); it != waypoints.rend(); ++it) {
    const int row = it->row;
    const auto& c = it->centers;
    if (c.size() >= 2) {
      left.push_back({row, c.front()});
      right.push_back({row, c.back()});
    } else if (merge < 0 || row > merge) {
      left.push_back({row, c.front()});
      right.push_back({row, c.front()});
    } else {
      // Above the merge row both paths already hold a point.
      const double dl = std::abs(c.front() - left.back().x);
      const double dr = std::abs(c.front() - right.back().x);
      (dl <= dr ? left : right).push_back({row, c.front()});
    }
  }
  return paths;
}

PolyCurve fit_polynomial(std::span<const PathPoint> path, int order) {
  if (order < 1) throw ConfigError("polynomial order must be at least 1");
  std::set<int> rows;
  for (const auto& p : path) rows.insert(p.row);
  if (rows.size() < 2) {
    throw InsufficientPoints("polynomial fit needs at least two distinct rows, got " + std::to_string(rows.size()));
  }
  PolyCurve curve;
  curve.order = std::min<int>(order, static_cast<int>(rows.size()) - 1);
  curve.row_min = *rows.begin();
  curve.row_max = *rows.rbegin();

  const int m = static_cast<int>(path.size());
  const int k = curve.order + 1;
  Eigen::MatrixXd a(m, k);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    const double t = curve.normalize(path[i].row);
    double v = 1.0;
    for (int j = 0; j < k; ++j) {
      a(i, j) = v;
      v *= t;
    }
    b(i) = path[i].x;
  }
  const Eigen::VectorXd coeffs = a.householderQr().solve(b);
  curve.coeffs.assign(coeffs.data(), coeffs.data() + k);
  curve.residual_rms = std::sqrt((a * coeffs - b).squaredNorm() / m);
  for (double c : curve.coeffs)
    if (!std::isfinite(c)) throw InsufficientPoints("polynomial fit produced non-finite coefficients");
  return curve;
}

std::string FitDiagnostics::to_json() const {
  nlohmann::json j;
  j["removed_blobs"] = removed_blobs;
  j["waypoint_rows"] = waypoint_rows;
  j["path_sizes"] = path_sizes;
  j["orders"] = orders;
  j["residual_rms"] = residuals;
  return j.dump(2);
}

namespace {

MaskImage transpose(const MaskImage& m) {
  MaskImage t = make_mask(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) t.at(y, x) = m.at(x, y);
  return t;
}

}  // namespace

FitResult fit_mask(const MaskImage& input, int n_branches, const FitOptions& options) {
  const MaskImage oriented = options.scan_columns ? transpose(input) : input;
  FitResult result;
  const MaskImage filtered = blob_filter(oriented, options.min_area, &result.diagnostics.removed_blobs);
  const auto waypoints = extract_waypoints(filtered);
  result.diagnostics.waypoint_rows = static_cast<int>(waypoints.size());
  const auto paths = split_left_right(waypoints, n_branches);

  const int w = oriented.width;
  result.target = PositionTarget(n_branches, w, oriented.height);
  for (int b = 0; b < n_branches; ++b) {
    const Path& path = paths[b];
    result.diagnostics.path_sizes.push_back(static_cast<int>(path.size()));
    if (path.size() == 1) {
      result.target.set(b, path[0].row, std::clamp(path[0].x, 0.0, static_cast<double>(w - 1)));
      result.diagnostics.orders.push_back(0);
      result.diagnostics.residuals.push_back(0.0);
      continue;
    }
    const PolyCurve curve = fit_polynomial(path, options.order);
    result.diagnostics.orders.push_back(curve.order);
    result.diagnostics.residuals.push_back(curve.residual_rms);
    for (int row = static_cast<int>(curve.row_min); row <= static_cast<int>(curve.row_max); ++row) {
      result.target.set(b, row, std::clamp(curve(row), 0.0, static_cast<double>(w - 1)));
    }
  }
  return result;
}

PositionTarget mask_to_positions(const MaskImage& mask, int n_branches, const FitOptions& options) {
  return fit_mask(mask, n_branches, options).target;
}

}  // namespace occbranch::curvefit
