#pragma once

#include <span>
#include <string>
#include <vector>

#include "occbranch/position_target.hpp"
#include "occbranch/raster.hpp"

namespace occbranch::curvefit {

inline constexpr int kDefaultMinBlobArea = 65;
inline constexpr int kDefaultOrder = 5;

/// Centers of the foreground runs of one mask row, ascending.
struct WaypointRow {
  int row = 0;
  std::vector<double> centers;
};

struct PathPoint {
  int row = 0;
  double x = 0.0;
};
using Path = std::vector<PathPoint>;

/// x = sum_j coeffs[j] * yhat^j, yhat = (2 row - (row_min + row_max)) / (row_max - row_min).
struct PolyCurve {
  std::vector<double> coeffs;
  int order = 0;
  double residual_rms = 0.0;
  double row_min = 0.0;
  double row_max = 1.0;

  double normalize(double row) const;
  double operator()(double row) const;
};

/// Removes 8-connected components with fewer than `min_area` pixels. When
/// `removed` is non-null it receives the number of dropped components.
MaskImage blob_filter(const MaskImage& mask, int min_area = kDefaultMinBlobArea, int* removed = nullptr);

/// One center per maximal horizontal run (mean column of the run). Rows
/// without foreground are omitted.
std::vector<WaypointRow> extract_waypoints(const MaskImage& mask);

/// Splits waypoints into `n_branches` paths (1 or 2), each ordered bottom-up.
/// Rows with several centers give their min to Left and max to Right. Below
/// the lowest such row, single centers feed both paths; above it, a single
/// center joins the path whose latest point is horizontally nearest (ties go
/// Left). With n_branches == 1 each row contributes the mean of its centers.
/// Throws NoBranchDetected when there are no waypoints.
std::vector<Path> split_left_right(std::span<const WaypointRow> waypoints, int n_branches = 2);

/// Least-squares polynomial x(row) through Householder QR of the Vandermonde
/// matrix in the normalised row domain. The order drops to points - 1 when
/// points are scarce. Throws InsufficientPoints below two distinct rows.
PolyCurve fit_polynomial(std::span<const PathPoint> path, int order = kDefaultOrder);

struct FitDiagnostics {
  int removed_blobs = 0;
  int waypoint_rows = 0;
  std::vector<int> path_sizes;
  std::vector<int> orders;
  std::vector<double> residuals;

  std::string to_json() const;
};

struct FitOptions {
  int min_area = kDefaultMinBlobArea;
  int order = kDefaultOrder;
  /// Scan the transposed mask, producing one coordinate per column.
  bool scan_columns = false;
};

struct FitResult {
  PositionTarget target;
  FitDiagnostics diagnostics;
};

/// blob_filter -> extract_waypoints -> split_left_right -> fit_polynomial,
/// each curve evaluated over its path's row span and clamped to [0, W-1].
/// Rows outside a path's span are invalid in that channel.
FitResult fit_mask(const MaskImage& mask, int n_branches, const FitOptions& options = {});

PositionTarget mask_to_positions(const MaskImage& mask, int n_branches, const FitOptions& options = {});

}  // namespace occbranch::curvefit
