#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace occbranch {

/// Per-row branch positions: for each branch channel and each scan line, the
/// coordinate of the branch centre across the scan line (a column index for
/// vertical trees). `width` is the extent of the coordinate axis, `height` the
/// number of scan lines.
///
/// Validity is tracked per channel and row so that a curve-fitting pipeline can
/// leave one channel shorter than another. Channel 0 is the leftmost branch
/// above the merge point.
struct PositionTarget {
  int n_branches = 0;
  int width = 0;
  int height = 0;
  std::vector<double> coords;       // n_branches * height
  std::vector<std::uint8_t> valid;  // n_branches * height

  PositionTarget() = default;
  PositionTarget(int n, int w, int h)
      : n_branches(n), width(w), height(h),
        coords(static_cast<std::size_t>(n) * h, 0.0),
        valid(static_cast<std::size_t>(n) * h, 0) {}

  double& coord(int branch, int row) { return coords[index(branch, row)]; }
  double coord(int branch, int row) const { return coords[index(branch, row)]; }

  bool is_valid(int branch, int row) const { return valid[index(branch, row)] != 0; }
  void set_valid(int branch, int row, bool v) { valid[index(branch, row)] = v ? 1 : 0; }

  void set(int branch, int row, double x) {
    coords[index(branch, row)] = x;
    valid[index(branch, row)] = 1;
  }

  /// Row valid in every channel.
  bool row_valid(int row) const {
    for (int b = 0; b < n_branches; ++b)
      if (!is_valid(b, row)) return false;
    return true;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }

  bool operator==(const PositionTarget&) const = default;

 private:
  std::size_t index(int branch, int row) const {
    return static_cast<std::size_t>(branch) * height + row;
  }
};

/// Checks the structural invariants: valid coordinates inside [0, width-1]
/// and a single contiguous valid run per channel. Returns an empty string
/// when all hold, otherwise a description of the first violation.
std::string check_target_invariants(const PositionTarget& target);

}  // namespace occbranch
