#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "occbranch/position_target.hpp"
#include "occbranch/synthdata.hpp"

namespace occbranch::metrics {

enum class Method { hob_cnn, visible_cf, whole_cf };

inline constexpr Method kAllMethods[] = {Method::hob_cnn, Method::visible_cf, Method::whole_cf};

std::string to_string(Method m);
Method parse_method(const std::string& s);

/// sqrt(mean squared difference) over every channel entry of the rows valid
/// in `gt`. Throws CoverageGap when `pred` lacks one of those entries and
/// ShapeError on mismatched dimensions.
double rmse(const PositionTarget& gt, const PositionTarget& pred);

struct GapFill {
  PositionTarget filled;
  int gaps = 0;  // gt-valid entries that pred did not cover
};

/// Copies `pred` and fills every gt-valid entry it lacks with the value of the
/// nearest predicted row of the same channel (the upper row on ties). Throws
/// CoverageGap when a channel that needs filling has no prediction at all.
GapFill fill_gaps(const PositionTarget& gt, const PositionTarget& pred);

/// Pearson correlation over the gt-valid entries of all channels
/// concatenated. Throws CoverageGap as rmse does, DegenerateVariance when
/// either series is constant or has fewer than two entries.
double pearson_r(const PositionTarget& gt, const PositionTarget& pred);

/// Pearson correlation of two equally long series.
double pearson_r(std::span<const double> g, std::span<const double> p);

struct StageTimes {
  double model_ms = 0.0;
  double curve_fit_ms = 0.0;
  bool has_curve_fit = false;
  double total_ms = 0.0;
};

struct EvalRecord {
  std::string id;
  Method method = Method::hob_cnn;
  std::string condition;
  double rmse = 0.0;
  double r = 0.0;
  double occlusion_fraction = 0.0;
  int gaps = 0;
  StageTimes times;
  std::vector<std::string> tags;
};

/// Mean and population standard deviation.
struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

Stat summarize(std::span<const double> values);

struct BucketRow {
  Method method = Method::hob_cnn;
  int index = 0;  // bucket covers [index * width, (index + 1) * width)
  double lower = 0.0;
  double upper = 0.0;
  Stat rmse;
  Stat r;
};

/// Half-open occlusion buckets, one row per non-empty (method, bucket),
/// ordered by method then bucket.
std::vector<BucketRow> stratify_by_occlusion(std::span<const EvalRecord> records, double bucket_width = 0.05);

struct ReportRow {
  Method method = Method::hob_cnn;
  std::string condition;  // "Total" pools every condition
  Stat rmse;
  Stat r;
};

inline constexpr const char* kTotalCondition = "Total";

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<BucketRow> buckets;
  std::size_t record_count = 0;
  std::map<std::string, std::size_t> method_counts;
  double bucket_width = 0.05;

  const ReportRow* find(Method m, const std::string& condition) const;
};

using ConditionKey = std::function<std::string(const EvalRecord&)>;

/// Mean/std per method and condition plus a pooled Total row per method.
/// Conditions are listed in `condition_order` first, then any others sorted.
EvalReport aggregate_report(std::span<const EvalRecord> records, const ConditionKey& condition_key = {},
                            const std::vector<std::string>& condition_order = {},
                            double bucket_width = 0.05);

std::string report_json(const EvalReport& report);
/// One line per (method, condition): rmse mean/std, r mean/std, count.
std::string report_csv(const EvalReport& report);
std::string buckets_csv(const EvalReport& report);
std::string records_csv(std::span<const EvalRecord> records);
/// Per-method mean stage times; empty curve_fit column where the stage is absent.
std::string timing_csv(std::span<const EvalRecord> records);

inline constexpr double kWorstRmse = 4.0;

/// Records with rmse above `threshold`, worst first.
std::vector<EvalRecord> worst_records(std::span<const EvalRecord> records, double threshold = kWorstRmse);

/// Failure-category tags derived from scene traits: extremely_occluded,
/// thin_branch, sharp_bend, unusual_shape, or other when none applies.
std::vector<std::string> error_tags(const synth::SceneTraits& traits, double occlusion_fraction);

template <typename R>
struct Timed {
  R value;
  double ms = 0.0;
};

/// Wall-clock milliseconds spent in `op`; the label names the stage for
/// diagnostics only.
template <typename F>
auto timed(std::string_view /*label*/, F&& op) {
  const auto start = std::chrono::steady_clock::now();
  if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
    std::forward<F>(op)();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  } else {
    auto value = std::forward<F>(op)();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return Timed<decltype(value)>{std::move(value), ms};
  }
}

}  // namespace occbranch::metrics
