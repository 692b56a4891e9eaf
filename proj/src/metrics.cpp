#include "occbranch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"
#include "occbranch/error.hpp"

namespace occbranch::metrics {

namespace {

void check_shape(const PositionTarget& gt, const PositionTarget& pred) {
  if (gt.n_branches != pred.n_branches || gt.height != pred.height || gt.width != pred.width) {
    throw ShapeError("prediction shape does not match ground truth");
  }
}

/// Paired gt/pred values over gt-valid rows; throws CoverageGap on a hole.
void paired(const PositionTarget& gt, const PositionTarget& pred, std::vector<double>& g, std::vector<double>& p) {
  check_shape(gt, pred);
  for (int b = 0; b < gt.n_branches; ++b) {
    for (int r = 0; r < gt.height; ++r) {
      if (!gt.row_valid(r)) continue;
      if (!pred.is_valid(b, r)) {
        throw CoverageGap("prediction has no value for channel " + std::to_string(b) + " row " + std::to_string(r));
      }
      g.push_back(gt.coord(b, r));
      p.push_back(pred.coord(b, r));
    }
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::hob_cnn: return "hob_cnn";
    case Method::visible_cf: return "visible_cf";
    case Method::whole_cf: return "whole_cf";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : kAllMethods)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

double rmse(const PositionTarget& gt, const PositionTarget& pred) {
  std::vector<double> g, p;
  paired(gt, pred, g, p);
  if (g.empty()) throw CoverageGap("ground truth has no valid rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) sum += (g[i] - p[i]) * (g[i] - p[i]);
  return std::sqrt(sum / static_cast<double>(g.size()));
}

GapFill fill_gaps(const PositionTarget& gt, const PositionTarget& pred) {
  check_shape(gt, pred);
  GapFill out{pred, 0};
  for (int b = 0; b < gt.n_branches; ++b) {
    std::vector<int> have;
    for (int r = 0; r < pred.height; ++r)
      if (pred.is_valid(b, r)) have.push_back(r);
    for (int r = 0; r < gt.height; ++r) {
      if (!gt.row_valid(r) || pred.is_valid(b, r)) continue;
      if (have.empty()) throw CoverageGap("channel " + std::to_string(b) + " has no predicted rows");
      const auto it = std::lower_bound(have.begin(), have.end(), r);
      int src;
      if (it == have.end()) {
        src = have.back();
      } else if (it == have.begin()) {
        src = *it;
      } else {
        const int above = *(it - 1), below = *it;
        src = (r - above <= below - r) ? above : below;
      }
      out.filled.set(b, r, pred.coord(b, src));
      ++out.gaps;
    }
  }
  return out;
}

double pearson_r(std::span<const double> g, std::span<const double> p) {
  if (g.size() != p.size()) throw ShapeError("series lengths differ");
  if (g.size() < 2) throw DegenerateVariance("correlation needs at least two entries");
  const double n = static_cast<double>(g.size());
  double mg = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    mg += g[i];
    mp += p[i];
  }
  mg /= n;
  mp /= n;
  double sgp = 0.0, sgg = 0.0, spp = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    sgp += (g[i] - mg) * (p[i] - mp);
    sgg += (g[i] - mg) * (g[i] - mg);
    spp += (p[i] - mp) * (p[i] - mp);
  }
  if (!(sgg > 0.0)) throw DegenerateVariance("ground truth series is constant");
  if (!(spp > 0.0)) throw DegenerateVariance("predicted series is constant");
  return std::clamp(sgp / std::sqrt(sgg * spp), -1.0, 1.0);
}

double pearson_r(const PositionTarget& gt, const PositionTarget& pred) {
  std::vector<double> g, p;
  paired(gt, pred, g, p);
  return pearson_r(g, p);
}

Stat summarize(std::span<const double> values) {
  Stat s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::vector<BucketRow> stratify_by_occlusion(std::span<const EvalRecord> records, double bucket_width) {
  if (!(bucket_width > 0.0)) throw ConfigError("bucket width must be positive");
  std::map<std::pair<Method, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& rec : records) {
    const int idx = static_cast<int>(std::floor(rec.occlusion_fraction / bucket_width + 1e-9));
    auto& g = groups[{rec.method, idx}];
    g.first.push_back(rec.rmse);
    g.second.push_back(rec.r);
  }
  std::vector<BucketRow> out;
  for (const auto& [key, vals] : groups) {
    BucketRow row;
    row.method = key.first;
    row.index = key.second;
    row.lower = key.second * bucket_width;
    row.upper = (key.second + 1) * bucket_width;
    row.rmse = summarize(vals.first);
    row.r = summarize(vals.second);
    out.push_back(row);
  }
  return out;
}

const ReportRow* EvalReport::find(Method m, const std::string& condition) const {
  for (const auto& row : rows)
    if (row.method == m && row.condition == condition) return &row;
  return nullptr;
}

EvalReport aggregate_report(std::span<const EvalRecord> records, const ConditionKey& condition_key,
                            const std::vector<std::string>& condition_order, double bucket_width) {
  EvalReport report;
  report.record_count = records.size();
  report.bucket_width = bucket_width;
  auto key = [&](const EvalRecord& r) { return condition_key ? condition_key(r) : r.condition; };

  std::vector<std::string> conditions;
  std::set<std::string> seen;
  std::set<std::string> present;
  for (const auto& r : records) present.insert(key(r));
  for (const auto& c : condition_order)
    if (present.count(c) && seen.insert(c).second) conditions.push_back(c);
  for (const auto& c : present)
    if (seen.insert(c).second) conditions.push_back(c);

  for (Method m : kAllMethods) {
    std::vector<double> all_rmse, all_r;
    for (const auto& c : conditions) {
      std::vector<double> rm, rr;
      for (const auto& r : records) {
        if (r.method != m || key(r) != c) continue;
        rm.push_back(r.rmse);
        rr.push_back(r.r);
      }
      if (rm.empty()) continue;
      report.rows.push_back({m, c, summarize(rm), summarize(rr)});
      all_rmse.insert(all_rmse.end(), rm.begin(), rm.end());
      all_r.insert(all_r.end(), rr.begin(), rr.end());
    }
    if (all_rmse.empty()) continue;
    report.rows.push_back({m, kTotalCondition, summarize(all_rmse), summarize(all_r)});
    report.method_counts[to_string(m)] = all_rmse.size();
  }
  report.buckets = stratify_by_occlusion(records, bucket_width);
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["std_convention"] = "population";
  j["correlation_convention"] = "channels concatenated";
  j["record_count"] = report.record_count;
  j["method_counts"] = report.method_counts;
  j["bucket_width"] = report.bucket_width;
  auto stat = [](const Stat& s) {
    nlohmann::ordered_json o;
    o["mean"] = s.mean;
    o["std"] = s.std;
    o["count"] = s.count;
    return o;
  };
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json o;
    o["method"] = to_string(row.method);
    o["condition"] = row.condition;
    o["rmse"] = stat(row.rmse);
    o["r"] = stat(row.r);
    j["rows"].push_back(o);
  }
  j["buckets"] = nlohmann::ordered_json::array();
  for (const auto& row : report.buckets) {
    nlohmann::ordered_json o;
    o["method"] = to_string(row.method);
    o["lower"] = row.lower;
    o["upper"] = row.upper;
    o["rmse"] = stat(row.rmse);
    o["r"] = stat(row.r);
    j["buckets"].push_back(o);
  }
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method,condition,rmse_mean,rmse_std,r_mean,r_std,count\n";
  for (const auto& row : report.rows) {
    os << to_string(row.method) << ',' << row.condition << ',' << fmt(row.rmse.mean) << ',' << fmt(row.rmse.std)
       << ',' << fmt(row.r.mean) << ',' << fmt(row.r.std) << ',' << row.rmse.count << '\n';
  }
  return os.str();
}

std::string buckets_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method,lower,upper,rmse_mean,rmse_std,r_mean,r_std,count\n";
  for (const auto& row : report.buckets) {
    os << to_string(row.method) << ',' << fmt(row.lower) << ',' << fmt(row.upper) << ',' << fmt(row.rmse.mean)
       << ',' << fmt(row.rmse.std) << ',' << fmt(row.r.mean) << ',' << fmt(row.r.std) << ',' << row.rmse.count
       << '\n';
  }
  return os.str();
}

std::string records_csv(std::span<const EvalRecord> records) {
  std::ostringstream os;
  os << "id,method,condition,occlusion_fraction,rmse,r,gaps,tags\n";
  for (const auto& r : records) {
    std::string tags;
    for (const auto& t : r.tags) tags += (tags.empty() ? "" : ";") + t;
    os << r.id << ',' << to_string(r.method) << ',' << r.condition << ',' << fmt(r.occlusion_fraction) << ','
       << fmt(r.rmse) << ',' << fmt(r.r) << ',' << r.gaps << ',' << tags << '\n';
  }
  return os.str();
}

std::string timing_csv(std::span<const EvalRecord> records) {
  std::ostringstream os;
  os << "method,model_ms,curve_fit_ms,total_ms,count\n";
  for (Method m : kAllMethods) {
    std::vector<double> model, fit, total;
    bool any_fit = false;
    for (const auto& r : records) {
      if (r.method != m) continue;
      model.push_back(r.times.model_ms);
      fit.push_back(r.times.curve_fit_ms);
      total.push_back(r.times.total_ms);
      any_fit = any_fit || r.times.has_curve_fit;
    }
    if (model.empty()) continue;
    os << to_string(m) << ',' << fmt(summarize(model).mean) << ',' << (any_fit ? fmt(summarize(fit).mean) : "")
       << ',' << fmt(summarize(total).mean) << ',' << model.size() << '\n';
  }
  return os.str();
}

std::vector<EvalRecord> worst_records(std::span<const EvalRecord> records, double threshold) {
  std::vector<EvalRecord> out;
  for (const auto& r : records)
    if (r.rmse > threshold) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const EvalRecord& a, const EvalRecord& b) { return a.rmse > b.rmse; });
  return out;
}

std::vector<std::string> error_tags(const synth::SceneTraits& traits, double occlusion_fraction) {
  std::vector<std::string> tags;
  if (occlusion_fraction >= 0.45) tags.push_back("extremely_occluded");
  if (traits.min_radius < 1.5) tags.push_back("thin_branch");
  if (traits.max_bend_deg > 35.0) tags.push_back("sharp_bend");
  if (traits.merge_fraction >= 0.0 && (traits.merge_fraction < 0.4 || traits.merge_fraction > 0.8))
    tags.push_back("unusual_shape");
  if (tags.empty()) tags.push_back("other");
  return tags;
}

}  // namespace occbranch::metrics
