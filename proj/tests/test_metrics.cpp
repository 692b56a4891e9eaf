#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "occbranch/error.hpp"
#include "occbranch/metrics.hpp"
#include "occbranch/rng.hpp"
#include "oracles.hpp"

using namespace occbranch;
using namespace occbranch::metrics;

namespace {

PositionTarget column(std::vector<double> xs, int width = 64) {
  PositionTarget t(1, width, static_cast<int>(xs.size()));
  for (int r = 0; r < t.height; ++r) t.set(0, r, xs[r]);
  return t;
}

EvalRecord record(Method m, std::string condition, double rmse, double r, double occ = 0.0) {
  EvalRecord e;
  e.id = condition + std::to_string(rmse);
  e.method = m;
  e.condition = std::move(condition);
  e.rmse = rmse;
  e.r = r;
  e.occlusion_fraction = occ;
  return e;
}

}  // namespace

TEST(Rmse, Examples) {
  const PositionTarget g = column({0, 0, 0});
  EXPECT_EQ(rmse(g, g), 0.0);
  EXPECT_NEAR(rmse(g, column({3, 4, 0})), std::sqrt(25.0 / 3.0), 1e-12);
  EXPECT_NEAR(rmse(g, column({3, 4, 0})), 2.8868, 1e-4);
  const PositionTarget base = column({1.5, 7, 30, 12.25});
  EXPECT_EQ(rmse(base, column({3.5, 9, 32, 14.25})), 2.0);
}

TEST(Rmse, ValidityAndErrors) {
  PositionTarget g(2, 64, 3), p(2, 64, 3);
  for (int b = 0; b < 2; ++b)
    for (int r = 0; r < 3; ++r) {
      g.set(b, r, 10);
      p.set(b, r, 10);
    }
  g.set_valid(1, 2, false);
  p.coord(0, 2) = 99;  // row 2 is not valid in gt, so it is not scored
  p.coord(0, 1) = 13;
  EXPECT_NEAR(rmse(g, p), std::sqrt(9.0 / 4.0), 1e-12);
  p.set_valid(0, 0, false);
  EXPECT_THROW(rmse(g, p), CoverageGap);
  EXPECT_THROW(rmse(g, PositionTarget(2, 64, 4)), ShapeError);
}

TEST(Rmse, SymmetricOnRandomVectors) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(16), b(16);
    for (auto& v : a) v = rng.uniform(0, 63);
    for (auto& v : b) v = rng.uniform(0, 63);
    EXPECT_DOUBLE_EQ(rmse(column(a), column(b)), rmse(column(b), column(a)));
  }
}

TEST(FillGaps, NearestRowTiesGoUp) {
  PositionTarget g = column({0, 0, 0, 0, 0, 0});
  PositionTarget p(1, 64, 6);
  p.set(0, 1, 5.0);
  p.set(0, 3, 9.0);
  const GapFill f = fill_gaps(g, p);
  EXPECT_EQ(f.gaps, 4);
  EXPECT_EQ(f.filled.coord(0, 0), 5.0);
  EXPECT_EQ(f.filled.coord(0, 2), 5.0);  // equidistant from rows 1 and 3
  EXPECT_EQ(f.filled.coord(0, 4), 9.0);
  EXPECT_EQ(f.filled.coord(0, 5), 9.0);
  EXPECT_EQ(f.filled.valid_count(), 6u);
  EXPECT_THROW(fill_gaps(g, PositionTarget(1, 64, 6)), CoverageGap);
  EXPECT_EQ(fill_gaps(g, g).gaps, 0);
}

TEST(Pearson, Examples) {
  const std::vector<double> g = {1, 4, 2, 8, 5.5};
  std::vector<double> affine, neg;
  for (double v : g) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
  }
  EXPECT_NEAR(pearson_r(g, g), 1.0, 1e-12);
  EXPECT_NEAR(pearson_r(g, affine), 1.0, 1e-12);
  EXPECT_NEAR(pearson_r(g, neg), -1.0, 1e-12);
  EXPECT_NEAR(pearson_r(column(g), column(affine)), 1.0, 1e-12);
  EXPECT_THROW(pearson_r(std::vector<double>{3, 3, 3}, g), Error);
  EXPECT_THROW(pearson_r(column({3, 3, 3}), column({1, 2, 3})), DegenerateVariance);
  EXPECT_THROW(pearson_r(column({1, 2, 3}), column({3, 3, 3})), DegenerateVariance);
  EXPECT_THROW(pearson_r(column({1}), column({2})), DegenerateVariance);
}

TEST(Pearson, AffineAndSignPropertiesOnRandomVectors) {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + static_cast<int>(rng.below(60));
    std::vector<double> g(n), p(n), ga(n), pa(n), pn(n);
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-50, 50);
    for (int k = 0; k < n; ++k) {
      g[k] = rng.uniform(0, 63);
      p[k] = g[k] + rng.normal(0, 8);
      ga[k] = a * g[k] + b;
      pa[k] = a * p[k] - b;
      pn[k] = -p[k];
    }
    const double r = pearson_r(g, p);
    EXPECT_NEAR(r, static_cast<double>(oracle::pearson(g, p)), 1e-9);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
    EXPECT_NEAR(pearson_r(ga, p), r, 1e-9);
    EXPECT_NEAR(pearson_r(g, pa), r, 1e-9);
    EXPECT_NEAR(pearson_r(g, pn), -r, 1e-9);
  }
}

TEST(Stratify, BucketsAndBoundaries) {
  std::vector<EvalRecord> all_zero = {record(Method::hob_cnn, "a", 1, 1), record(Method::hob_cnn, "a", 2, 1)};
  auto b = stratify_by_occlusion(all_zero);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].index, 0);
  EXPECT_EQ(b[0].lower, 0.0);
  EXPECT_DOUBLE_EQ(b[0].upper, 0.05);

  std::vector<EvalRecord> two = {record(Method::visible_cf, "a", 2, 1, 0.3), record(Method::visible_cf, "a", 4, 1, 0.31)};
  b = stratify_by_occlusion(two);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].index, 6);
  EXPECT_EQ(b[0].rmse.mean, 3.0);
  EXPECT_EQ(b[0].rmse.std, 1.0);

  b = stratify_by_occlusion(std::vector<EvalRecord>{record(Method::hob_cnn, "a", 1, 1, 0.05)});
  EXPECT_EQ(b[0].index, 1);
  b = stratify_by_occlusion(std::vector<EvalRecord>{record(Method::hob_cnn, "a", 1, 1, 0.15)});
  EXPECT_EQ(b[0].index, 3);
}

TEST(Stratify, PartitionsRecords) {
  Rng rng(5);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 500; ++i)
    recs.push_back(record(kAllMethods[i % 3], "c", rng.uniform(0, 5), rng.uniform(), rng.uniform(0, 0.7)));
  std::size_t total = 0;
  for (const auto& row : stratify_by_occlusion(recs)) {
    EXPECT_GT(row.rmse.count, 0u);
    EXPECT_GE(row.rmse.std, 0.0);
    total += row.rmse.count;
  }
  EXPECT_EQ(total, recs.size());
}

TEST(Aggregate, SingleRecord) {
  const std::vector<EvalRecord> one = {record(Method::whole_cf, "summer", 2.5, 0.9)};
  const EvalReport rep = aggregate_report(one, [](const EvalRecord& e) { return e.condition; });
  const ReportRow* row = rep.find(Method::whole_cf, kTotalCondition);
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->rmse.mean, 2.5);
  EXPECT_EQ(row->rmse.std, 0.0);
  EXPECT_EQ(rep.record_count, 1u);
}

TEST(Aggregate, TotalIsPooledNotMeanOfMeans) {
  // Conditions of unequal size: mean-of-means would give (1 + 2 + 6) / 3 = 3.
  const std::vector<EvalRecord> recs = {record(Method::hob_cnn, "winter", 1, 1), record(Method::hob_cnn, "autumn", 2, 1),
                                        record(Method::hob_cnn, "autumn", 2, 1), record(Method::hob_cnn, "summer", 6, 1)};
  const EvalReport rep = aggregate_report(recs, [](const EvalRecord& e) { return e.condition; },
                                          {"winter", "autumn", "summer"});
  const ReportRow* total = rep.find(Method::hob_cnn, kTotalCondition);
  EXPECT_DOUBLE_EQ(total->rmse.mean, 11.0 / 4.0);
  EXPECT_NE(total->rmse.mean, 3.0);
  EXPECT_EQ(rep.rows[0].condition, "winter");
  EXPECT_EQ(rep.rows[1].condition, "autumn");
  EXPECT_EQ(rep.rows[2].condition, "summer");
}

TEST(Aggregate, PooledMomentsAndTableShape) {
  Rng rng(9);
  std::vector<EvalRecord> recs;
  const std::vector<std::string> seasons = {"winter", "autumn", "summer"};
  for (Method m : kAllMethods)
    for (const auto& s : seasons)
      for (int i = 0; i < 40; ++i) recs.push_back(record(m, s, rng.uniform(0, 6), rng.uniform(0.5, 1)));
  const EvalReport rep = aggregate_report(recs, [](const EvalRecord& e) { return e.condition; }, seasons);
  EXPECT_EQ(rep.rows.size(), 12u);
  std::size_t counted = 0;
  for (const auto& [m, n] : rep.method_counts) counted += n;
  EXPECT_EQ(counted, recs.size());
  for (Method m : kAllMethods) {
    // Law of total variance over equal-sized groups.
    double mean = 0, var = 0;
    for (const auto& s : seasons) mean += rep.find(m, s)->rmse.mean / 3.0;
    for (const auto& s : seasons) {
      const Stat& st = rep.find(m, s)->rmse;
      var += (st.std * st.std + (st.mean - mean) * (st.mean - mean)) / 3.0;
    }
    const Stat& total = rep.find(m, kTotalCondition)->rmse;
    EXPECT_NEAR(total.mean, mean, 1e-12);
    EXPECT_NEAR(total.std, std::sqrt(var), 1e-12);
    EXPECT_EQ(total.count, 120u);
  }
  const auto json = nlohmann::json::parse(report_json(rep));
  EXPECT_EQ(json["std_convention"], "population");
  const std::string csv = report_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Timing, StagesAndNoop) {
  for (int i = 0; i < 20; ++i) EXPECT_LT(timed("noop", [] {}), 1.0);
  const auto t = timed("value", [] { return 42; });
  EXPECT_EQ(t.value, 42);
  EXPECT_GE(t.ms, 0.0);

  EvalRecord hob = record(Method::hob_cnn, "a", 1, 1);
  hob.times = {2.0, 0.0, false, 2.0};
  EvalRecord vis = record(Method::visible_cf, "a", 1, 1);
  vis.times = {5.0, 1.5, true, 6.5};
  const std::vector<EvalRecord> recs = {hob, vis};
  const std::string csv = timing_csv(recs);
  EXPECT_NE(csv.find("hob_cnn,2.000000,,2.000000,1"), std::string::npos) << csv;
  EXPECT_NE(csv.find("visible_cf,5.000000,1.500000,6.500000,1"), std::string::npos) << csv;
}

TEST(Worst, ThresholdAndOrder) {
  const std::vector<EvalRecord> recs = {record(Method::hob_cnn, "a", 4.0, 1), record(Method::hob_cnn, "b", 7, 1),
                                        record(Method::visible_cf, "c", 4.5, 1)};
  const auto w = worst_records(recs);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].rmse, 7.0);
  EXPECT_EQ(w[1].rmse, 4.5);
}

TEST(ErrorTags, Categories) {
  synth::SceneTraits plain{2.0, 10.0, 0.6};
  EXPECT_EQ(error_tags(plain, 0.1), (std::vector<std::string>{"other"}));
  EXPECT_EQ(error_tags(plain, 0.5), (std::vector<std::string>{"extremely_occluded"}));
  EXPECT_EQ(error_tags({1.0, 10.0, 0.6}, 0.1), (std::vector<std::string>{"thin_branch"}));
  EXPECT_EQ(error_tags({2.0, 50.0, 0.6}, 0.1), (std::vector<std::string>{"sharp_bend"}));
  EXPECT_EQ(error_tags({2.0, 10.0, 0.9}, 0.1), (std::vector<std::string>{"unusual_shape"}));
  EXPECT_EQ(error_tags({2.0, 10.0, -1.0}, 0.1), (std::vector<std::string>{"other"}));
}

TEST(Methods, Names) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(to_string(Method::whole_cf), "whole_cf");
  EXPECT_THROW(parse_method("hob"), ConfigError);
}
