// Copyright (C) 2026 The sebox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "sebox/box_engine.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/policy_parser.hpp"
#include "support/fixtures.hpp"

namespace sebox {
namespace {

struct F1 {
  PolicySnapshot snap;
  DecompositionResult d;
  MetricsRow row;
};

F1 f1(const std::string& rules) {
  F1 out;
  out.snap = build_snapshot(testing::f1_files(rules), FileSetConfig{}, ParseOptions{true});
  out.d = decompose_snapshot(out.snap);
  out.row = snapshot_metrics(out.snap, out.d);
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

TEST(SnapshotMetrics, ThreeRuleSet) {
  auto r = f1(testing::kF1ThreeRules).row;
  EXPECT_EQ(r.num_allow_rules, 3u);
  EXPECT_EQ(r.num_boxes, 11u);
  EXPECT_EQ(r.allow_rule_boxes, 11u);
  EXPECT_DOUBLE_EQ(r.avg_boxes_per_rule(), 11.0 / 3.0);
  EXPECT_EQ(r.num_types, 5u);
  EXPECT_EQ(r.num_permissions, 7u);
  EXPECT_EQ(r.universe_boxes, 175u);
}

TEST(SnapshotMetrics, EmptySnapshotIsAllZeros) {
  auto snap = build_snapshot(std::vector<SourceFile>{}, FileSetConfig{}, ParseOptions{false});
  auto d = decompose_snapshot(snap);
  auto r = snapshot_metrics(snap, d);
  MetricsRow zero;
  EXPECT_EQ(r, zero);
  EXPECT_FALSE(r.avg_defined());
  EXPECT_EQ(r.avg_boxes_per_rule(), 0.0);
  EXPECT_EQ(r.coverage_ratio(), 0.0);
}

TEST(SnapshotMetrics, SubtractionAndCoverage) {
  auto r = f1(testing::kF1AllowNeverallow).row;
  EXPECT_EQ(r.num_boxes, 1u);
  EXPECT_EQ(r.covered_boxes, 2u);
  EXPECT_DOUBLE_EQ(r.coverage_ratio(), 2.0 / 175.0);
}

TEST(BprHistogram, Bins) {
  EXPECT_EQ(bpr_bin(0), 0u);
  EXPECT_EQ(bpr_bin(1), 1u);
  EXPECT_EQ(bpr_bin(2), 2u);
  EXPECT_EQ(bpr_bin(9), 2u);
  EXPECT_EQ(bpr_bin(10), 3u);
  EXPECT_EQ(bpr_bin(99999), 6u);
  EXPECT_EQ(bpr_bin(100000), 7u);
  EXPECT_EQ(bpr_bin(1ull << 40), 7u);
}

TEST(BprHistogram, Examples) {
  EXPECT_EQ(f1(testing::kF1ThreeRules).row.bpr_histogram, (BprHistogram{0, 0, 3}));
  EXPECT_EQ(f1("allow init zygote_tmpfs:dir search;").row.bpr_histogram,
            (BprHistogram{0, 1}));
  EXPECT_EQ(f1("").row.bpr_histogram, BprHistogram{});
}

TEST(RpbHistogram, Examples) {
  EXPECT_EQ(f1("allow appdomain zygote_tmpfs:file read;\n"
               "allow appdomain zygote_tmpfs:file read;\n")
                .row.rpb_histogram,
            (RpbHistogram{{2, 2}}));
  EXPECT_TRUE(f1(testing::kF1ThreeRules).row.rpb_histogram.empty());
  EXPECT_EQ(f1("allow init system_file:dir search;\n"
               "allow init file_type:dir search;\n"
               "allow domain system_file:dir { search read };\n")
                .row.rpb_histogram,
            (RpbHistogram{{3, 1}}));
}

TEST(Histograms, Conservation) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    testing::PolicyGenerator gen(seed);
    auto p = gen.policy();
    auto snap = build_snapshot(p.files(), FileSetConfig{}, ParseOptions{true});
    auto d = decompose_snapshot(snap);
    auto r = snapshot_metrics(snap, d);
    std::uint64_t bins = 0;
    for (auto b : r.bpr_histogram) bins += b;
    EXPECT_EQ(bins, r.num_allow_rules) << seed;
    std::uint64_t multi = 0;
    for (auto [_, n] : r.rpb_histogram) multi += n;
    EXPECT_LE(multi, r.num_boxes) << seed;
    EXPECT_GE(r.coverage_ratio(), 0.0);
    EXPECT_LE(r.coverage_ratio(), 1.0);
  }
}

MetricsRow rb(std::uint64_t rules, std::uint64_t boxes, std::int64_t index) {
  MetricsRow r;
  r.num_allow_rules = rules;
  r.num_boxes = boxes;
  r.commit_index = index;
  r.commit = "c" + std::to_string(index);
  return r;
}

TEST(DeltaSeries, Examples) {
  std::vector<MetricsRow> a{rb(3, 9, 0), rb(4, 15, 1)};
  auto s = delta_series(a);
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].delta_rules, 1);
  EXPECT_EQ(s.rows[0].delta_boxes, 6);
  EXPECT_EQ(s.rows[0].ratio, 6.0);
  EXPECT_EQ(s.mean_ratio, 6.0);

  std::vector<MetricsRow> b{rb(3, 9, 0), rb(3, 12, 1)};
  auto u = delta_series(b);
  EXPECT_FALSE(u.rows[0].ratio);
  EXPECT_FALSE(u.mean_ratio);

  std::vector<MetricsRow> c{rb(3, 9, 0), rb(2, 12, 1)};
  EXPECT_EQ(delta_series(c).rows[0].ratio, -3.0);
}

TEST(DeltaSeries, MeanOverDefinedAndNeverallowToggle) {
  std::vector<MetricsRow> rows{rb(3, 9, 0), rb(4, 15, 1), rb(4, 20, 2), rb(2, 12, 3)};
  auto s = delta_series(rows);
  EXPECT_DOUBLE_EQ(*s.mean_ratio, (6.0 + 4.0) / 2.0);
  rows[1].num_neverallow_rules = 1;
  rows[2].num_neverallow_rules = 1;
  rows[3].num_neverallow_rules = 1;
  auto n = delta_series(rows, true);
  EXPECT_EQ(n.rows[0].delta_rules, 2);
}

TEST(DeltaSeries, FewerThanTwoRows) {
  std::vector<MetricsRow> one{rb(1, 1, 0)};
  EXPECT_EQ(code_of([&] { delta_series(one); }), ErrorCode::FewerThanTwoRows);
  EXPECT_EQ(code_of([] { delta_series({}); }), ErrorCode::FewerThanTwoRows);
}

TEST(DeltaSeries, ReversalNegates) {
  std::mt19937_64 rng(5);
  std::vector<MetricsRow> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(rb(rng() % 50, rng() % 500, i));
  auto fwd = delta_series(rows);
  std::vector<MetricsRow> rev(rows.rbegin(), rows.rend());
  auto back = delta_series(rev);
  for (std::size_t i = 0; i < fwd.rows.size(); ++i) {
    const auto& f = fwd.rows[i];
    const auto& b = back.rows[fwd.rows.size() - 1 - i];
    EXPECT_EQ(f.delta_rules, -b.delta_rules);
    EXPECT_EQ(f.delta_boxes, -b.delta_boxes);
  }
}

TEST(TypeAge, Examples) {
  std::vector<CommitTokens> h{{0, {"old"}, {}}, {3, {"busy"}, {}}, {40, {"busy"}, {}}};
  auto r = type_age_cdf(h, 99, Position::Subject, {"old"});
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].age, 99);
  auto b = type_age_cdf(h, 50, Position::Subject, {"busy"});
  EXPECT_EQ(b.records[0].last_changed_index, 40);
  EXPECT_EQ(b.records[0].age, 10);
}

TEST(TypeAge, PositionsAreSeparate) {
  std::vector<CommitTokens> h{{0, {"a"}, {"a"}}, {7, {"a"}, {}}};
  EXPECT_EQ(type_age_cdf(h, 10, Position::Subject, {"a"}).records[0].age, 3);
  EXPECT_EQ(type_age_cdf(h, 10, Position::Target, {"a"}).records[0].age, 10);
}

TEST(TypeAge, CdfMonotoneEndsAtOne) {
  std::mt19937_64 rng(9);
  std::vector<CommitTokens> h;
  std::set<std::string> alive;
  for (int i = 0; i < 30; ++i) alive.insert("t" + std::to_string(i));
  for (int c = 0; c < 100; ++c) {
    CommitTokens t{c, {}, {}};
    for (int k = 0; k < 3; ++k) t.subjects.insert("t" + std::to_string(rng() % 40));
    h.push_back(t);
  }
  auto r = type_age_cdf(h, 99, Position::Subject, alive);
  ASSERT_EQ(r.records.size(), alive.size());
  ASSERT_FALSE(r.cdf.empty());
  for (std::size_t i = 1; i < r.cdf.size(); ++i) {
    EXPECT_LT(r.cdf[i - 1].age, r.cdf[i].age);
    EXPECT_LE(r.cdf[i - 1].fraction, r.cdf[i].fraction);
  }
  EXPECT_DOUBLE_EQ(r.cdf.back().fraction, 1.0);
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.age, 0);
    EXPECT_LE(rec.age, 99);
  }
}

std::vector<SeriesPoint> exp_series(double a, double b, int n, double noise = 0,
                                    std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<SeriesPoint> out;
  for (int i = 0; i < n; ++i)
    out.push_back({double(i), a * std::exp(b * i) * (noise ? 1.0 + eps(rng) : 1.0)});
  return out;
}

TEST(FitExponential, Noiseless) {
  auto s = exp_series(2.0, 0.1, 51);
  auto f = fit_exponential(s, {});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_NEAR(f[0].b, 0.1, 1e-9);
  EXPECT_NEAR(f[0].ln_a, std::log(2.0), 1e-9);
  EXPECT_NEAR(f[0].rms_residual, 0.0, 1e-9);
  EXPECT_EQ(f[0].points, 51u);
  EXPECT_EQ(f[0].start_index, 0.0);
  EXPECT_EQ(f[0].end_index, 50.0);
}

TEST(FitExponential, BreakpointSplitsSegments) {
  auto s = exp_series(2.0, 0.1, 51);
  std::vector<double> bp{25};
  auto f = fit_exponential(s, bp);
  ASSERT_EQ(f.size(), 2u);
  for (const auto& seg : f) EXPECT_NEAR(seg.b, 0.1, 1e-9);
  EXPECT_EQ(f[0].end_index, 24.0);
  EXPECT_EQ(f[1].start_index, 25.0);
}

TEST(FitExponential, NoisyMatchesQrOracle) {
  auto s = exp_series(3.0, 0.02, 200, 0.01, 42);
  auto f = fit_exponential(s, {});
  Eigen::MatrixXd x(s.size(), 2);
  Eigen::VectorXd y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = s[i].index;
    y(i) = std::log(s[i].value);
  }
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  EXPECT_NEAR(f[0].ln_a, beta(0), 1e-9);
  EXPECT_NEAR(f[0].b, beta(1), 1e-9);
  EXPECT_NEAR(f[0].b, 0.02, 0.02 * 0.05);
}

TEST(FitExponential, ScaleInvariance) {
  auto s = exp_series(3.0, 0.02, 60, 0.05, 7);
  auto scaled = s;
  for (auto& p : scaled) p.value *= 17.0;
  auto a = fit_exponential(s, {});
  auto b = fit_exponential(scaled, {});
  EXPECT_NEAR(b[0].b, a[0].b, 1e-9);
  EXPECT_NEAR(b[0].ln_a - a[0].ln_a, std::log(17.0), 1e-9);
}

TEST(FitExponential, Errors) {
  auto s = exp_series(2.0, 0.1, 10);
  auto bad = s;
  bad[4].value = 0;
  EXPECT_EQ(code_of([&] { fit_exponential(bad, {}); }), ErrorCode::NonPositiveValue);
  std::vector<double> near_edge{2};
  EXPECT_EQ(code_of([&] { fit_exponential(s, near_edge); }), ErrorCode::SegmentTooSmall);
  std::vector<double> outside{20};
  EXPECT_EQ(code_of([&] { fit_exponential(s, outside); }), ErrorCode::InvalidBreakpoints);
  std::vector<double> unordered{6, 4};
  EXPECT_EQ(code_of([&] { fit_exponential(s, unordered); }), ErrorCode::InvalidBreakpoints);
  std::vector<SeriesPoint> two(s.begin(), s.begin() + 2);
  EXPECT_EQ(code_of([&] { fit_exponential(two, {}); }), ErrorCode::SegmentTooSmall);
}

TEST(KeywordFilter, MatchesOracleScan) {
  auto f = f1(testing::kF1ThreeRules);
  // Independent scan over the formatted dump.
  std::uint64_t boxes = 0;
  std::set<RuleId> rules;
  for (std::size_t i = 0; i < f.d.final_allow.size(); ++i) {
    auto b = f.d.decode(f.d.final_allow.keys()[i]);
    if (b.subject.find("zygote") == std::string::npos &&
        b.object.find("zygote") == std::string::npos)
      continue;
    ++boxes;
    for (auto r : f.d.final_allow.origin_at(i)) rules.insert(r);
  }
  std::vector<std::string> kw{"zygote"};
  auto got = keyword_filter_metrics(f.d, kw);
  EXPECT_EQ(got.boxes, boxes);
  EXPECT_EQ(got.rules, rules.size());
  EXPECT_EQ(got, (KeywordCounts{5, 2}));
}

TEST(KeywordFilter, NoMatchAndEmptyKeyword) {
  auto f = f1(testing::kF1ThreeRules);
  std::vector<std::string> none{"camera"};
  EXPECT_EQ(keyword_filter_metrics(f.d, none), (KeywordCounts{0, 0}));
  std::vector<std::string> empty{""};
  EXPECT_EQ(code_of([&] { keyword_filter_metrics(f.d, empty); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { keyword_filter_metrics(f.d, {}); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace sebox
