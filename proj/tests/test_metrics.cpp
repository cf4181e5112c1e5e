#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "capqe/formats.hpp"
#include "capqe/metrics.hpp"
#include "capqe/rng.hpp"
#include "oracles.hpp"

using namespace capqe;

namespace {

std::vector<double> tied_values(Rng& rng, std::size_t n, std::uint64_t levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
  return v;
}

bool constant(const std::vector<double>& v) {
  for (double x : v) {
    if (x != v[0]) return false;
  }
  return true;
}

FineGrainedAnnotation annot(std::array<int, 3> c, std::array<int, 3> h) {
  FineGrainedAnnotation a;
  a.sample_id = "s";
  for (int r = 0; r < 3; ++r) a.raters[r] = {static_cast<Correctness>(c[r]), static_cast<Helpfulness>(h[r])};
  return a;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(AverageRanks, Examples) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 30}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(average_ranks(std::vector<double>{5, 5}), (std::vector<double>{1.5, 1.5}));
  EXPECT_EQ(average_ranks(std::vector<double>{3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(AverageRanks, MatchesCountingOracle) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto v = tied_values(rng, 1 + rng.below(30), 1 + rng.below(6));
    EXPECT_EQ(average_ranks(v), oracle::counting_ranks(v));
  }
}

TEST(Spearman, IdentityAndReversal) {
  const std::vector<double> y{0.1, 0.7, 0.3, 0.9, 0.5};
  std::vector<double> rev{0.9, 0.1, 0.7, -1.0, 0.3};
  EXPECT_DOUBLE_EQ(spearman(y, y), 1.0);
  EXPECT_DOUBLE_EQ(spearman(y, rev), -1.0);
}

TEST(Spearman, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2}, c{4, 4, 4};
  EXPECT_EQ(kind_of([&] { spearman(a, b); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([&] { spearman(a, c); }), ErrorKind::ConstantVector);
  EXPECT_EQ(kind_of([&] { spearman(c, a); }), ErrorKind::ConstantVector);
}

TEST(Spearman, MatchesOracleOnTiedInstances) {
  Rng rng(2718);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 2 + rng.below(40);
    const auto y = tied_values(rng, n, 2 + rng.below(8));
    const auto yh = tied_values(rng, n, 2 + rng.below(8));
    if (constant(y) || constant(yh)) continue;
    EXPECT_NEAR(spearman(y, yh), oracle::spearman(y, yh), 1e-12);
    ++checked;
  }
}

TEST(Spearman, InvariantUnderIncreasingTransformsAndSymmetric) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + rng.below(30);
    const auto y = tied_values(rng, n, 9);
    const auto yh = tied_values(rng, n, 5);
    if (constant(y) || constant(yh)) continue;
    std::vector<double> ey(n), ay(n);
    for (std::size_t i = 0; i < n; ++i) {
      ey[i] = std::exp(y[i]);
      ay[i] = 3.0 * yh[i] + 7.0;
    }
    const double base = spearman(y, yh);
    EXPECT_NEAR(spearman(ey, yh), base, 1e-12);
    EXPECT_NEAR(spearman(y, ay), base, 1e-12);
    EXPECT_NEAR(spearman(yh, y), base, 1e-12);
  }
}

TEST(EvaluatePredictions, PerfectAndConstant) {
  const std::vector<double> t{0.125, 0.5, 0.875, 1.0};
  const auto exact = evaluate_predictions(t, t);
  EXPECT_EQ(exact.spearman, 1.0);
  EXPECT_EQ(exact.mse, 0.0);
  EXPECT_EQ(exact.n, 4u);

  const std::vector<double> half(4, 0.5);
  const auto flat = evaluate_predictions(t, half);
  EXPECT_FALSE(flat.spearman.has_value());
  EXPECT_NEAR(flat.mse, (0.375 * 0.375 + 0 + 0.375 * 0.375 + 0.25) / 4.0, 1e-15);
}

TEST(ExtGood, Examples) {
  EXPECT_TRUE(ext_good(annot({2, 2, 2}, {2, 2, 2})));
  EXPECT_FALSE(ext_good(annot({0, 0, 2}, {2, 2, 2})));
  EXPECT_TRUE(ext_good(annot({1, 2, 0}, {1, 0, 2})));
  EXPECT_FALSE(ext_good(annot({2, 2, 2}, {0, 0, 1})));
}

TEST(ExtGood, MajoritiesAreIndependentPerDimension) {
  // Raters 0 and 1 back correctness, raters 1 and 2 back helpfulness.
  EXPECT_TRUE(ext_good(annot({1, 1, 0}, {0, 1, 1})));
}

TEST(ExtGood, MonotoneUnderSingleUpgrades) {
  for (int code = 0; code < 729; ++code) {
    std::array<int, 3> c{}, h{};
    int x = code;
    for (int r = 0; r < 3; ++r) {
      c[r] = x % 3;
      x /= 3;
    }
    for (int r = 0; r < 3; ++r) {
      h[r] = x % 3;
      x /= 3;
    }
    if (!ext_good(annot(c, h))) continue;
    for (int r = 0; r < 3; ++r) {
      if (c[r] < 2) {
        auto up = c;
        ++up[r];
        EXPECT_TRUE(ext_good(annot(up, h)));
      }
      if (h[r] < 2) {
        auto up = h;
        ++up[r];
        EXPECT_TRUE(ext_good(annot(c, up)));
      }
    }
  }
}

TEST(PrAtThreshold, ServeEverythingAndNothing) {
  const std::vector<double> s{0.2, 0.4, 0.6, 0.8};
  const std::vector<bool> l{true, false, true, false};
  const auto all = pr_at_threshold(s, l, 0.0);
  EXPECT_EQ(all.recall, 1.0);
  EXPECT_EQ(all.precision, 0.5);
  EXPECT_EQ(all.n_served, 4u);
  const auto none = pr_at_threshold(s, l, 0.8);
  EXPECT_EQ(none.n_served, 0u);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_FALSE(none.precision.has_value());
}

TEST(PrAtThreshold, SixSampleHandCase) {
  std::map<std::string, double> scores{{"a", 0.9}, {"b", 0.8}, {"c", 0.8}, {"d", 0.5}, {"e", 0.3}, {"f", 0.1}};
  std::map<std::string, bool> labels{{"a", true}, {"b", false}, {"c", true}, {"d", true}, {"e", false}, {"f", false}};
  // th = 0.5 serves a, b, c: two of three good, two of three positives.
  const auto p = pr_at_threshold(scores, labels, 0.5);
  EXPECT_EQ(p.n_served, 3u);
  EXPECT_EQ(p.precision, 2.0 / 3.0);
  EXPECT_EQ(p.recall, 2.0 / 3.0);
  const auto aligned = align_scores(scores, labels);
  for (double th : {-1.0, 0.1, 0.3, 0.5, 0.8, 0.85, 0.9}) {
    EXPECT_EQ(pr_at_threshold(scores, labels, th), oracle::pr_point(aligned.scores, aligned.labels, th)) << th;
  }
}

TEST(PrAtThreshold, KeyMismatch) {
  std::map<std::string, double> scores{{"a", 0.9}, {"b", 0.1}};
  std::map<std::string, bool> labels{{"a", true}, {"c", false}};
  EXPECT_EQ(kind_of([&] { pr_at_threshold(scores, labels, 0.5); }), ErrorKind::KeyMismatch);
  labels.erase("c");
  EXPECT_EQ(kind_of([&] { pr_at_threshold(scores, labels, 0.5); }), ErrorKind::KeyMismatch);
}

TEST(PrCurve, TwoDistinctScoresGiveThreePoints) {
  const std::vector<double> s{0.3, 0.7, 0.7, 0.3};
  const std::vector<bool> l{true, true, false, false};
  const auto c = pr_curve(s, l);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].threshold, 0.7);
  EXPECT_EQ(c[1].threshold, 0.3);
  EXPECT_LT(c[2].threshold, 0.3);
  EXPECT_EQ(c[2].n_served, 4u);
}

TEST(PrCurve, AllPositive) {
  const std::vector<double> s{0.1, 0.5, 0.9};
  const std::vector<bool> l{true, true, true};
  for (const auto& p : pr_curve(s, l)) {
    if (p.precision) EXPECT_EQ(*p.precision, 1.0);
  }
}

TEST(PrCurve, NoPositives) {
  const std::vector<double> s{0.1, 0.5};
  const std::vector<bool> l{false, false};
  EXPECT_EQ(kind_of([&] { pr_curve(s, l); }), ErrorKind::NoPositives);
}

TEST(PrCurve, MatchesBruteForceSweepUpToTwentySamples) {
  Rng rng(99);
  int checked = 0;
  while (checked < 2000) {
    const std::size_t n = 1 + rng.below(20);
    const auto s = tied_values(rng, n, 1 + rng.below(10));
    std::vector<bool> l(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng.bernoulli(0.4);
      any = any || l[i];
    }
    if (!any) continue;
    const auto curve = pr_curve(s, l);
    EXPECT_EQ(curve, oracle::pr_sweep(s, l));
    for (const auto& p : curve) EXPECT_EQ(p, pr_at_threshold(s, l, p.threshold));
    for (std::size_t i = 1; i < curve.size(); ++i) {
      EXPECT_GE(curve[i].recall, curve[i - 1].recall);
      EXPECT_GE(curve[i].n_served, curve[i - 1].n_served);
    }
    ++checked;
  }
}

TEST(Auc, HandCases) {
  std::vector<PRPoint> unit{{0.9, 1.0, 0.0, 1}, {0.5, 1.0, 1.0, 4}};
  EXPECT_NEAR(auc(unit), 1.0, 1e-12);
  std::vector<PRPoint> rect{{0.9, 0.3, 0.25, 1}, {0.5, 0.3, 0.5, 2}, {0.1, 0.3, 1.0, 9}};
  EXPECT_NEAR(auc(rect), 0.3, 1e-12);
  std::vector<PRPoint> hand{{0.8, 1.0, 0.5, 1}, {0.2, 0.5, 1.0, 4}};
  EXPECT_NEAR(auc(hand), 0.875, 1e-12);
}

TEST(Auc, IgnoresUndefinedPointsAndNeedsTwo) {
  std::vector<PRPoint> pts{{0.95, std::nullopt, 0.0, 0}, {0.8, 1.0, 0.5, 1}, {0.2, 0.5, 1.0, 4}};
  EXPECT_NEAR(auc(pts), 0.875, 1e-12);
  std::vector<PRPoint> one{{0.95, std::nullopt, 0.0, 0}, {0.8, 1.0, 0.5, 1}};
  EXPECT_EQ(kind_of([&] { auc(one); }), ErrorKind::TooFewPoints);
}

TEST(Auc, WithinUnitIntervalOnRandomCurves) {
  Rng rng(4);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(30);
    const auto s = tied_values(rng, n, 12);
    std::vector<bool> l(n);
    l[0] = true;
    for (std::size_t i = 1; i < n; ++i) l[i] = rng.bernoulli(0.5);
    const auto curve = pr_curve(s, l);
    std::size_t defined = 0;
    for (const auto& p : curve) defined += p.precision.has_value();
    if (defined < 2) continue;
    const double a = auc(curve);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(OperatingPoint, AllQualifyPicksFullRecall) {
  const std::vector<double> s{0.1, 0.5, 0.9};
  const std::vector<bool> l{true, true, true};
  const auto curve = pr_curve(s, l);
  EXPECT_EQ(report_operating_point(curve, 0.8).recall, 1.0);
}

TEST(OperatingPoint, NoneQualify) {
  std::vector<PRPoint> curve{{0.9, 0.5, 0.5, 2}, {0.1, 0.4, 1.0, 5}};
  EXPECT_EQ(kind_of([&] { report_operating_point(curve, 0.8); }), ErrorKind::NoQualifyingPoint);
  EXPECT_EQ(kind_of([&] { report_operating_point({}, 0.8); }), ErrorKind::TooFewPoints);
}

TEST(OperatingPoint, SixPointHandCurve) {
  std::vector<PRPoint> curve{
      {0.95, std::nullopt, 0.0, 0}, {0.9, 1.0, 0.2, 2},   {0.8, 0.9, 0.45, 5},
      {0.7, 0.8, 0.6, 8},           {0.6, 0.7, 0.7, 10}, {0.5, 0.6, 1.0, 17},
  };
  const auto p = report_operating_point(curve, 0.8);
  EXPECT_EQ(p.threshold, 0.7);
  EXPECT_EQ(p.recall, 0.6);
  EXPECT_EQ(p, *oracle::operating_point(curve, 0.8));
}

TEST(OperatingPoint, MatchesLinearScanOnRandomCurves) {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng.below(20);
    const auto s = tied_values(rng, n, 1 + rng.below(10));
    std::vector<bool> l(n);
    l[0] = true;
    for (std::size_t i = 1; i < n; ++i) l[i] = rng.bernoulli(0.6);
    const auto curve = pr_curve(s, l);
    const double target = static_cast<double>(rng.below(11)) / 10.0;
    const auto expected = oracle::operating_point(curve, target);
    if (!expected) {
      EXPECT_EQ(kind_of([&] { report_operating_point(curve, target); }), ErrorKind::NoQualifyingPoint);
    } else {
      EXPECT_EQ(report_operating_point(curve, target), *expected);
    }
  }
}

TEST(Formats, CurveCsvRoundTrip) {
  const std::vector<double> s{0.123456789, 0.5, 0.5, 0.99};
  const std::vector<bool> l{true, false, true, false};
  const auto curve = pr_curve(s, l);
  EXPECT_EQ(parse_pr_curve_csv(pr_curve_to_csv(curve)), curve);
}

TEST(Formats, AnnotationRoundTripAndErrors) {
  auto a = annot({1, 2, 0}, {1, 0, 2});
  a.sample_id = "cap-7";
  const auto back = parse_annotations(annotation_to_jsonl(a) + "\n");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].sample_id, "cap-7");
  EXPECT_EQ(ext_good(back[0]), ext_good(a));
  try {
    parse_annotations("{\"sample_id\":\"x\",\"raters\":[{\"correctness\":3,\"helpfulness\":0}]}\n", "ann.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("ann.jsonl:1"), std::string::npos);
  }
}
