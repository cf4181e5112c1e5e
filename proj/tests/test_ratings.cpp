#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "capqe/ratings.hpp"

using namespace capqe;

namespace {

std::vector<Rating> make(int yes, int no, int skip) {
  std::vector<Rating> r;
  r.insert(r.end(), yes, Rating::Yes);
  r.insert(r.end(), no, Rating::No);
  r.insert(r.end(), skip, Rating::Skip);
  return r;
}

QualityScore score_of(const AggregateResult& r) { return std::get<QualityScore>(r); }

}  // namespace

TEST(AggregateSample, AllYes) {
  const auto s = score_of(aggregate_sample(make(10, 0, 0)));
  EXPECT_EQ(s.value(), 1.0);
  EXPECT_EQ(s.n_valid(), 10);
}

TEST(AggregateSample, EightYesTwoNo) {
  const auto s = score_of(aggregate_sample(make(8, 2, 0)));
  EXPECT_EQ(s.eighths(), 6);
  EXPECT_EQ(s.value(), 0.75);
  EXPECT_EQ(s.n_valid(), 10);
}

TEST(AggregateSample, ThreeSkipsAreFiltered) {
  const auto r = aggregate_sample(make(4, 3, 3));
  ASSERT_TRUE(std::holds_alternative<Filtered>(r));
  EXPECT_EQ(std::get<Filtered>(r).skip_count, 3);
  EXPECT_EQ(std::get<Filtered>(r).reason, Filtered::Reason::TooManySkips);
}

TEST(AggregateSample, TwoSkipsAreKept) {
  const auto s = score_of(aggregate_sample(make(4, 4, 2)));
  EXPECT_EQ(s.n_valid(), 8);
  EXPECT_EQ(s.value(), 0.5);
}

TEST(AggregateSample, NineValidFiveYes) {
  const auto s = score_of(aggregate_sample(make(5, 4, 1)));
  EXPECT_EQ(s.eighths(), 4);  // 5/9 * 8 = 4.44
  EXPECT_EQ(s.value(), 0.5);
  EXPECT_EQ(s.n_valid(), 9);
}

TEST(AggregateSample, AllSkipWithPermissiveLimitIsEmptyAfterFilter) {
  const auto r = aggregate_sample(make(0, 0, 3), 5);
  ASSERT_TRUE(std::holds_alternative<Filtered>(r));
  EXPECT_EQ(std::get<Filtered>(r).reason, Filtered::Reason::EmptyAfterFilter);
}

TEST(AggregateSample, EmptyListIsRejected) {
  EXPECT_THROW(aggregate_sample({}), Error);
}

TEST(AggregateSample, LowCountIsFlaggedButScored) {
  const auto s = score_of(aggregate_sample(make(2, 1, 0)));
  EXPECT_TRUE(s.low_count());
  EXPECT_EQ(s.eighths(), 5);  // 2/3 * 8 = 5.33
}

TEST(AggregateSample, HalfCasesRoundAwayFromZero) {
  // 1/16 * 8 = 0.5 -> 1; 3/16 * 8 = 1.5 -> 2
  EXPECT_EQ(quantize_eighths(1, 16), 1);
  EXPECT_EQ(quantize_eighths(3, 16), 2);
  EXPECT_EQ(quantize_eighths(0, 16), 0);
}

TEST(AggregateSample, HalfIntegralMeansUnreachableForProtocolSizes) {
  for (int n = 8; n <= 10; ++n) {
    for (int k = 0; k <= n; ++k) {
      // 8k/n is half-integral iff 16k is an odd multiple of n.
      EXPECT_FALSE((16 * k) % n == 0 && ((16 * k) / n) % 2 == 1) << "n=" << n << " k=" << k;
      // Exact rational check against the closest eighth.
      const int q = quantize_eighths(k, n);
      EXPECT_LT(std::abs(8 * k - q * n) * 2, n) << "n=" << n << " k=" << k;
    }
  }
}

TEST(AggregateSample, PermutationInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Rating> r;
    const auto n = 1 + rng.below(20);
    for (std::uint64_t i = 0; i < n; ++i) r.push_back(static_cast<Rating>(rng.below(3)));
    const auto base = aggregate_sample(r);
    rng.shuffle(std::span<Rating>(r));
    EXPECT_EQ(aggregate_sample(r), base);
    if (const auto* q = std::get_if<QualityScore>(&base)) {
      const double scaled = q->value() * 8.0;
      EXPECT_EQ(scaled, std::floor(scaled));
    }
  }
}

TEST(AggregateDataset, FiltersAndKeepsOrder) {
  std::vector<RatingRecord> recs = {
      {"i1", "c1", std::nullopt, make(10, 0, 0)},
      {"i2", "c1", std::nullopt, make(5, 2, 3)},
      {"i3", "c9", "a dog", make(8, 2, 0)},
  };
  const auto out = aggregate_dataset(recs, 2);
  ASSERT_EQ(out.scores.size(), 2u);
  EXPECT_EQ(out.scores[0].image_id, "i1");
  EXPECT_EQ(out.scores[1].image_id, "i3");
  EXPECT_EQ(out.scores[1].score.value(), 0.75);
  ASSERT_EQ(out.filter_log.size(), 1u);
  EXPECT_EQ(out.filter_log[0].image_id, "i2");
  EXPECT_EQ(out.filter_log[0].skip_count, 3);
}

TEST(AggregateDataset, EmptyStream) {
  const auto out = aggregate_dataset({}, 2);
  EXPECT_TRUE(out.scores.empty());
  EXPECT_TRUE(out.filter_log.empty());
}

TEST(AggregateDataset, DuplicateKeyNamesTheKey) {
  std::vector<RatingRecord> recs = {
      {"i1", "c1", std::nullopt, make(10, 0, 0)},
      {"i1", "c1", std::nullopt, make(1, 9, 0)},
  };
  try {
    aggregate_dataset(recs, 2);
    FAIL() << "expected DuplicateKey";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateKey);
    EXPECT_NE(std::string(e.what()).find("i1"), std::string::npos);
  }
}

TEST(StabilityReport, IdenticalMaps) {
  std::map<std::string, QualityScore> a = {{"x", {3, 10}}, {"y", {8, 10}}, {"z", {0, 9}}};
  const auto r = stability_report(a, a);
  EXPECT_EQ(r.n_pairs, 3u);
  EXPECT_EQ(r.mean_diff, 0.0);
  EXPECT_EQ(r.std_diff, 0.0);
  EXPECT_EQ(r.frac_within_quarter, 1.0);
}

TEST(StabilityReport, SinglePair) {
  std::map<std::string, QualityScore> a = {{"k", {8, 10}}};
  std::map<std::string, QualityScore> b = {{"k", {4, 10}}};
  const auto r = stability_report(a, b);
  EXPECT_EQ(r.mean_diff, 0.5);
  EXPECT_EQ(r.std_diff, 0.0);
  EXPECT_EQ(r.frac_within_quarter, 0.0);
}

TEST(StabilityReport, QuarterBoundaryIsInclusive) {
  std::map<std::string, QualityScore> a = {{"k", {6, 10}}, {"j", {5, 10}}};
  std::map<std::string, QualityScore> b = {{"k", {4, 10}}, {"j", {2, 10}}};
  EXPECT_EQ(stability_report(a, b).frac_within_quarter, 0.5);
}

TEST(StabilityReport, OnlySharedKeysCompared) {
  std::map<std::string, QualityScore> a = {{"k", {8, 10}}, {"only-a", {0, 10}}};
  std::map<std::string, QualityScore> b = {{"k", {8, 10}}, {"only-b", {8, 10}}};
  EXPECT_EQ(stability_report(a, b).n_pairs, 1u);
}

TEST(StabilityReport, NoOverlap) {
  std::map<std::string, QualityScore> a = {{"a", {8, 10}}};
  std::map<std::string, QualityScore> b = {{"b", {8, 10}}};
  try {
    stability_report(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoOverlap);
  }
}

TEST(StabilityReport, MonteCarloWithinBinomialBound) {
  Rng rng(2024);
  std::map<int, QualityScore> a, b;
  for (int k = 0; k < 509; ++k) {
    const double p = rng.uniform();
    a[k] = std::get<QualityScore>(aggregate_sample(simulate_rater_process(p, 10, 0.0, rng.next_u64())));
    b[k] = std::get<QualityScore>(aggregate_sample(simulate_rater_process(p, 10, 0.0, rng.next_u64())));
  }
  const auto r = stability_report(a, b);
  EXPECT_EQ(r.n_pairs, 509u);
  EXPECT_LT(std::abs(r.mean_diff), 0.03);
  EXPECT_LE(r.std_diff, std::sqrt(2 * 0.25 / 10) + 0.01);
}

TEST(SimulateRaters, Degenerate) {
  EXPECT_EQ(simulate_rater_process(1.0, 10, 0.0, 1), std::vector<Rating>(10, Rating::Yes));
  EXPECT_EQ(simulate_rater_process(0.0, 10, 0.0, 1), std::vector<Rating>(10, Rating::No));
}

TEST(SimulateRaters, DeterministicGivenSeed) {
  EXPECT_EQ(simulate_rater_process(0.4, 50, 0.1, 77), simulate_rater_process(0.4, 50, 0.1, 77));
  EXPECT_NE(simulate_rater_process(0.4, 50, 0.1, 77), simulate_rater_process(0.4, 50, 0.1, 78));
}

TEST(SimulateRaters, LawOfLargeNumbers) {
  const auto r = simulate_rater_process(0.5, 10000, 0.0, 12345);
  const auto yes = std::count(r.begin(), r.end(), Rating::Yes);
  EXPECT_NEAR(static_cast<double>(yes) / 10000.0, 0.5, 0.02);
}

TEST(SimulateRaters, RejectsBadParameters) {
  EXPECT_THROW(simulate_rater_process(1.5, 10, 0.0, 1), Error);
  EXPECT_THROW(simulate_rater_process(0.5, 10, 1.0, 1), Error);
}
