#pragma once

// Crowdsourced rating aggregation: binary YES/NO judgments (with SKIP) are
// collapsed into a quality score quantized to eighths.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "capqe/error.hpp"
#include "capqe/rng.hpp"

namespace capqe {

enum class Rating { Yes, No, Skip };

inline std::string_view to_string(Rating r) {
  switch (r) {
    case Rating::Yes: return "YES";
    case Rating::No: return "NO";
    case Rating::Skip: return "SKIP";
  }
  return "?";
}

inline std::optional<Rating> parse_rating(std::string_view s) {
  if (s == "YES") return Rating::Yes;
  if (s == "NO") return Rating::No;
  if (s == "SKIP") return Rating::Skip;
  return std::nullopt;
}

struct RatingRecord {
  std::string image_id;
  std::string caption_id;
  std::optional<std::string> caption_text;
  std::vector<Rating> ratings;
};

inline constexpr int kScoreDenominator = 8;
inline constexpr int kDefaultMaxSkips = 2;
inline constexpr int kProtocolMinValid = 8;

// Quality score held as an exact count of eighths.
class QualityScore {
 public:
  constexpr QualityScore() = default;
  constexpr QualityScore(int eighths, int n_valid) : eighths_(eighths), n_valid_(n_valid) {
    if (eighths < 0 || eighths > kScoreDenominator) {
      fail(ErrorKind::InvalidArgument, "quality score numerator out of range");
    }
  }

  static QualityScore from_value(double v, int n_valid = 0) {
    const double scaled = v * kScoreDenominator;
    if (!std::isfinite(v) || scaled != std::round(scaled) || v < 0.0 || v > 1.0) {
      fail(ErrorKind::InvalidTarget, "score " + std::to_string(v) + " is not a multiple of 1/8 in [0,1]");
    }
    return QualityScore(static_cast<int>(scaled), n_valid);
  }

  constexpr int eighths() const { return eighths_; }
  constexpr int n_valid() const { return n_valid_; }
  constexpr double value() const { return static_cast<double>(eighths_) / kScoreDenominator; }
  // Fewer valid ratings than the collection protocol guarantees.
  constexpr bool low_count() const { return n_valid_ < kProtocolMinValid; }

  friend constexpr bool operator==(const QualityScore&, const QualityScore&) = default;

 private:
  int eighths_ = 0;
  int n_valid_ = 0;
};

struct Filtered {
  enum class Reason { TooManySkips, EmptyAfterFilter };
  Reason reason = Reason::TooManySkips;
  int skip_count = 0;

  friend bool operator==(const Filtered&, const Filtered&) = default;
};

inline std::string_view to_string(Filtered::Reason r) {
  return r == Filtered::Reason::TooManySkips ? "TooManySkips" : "EmptyAfterFilter";
}

using AggregateResult = std::variant<QualityScore, Filtered>;

// round(k/n * 8) with halves rounded away from zero, in integers.
constexpr int quantize_eighths(int yes, int n_valid) {
  return (2 * kScoreDenominator * yes + n_valid) / (2 * n_valid);
}

inline AggregateResult aggregate_sample(const std::vector<Rating>& ratings, int max_skips = kDefaultMaxSkips) {
  if (ratings.empty()) fail(ErrorKind::InvalidArgument, "ratings list is empty");
  int skips = 0;
  int yes = 0;
  for (Rating r : ratings) {
    if (r == Rating::Skip) ++skips;
    if (r == Rating::Yes) ++yes;
  }
  if (skips > max_skips) return Filtered{Filtered::Reason::TooManySkips, skips};
  const int n_valid = static_cast<int>(ratings.size()) - skips;
  if (n_valid == 0) return Filtered{Filtered::Reason::EmptyAfterFilter, skips};
  return QualityScore(quantize_eighths(yes, n_valid), n_valid);
}

struct ScoredRecord {
  std::string image_id;
  std::string caption_id;
  QualityScore score;
};

struct FilterLogEntry {
  std::string image_id;
  std::string caption_id;
  int skip_count = 0;
  Filtered::Reason reason = Filtered::Reason::TooManySkips;
};

struct AggregateOutput {
  std::vector<ScoredRecord> scores;
  std::vector<FilterLogEntry> filter_log;
  // Keys aggregated from fewer than kProtocolMinValid ratings.
  std::vector<std::pair<std::string, std::string>> low_count;
};

inline AggregateOutput aggregate_dataset(const std::vector<RatingRecord>& records, int max_skips = kDefaultMaxSkips) {
  AggregateOutput out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& rec : records) {
    if (!seen.emplace(rec.image_id, rec.caption_id).second) {
      fail(ErrorKind::DuplicateKey, "duplicate (image_id, caption_id) = (" + rec.image_id + ", " + rec.caption_id + ")");
    }
    const auto result = aggregate_sample(rec.ratings, max_skips);
    if (const auto* f = std::get_if<Filtered>(&result)) {
      out.filter_log.push_back({rec.image_id, rec.caption_id, f->skip_count, f->reason});
      continue;
    }
    const auto& score = std::get<QualityScore>(result);
    if (score.low_count()) out.low_count.emplace_back(rec.image_id, rec.caption_id);
    out.scores.push_back({rec.image_id, rec.caption_id, score});
  }
  return out;
}

struct StabilityReport {
  std::size_t n_pairs = 0;
  double mean_diff = 0.0;
  double std_diff = 0.0;
  double frac_within_quarter = 0.0;
};

// Compares two independent aggregations of the same items over their shared
// keys. Differences are exact multiples of 1/8, so the quarter cut is exact.
template <typename Key>
StabilityReport stability_report(const std::map<Key, QualityScore>& a, const std::map<Key, QualityScore>& b) {
  std::vector<int> diffs;
  for (const auto& [key, sa] : a) {
    auto it = b.find(key);
    if (it != b.end()) diffs.push_back(sa.eighths() - it->second.eighths());
  }
  if (diffs.empty()) fail(ErrorKind::NoOverlap, "score maps share no keys");

  const double n = static_cast<double>(diffs.size());
  double sum = 0.0;
  std::size_t within = 0;
  for (int d : diffs) {
    sum += d;
    if (std::abs(d) <= 2) ++within;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (int d : diffs) ss += (d - mean) * (d - mean);

  StabilityReport r;
  r.n_pairs = diffs.size();
  r.mean_diff = mean / kScoreDenominator;
  r.std_diff = std::sqrt(ss / n) / kScoreDenominator;
  r.frac_within_quarter = static_cast<double>(within) / n;
  return r;
}

// Draws n independent ratings: SKIP with skip_prob, otherwise YES with p_true.
inline std::vector<Rating> simulate_rater_process(double p_true, int n_raters, double skip_prob, Rng& rng) {
  if (!(p_true >= 0.0 && p_true <= 1.0) || !(skip_prob >= 0.0 && skip_prob < 1.0) || n_raters < 0) {
    fail(ErrorKind::InvalidArgument, "simulate_rater_process: parameters out of range");
  }
  std::vector<Rating> out;
  out.reserve(static_cast<std::size_t>(n_raters));
  for (int i = 0; i < n_raters; ++i) {
    if (rng.bernoulli(skip_prob)) {
      out.push_back(Rating::Skip);
    } else {
      out.push_back(rng.bernoulli(p_true) ? Rating::Yes : Rating::No);
    }
  }
  return out;
}

inline std::vector<Rating> simulate_rater_process(double p_true, int n_raters, double skip_prob, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_rater_process(p_true, n_raters, skip_prob, rng);
}

}  // namespace capqe
