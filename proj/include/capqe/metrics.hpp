#pragma once

// Intrinsic (rank correlation, MSE) and extrinsic (ExtGood precision/recall
// under threshold filtering) evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capqe/error.hpp"

namespace capqe {

// Ranks 1..n; tied values share the mean of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) fail(ErrorKind::LengthMismatch, "spearman: vectors differ in length");
  if (y.size() < 2) fail(ErrorKind::LengthMismatch, "spearman: need at least 2 values");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(y) || constant(yhat)) fail(ErrorKind::ConstantVector, "spearman: undefined for a constant vector");
  const auto ry = average_ranks(y);
  const auto rh = average_ranks(yhat);
  return std::clamp(pearson(ry, rh), -1.0, 1.0);
}

inline double mean_squared_error(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    fail(ErrorKind::LengthMismatch, "mse: inputs must be non-empty and of equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (targets[i] - preds[i]) * (targets[i] - preds[i]);
  return s / static_cast<double>(preds.size());
}

struct EvalReport {
  std::optional<double> spearman;  // absent when a side is constant
  double mse = 0.0;
  std::size_t n = 0;
};

inline EvalReport evaluate_predictions(std::span<const double> targets, std::span<const double> preds) {
  EvalReport r;
  r.n = preds.size();
  r.mse = mean_squared_error(preds, targets);
  try {
    r.spearman = spearman(targets, preds);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ConstantVector) throw;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fine-grained annotations and ExtGood.

enum class Correctness { Incorrect = 0, PartiallyCorrect = 1, Correct = 2 };
enum class Helpfulness { NotHelpful = 0, SomewhatUseful = 1, Helpful = 2 };

struct RaterJudgment {
  Correctness correctness = Correctness::Incorrect;
  Helpfulness helpfulness = Helpfulness::NotHelpful;
};

inline constexpr std::size_t kFineGrainedRaters = 3;

struct FineGrainedAnnotation {
  std::string sample_id;
  std::array<RaterJudgment, kFineGrainedRaters> raters{};
};

// Majority "at least partially correct" and, independently, majority "at
// least somewhat useful".
inline bool ext_good(const FineGrainedAnnotation& a) {
  std::size_t correct = 0;
  std::size_t helpful = 0;
  for (const auto& r : a.raters) {
    if (r.correctness >= Correctness::PartiallyCorrect) ++correct;
    if (r.helpfulness >= Helpfulness::SomewhatUseful) ++helpful;
  }
  const std::size_t majority = kFineGrainedRaters / 2 + 1;
  return correct >= majority && helpful >= majority;
}

// ---------------------------------------------------------------------------
// Threshold filtering: a sample is served when its score is strictly above
// the threshold.

struct PRPoint {
  double threshold = 0.0;
  std::optional<double> precision;  // absent when nothing is served
  double recall = 0.0;
  std::size_t n_served = 0;

  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

struct LabeledScores {
  std::vector<double> scores;
  std::vector<bool> labels;
};

// Aligns two keyed maps; both must have exactly the same keys.
inline LabeledScores align_scores(const std::map<std::string, double>& scores,
                                  const std::map<std::string, bool>& labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::KeyMismatch, "score and label key sets differ in size");
  LabeledScores out;
  out.scores.reserve(scores.size());
  out.labels.reserve(scores.size());
  for (const auto& [key, s] : scores) {
    auto it = labels.find(key);
    if (it == labels.end()) fail(ErrorKind::KeyMismatch, "no label for sample '" + key + "'");
    out.scores.push_back(s);
    out.labels.push_back(it->second);
  }
  return out;
}

inline PRPoint pr_at_threshold(std::span<const double> scores, const std::vector<bool>& labels, double th) {
  if (scores.size() != labels.size()) fail(ErrorKind::KeyMismatch, "scores and labels differ in length");
  std::size_t served = 0, good_served = 0, good = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool is_served = scores[i] > th;
    served += is_served;
    good += labels[i];
    good_served += is_served && labels[i];
  }
  PRPoint p;
  p.threshold = th;
  p.n_served = served;
  if (served > 0) p.precision = static_cast<double>(good_served) / static_cast<double>(served);
  p.recall = good > 0 ? static_cast<double>(good_served) / static_cast<double>(good) : 0.0;
  return p;
}

inline PRPoint pr_at_threshold(const std::map<std::string, double>& scores, const std::map<std::string, bool>& labels,
                               double th) {
  const auto aligned = align_scores(scores, labels);
  return pr_at_threshold(aligned.scores, aligned.labels, th);
}

// One point per distinct score (decreasing), plus a sentinel just below the
// minimum that serves everything.
inline std::vector<PRPoint> pr_curve(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::KeyMismatch, "scores and labels differ in length");
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0) fail(ErrorKind::NoPositives, "pr_curve: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<PRPoint> points;
  std::size_t served = 0, good_served = 0;
  auto emit = [&](double th) {
    PRPoint p;
    p.threshold = th;
    p.n_served = served;
    if (served > 0) p.precision = static_cast<double>(good_served) / static_cast<double>(served);
    p.recall = static_cast<double>(good_served) / static_cast<double>(positives);
    points.push_back(p);
  };
  std::size_t i = 0;
  while (i < order.size()) {
    const double th = scores[order[i]];
    emit(th);  // everything strictly above th has already been counted
    while (i < order.size() && scores[order[i]] == th) {
      ++served;
      good_served += labels[order[i]];
      ++i;
    }
  }
  emit(std::nextafter(scores[order.back()], -std::numeric_limits<double>::infinity()));
  return points;
}

inline std::vector<PRPoint> pr_curve(const std::map<std::string, double>& scores,
                                     const std::map<std::string, bool>& labels) {
  const auto aligned = align_scores(scores, labels);
  return pr_curve(aligned.scores, aligned.labels);
}

// Trapezoidal area under precision(recall), anchored at recall 0 with the
// precision of the highest-threshold point that serves anything.
inline double auc(std::span<const PRPoint> points) {
  std::vector<const PRPoint*> defined;
  for (const auto& p : points) {
    if (p.precision) defined.push_back(&p);
  }
  if (defined.size() < 2) fail(ErrorKind::TooFewPoints, "auc: need at least 2 points with defined precision");
  const auto* top = *std::max_element(defined.begin(), defined.end(),
                                      [](const PRPoint* a, const PRPoint* b) { return a->threshold < b->threshold; });
  std::stable_sort(defined.begin(), defined.end(), [](const PRPoint* a, const PRPoint* b) {
    if (a->recall != b->recall) return a->recall < b->recall;
    return a->threshold > b->threshold;
  });
  double area = 0.0;
  double prev_r = 0.0;
  double prev_p = *top->precision;
  for (const auto* p : defined) {
    area += (p->recall - prev_r) * 0.5 * (prev_p + *p->precision);
    prev_r = p->recall;
    prev_p = *p->precision;
  }
  return area;
}

// Largest-recall point whose precision reaches the target. Among points of
// equal recall the higher precision wins, then the higher threshold.
inline PRPoint report_operating_point(std::span<const PRPoint> curve, double target_precision) {
  if (curve.empty()) fail(ErrorKind::TooFewPoints, "operating point: empty curve");
  const PRPoint* best = nullptr;
  for (const auto& p : curve) {
    if (!p.precision || *p.precision < target_precision) continue;
    if (best == nullptr || p.recall > best->recall ||
        (p.recall == best->recall && (*p.precision > *best->precision ||
                                      (*p.precision == *best->precision && p.threshold > best->threshold)))) {
      best = &p;
    }
  }
  if (best == nullptr) {
    fail(ErrorKind::NoQualifyingPoint, "no curve point reaches precision " + std::to_string(target_precision));
  }
  return *best;
}

}  // namespace capqe
