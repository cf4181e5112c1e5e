#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "capqe/error.hpp"

namespace capqe {

inline constexpr std::size_t kImageDim = 64;
inline constexpr std::size_t kLabelDim = 256;
inline constexpr std::size_t kSentenceDim = 512;
inline constexpr std::size_t kDefaultMaxLabels = 20;

// One (image, caption) instance as precomputed embeddings. Labels are in
// classifier-confidence order, so labels[r] has rank r.
struct Sample {
  std::string sample_id;
  std::string image_id;
  std::vector<float> image;
  std::vector<std::vector<float>> labels;
  std::vector<float> sentence;
  std::optional<float> target;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using SampleSet = std::vector<Sample>;

namespace detail {

inline void check_vector(const Sample& s, const std::vector<float>& v, std::size_t expected, const std::string& field) {
  if (v.size() != expected) {
    fail(ErrorKind::DimensionMismatch, "sample '" + s.sample_id + "' field " + field + ": expected " +
                                           std::to_string(expected) + ", got " + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      fail(ErrorKind::NonFiniteValue,
           "sample '" + s.sample_id + "' field " + field + "[" + std::to_string(i) + "] is not finite");
    }
  }
}

}  // namespace detail

inline void validate_target(const Sample& s) {
  if (!s.target) return;
  const float t = *s.target;
  const float scaled = t * 8.0f;
  if (!std::isfinite(t) || t < 0.0f || t > 1.0f || scaled != std::round(scaled)) {
    fail(ErrorKind::InvalidTarget, "sample '" + s.sample_id + "' target " + std::to_string(t) +
                                       " is not a multiple of 1/8 in [0,1]");
  }
}

inline void validate_sample(const Sample& s, std::size_t max_labels = kDefaultMaxLabels) {
  if (s.sample_id.empty()) fail(ErrorKind::MalformedRecord, "sample with empty sample_id");
  detail::check_vector(s, s.image, kImageDim, "image");
  if (s.labels.size() > max_labels) {
    fail(ErrorKind::DimensionMismatch, "sample '" + s.sample_id + "' has " + std::to_string(s.labels.size()) +
                                           " labels, more than the maximum " + std::to_string(max_labels));
  }
  for (std::size_t j = 0; j < s.labels.size(); ++j) {
    detail::check_vector(s, s.labels[j], kLabelDim, "labels[" + std::to_string(j) + "]");
  }
  detail::check_vector(s, s.sentence, kSentenceDim, "sentence");
  validate_target(s);
}

}  // namespace capqe
