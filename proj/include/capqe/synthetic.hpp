#pragma once

// Planted synthetic data for learnability checks and demos.
//
// An image carries a latent code a (r-dim, norm sqrt(r)) along an orthonormal
// image basis U; a caption carries a code c along an orthonormal sentence
// basis V, scaled by `gain`, plus isotropic noise. Ground-truth pairs share the
// code (c = a). QE targets are sigmoid of the planted bilinear form
// i^T (U^T V^T) s, rescaled by `sharpness`, and quantized to eighths.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "capqe/rng.hpp"
#include "capqe/sample.hpp"
#include "capqe/tensor.hpp"

namespace capqe {

struct PlantedTask {
  std::size_t rank = 16;
  double gain = 3.0;
  double sentence_noise = 1.0;
  double sharpness = 3.0;
  std::size_t n_labels = 2;
  Matrix image_basis;     // rank x 64, orthonormal rows
  Matrix sentence_basis;  // rank x 512, orthonormal rows
};

namespace detail {

inline Matrix random_orthonormal_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.view().row(r);
    for (auto& v : row) v = rng.normal();
    for (std::size_t q = 0; q < r; ++q) {
      const auto prev = m.view().row(q);
      const double proj = dot(row, prev);
      for (std::size_t c = 0; c < cols; ++c) row[c] -= proj * prev[c];
    }
    const double norm = std::sqrt(dot(row, row));
    for (auto& v : row) v /= norm;
  }
  return m;
}

inline std::vector<double> sphere_code(std::size_t r, Rng& rng) {
  std::vector<double> a(r);
  for (auto& v : a) v = rng.normal();
  const double scale = std::sqrt(static_cast<double>(r) / dot(a, a));
  for (auto& v : a) v *= scale;
  return a;
}

}  // namespace detail

inline PlantedTask make_planted_task(std::uint64_t seed, std::size_t rank = 16) {
  Rng rng(seed);
  PlantedTask t;
  t.rank = rank;
  t.image_basis = detail::random_orthonormal_rows(rank, kImageDim, rng);
  t.sentence_basis = detail::random_orthonormal_rows(rank, kSentenceDim, rng);
  return t;
}

// Image embedding whose component in the image basis is exactly `code`.
inline std::vector<float> planted_image(const PlantedTask& t, const std::vector<double>& code, Rng& rng) {
  std::vector<double> x(kImageDim);
  for (auto& v : x) v = rng.normal();
  std::vector<double> coef(t.rank);
  matvec(t.image_basis.view(), x, coef);
  for (std::size_t r = 0; r < t.rank; ++r) coef[r] = code[r] - coef[r];
  matvec_t_acc(t.image_basis.view(), coef, 1.0, x);
  return {x.begin(), x.end()};
}

inline std::vector<float> planted_sentence(const PlantedTask& t, const std::vector<double>& code, Rng& rng) {
  std::vector<double> s(kSentenceDim);
  for (auto& v : s) v = t.sentence_noise * rng.normal();
  matvec_t_acc(t.sentence_basis.view(), code, t.gain, s);
  return {s.begin(), s.end()};
}

// sharpness * (U i) . (V s) / (gain * rank)
inline double planted_logit(const PlantedTask& t, const Sample& s) {
  std::vector<double> img(s.image.begin(), s.image.end());
  std::vector<double> sen(s.sentence.begin(), s.sentence.end());
  std::vector<double> a(t.rank), c(t.rank);
  matvec(t.image_basis.view(), img, a);
  matvec(t.sentence_basis.view(), sen, c);
  return t.sharpness * dot(a, c) / (t.gain * static_cast<double>(t.rank));
}

namespace detail {

inline Sample planted_sample(const PlantedTask& t, const std::string& id, const std::vector<double>& image_code,
                             const std::vector<double>& caption_code, Rng& rng) {
  Sample s;
  s.sample_id = id;
  s.image_id = id;
  s.image = planted_image(t, image_code, rng);
  for (std::size_t j = 0; j < t.n_labels; ++j) {
    std::vector<float> l(kLabelDim);
    for (auto& v : l) v = static_cast<float>(rng.normal());
    s.labels.push_back(std::move(l));
  }
  s.sentence = planted_sentence(t, caption_code, rng);
  return s;
}

}  // namespace detail

// Ground-truth (image, caption) pairs without targets.
inline SampleSet make_planted_pairs(const PlantedTask& t, std::size_t n, std::uint64_t seed,
                                    const std::string& prefix = "pair") {
  Rng rng(seed);
  SampleSet out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = detail::sphere_code(t.rank, rng);
    out.push_back(detail::planted_sample(t, prefix + std::to_string(k), a, a, rng));
  }
  return out;
}

// Captions of varying fidelity: the caption code is rho * a + sqrt(1-rho^2) * a'
// for rho uniform in [-1, 1] and an unrelated code a'.
inline SampleSet make_planted_qe_samples(const PlantedTask& t, std::size_t n, std::uint64_t seed,
                                         const std::string& prefix = "qe") {
  Rng rng(seed);
  SampleSet out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = detail::sphere_code(t.rank, rng);
    const auto other = detail::sphere_code(t.rank, rng);
    const double rho = rng.uniform(-1.0, 1.0);
    const double mix = std::sqrt(1.0 - rho * rho);
    std::vector<double> c(t.rank);
    for (std::size_t r = 0; r < t.rank; ++r) c[r] = rho * a[r] + mix * other[r];
    auto s = detail::planted_sample(t, prefix + std::to_string(k), a, c, rng);
    const double p = 1.0 / (1.0 + std::exp(-planted_logit(t, s)));
    s.target = static_cast<float>(std::round(p * 8.0) / 8.0);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace capqe
