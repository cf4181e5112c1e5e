#pragma once

// Bilinear quality-estimation network.
//
// Every input embedding passes through its own dense leaky-ReLU projection to
// width P. Projected vectors are augmented with a trailing constant 1 and
// paired through three bilinear matrices:
//
//   z[j]      = <o_j, B_oi i>    for the first K labels
//   z[K + j]  = <o_j, B_os s>
//   z[2K]     = <i,   B_is s>
//
// and the score is sigmoid(W_out z + b_out). Label slots beyond the labels a
// sample actually has stay exactly zero. In training mode inverted dropout is
// applied to the input of every parameterized layer: the raw embeddings, the
// projected vectors entering the bilinear layers, and z.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capqe/error.hpp"
#include "capqe/parallel.hpp"
#include "capqe/rng.hpp"
#include "capqe/sample.hpp"
#include "capqe/tensor.hpp"

namespace capqe {

struct ModelConfig {
  int proj_dim = 64;
  int num_labels = 16;
  double leaky_slope = 0.01;
  double dropout_rate = 0.2;

  void validate() const {
    if (proj_dim < 1) fail(ErrorKind::InvalidArgument, "proj_dim must be >= 1");
    if (num_labels < 0) fail(ErrorKind::InvalidArgument, "num_labels must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::InvalidArgument, "dropout_rate must be in [0,1)");
    if (!std::isfinite(leaky_slope)) fail(ErrorKind::InvalidArgument, "leaky_slope must be finite");
  }

  // Parameter shapes depend only on these two fields.
  bool same_shape(const ModelConfig& o) const { return proj_dim == o.proj_dim && num_labels == o.num_labels; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Block : std::size_t {
  ImageW,
  ImageB,
  LabelW,
  LabelB,
  SentenceW,
  SentenceB,
  LabelImage,
  LabelSentence,
  ImageSentence,
  OutW,
  OutB,
};

inline constexpr std::size_t kBlockCount = 11;

inline constexpr std::array<std::string_view, kBlockCount> kBlockNames = {
    "W_img", "b_img", "W_lbl", "b_lbl", "W_sen", "b_sen", "B_oi", "B_os", "B_is", "W_out", "b_out"};

struct BlockShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

inline std::array<BlockShape, kBlockCount> block_shapes(const ModelConfig& c) {
  const auto p = static_cast<std::size_t>(c.proj_dim);
  const auto k = static_cast<std::size_t>(c.num_labels);
  return {{
      {p, kImageDim},
      {p, 1},
      {p, kLabelDim},
      {p, 1},
      {p, kSentenceDim},
      {p, 1},
      {p + 1, p + 1},
      {p + 1, p + 1},
      {p + 1, p + 1},
      {1, 2 * k + 1},
      {1, 1},
  }};
}

// Flat parameter storage with named block views. Gradients and Adam moments
// share this layout, so optimizer and serialization code work on the flat
// span.
class ParamSet {
 public:
  ParamSet() = default;

  explicit ParamSet(const ModelConfig& config) : config_(config) {
    config.validate();
    shapes_ = block_shapes(config);
    offsets_[0] = 0;
    for (std::size_t b = 0; b < kBlockCount; ++b) offsets_[b + 1] = offsets_[b] + shapes_[b].size();
    values_.assign(offsets_[kBlockCount], 0.0);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  BlockShape shape(Block b) const { return shapes_[idx(b)]; }

  std::span<double> block(Block b) { return {values_.data() + offsets_[idx(b)], shapes_[idx(b)].size()}; }
  std::span<const double> block(Block b) const {
    return {values_.data() + offsets_[idx(b)], shapes_[idx(b)].size()};
  }

  MatrixRef<double> matrix(Block b) {
    return {values_.data() + offsets_[idx(b)], shapes_[idx(b)].rows, shapes_[idx(b)].cols};
  }
  MatrixRef<const double> matrix(Block b) const {
    return {values_.data() + offsets_[idx(b)], shapes_[idx(b)].rows, shapes_[idx(b)].cols};
  }

  bool same_shape(const ParamSet& o) const { return config_.same_shape(o.config_) && size() == o.size(); }

  void zero() { std::fill(values_.begin(), values_.end(), 0.0); }

  ParamSet& operator+=(const ParamSet& o) {
    if (!same_shape(o)) fail(ErrorKind::ShapeMismatch, "parameter sets have different shapes");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.config_ == b.config_ && a.values_ == b.values_;
  }

 private:
  static constexpr std::size_t idx(Block b) { return static_cast<std::size_t>(b); }

  ModelConfig config_;
  std::array<BlockShape, kBlockCount> shapes_{};
  std::array<std::size_t, kBlockCount + 1> offsets_{};
  std::vector<double> values_;
};

using ModelParams = ParamSet;
using Gradients = ParamSet;

// ---------------------------------------------------------------------------
// Primitive layers

// x^T B y
inline double bilinear(std::span<const double> x, std::span<const double> y, MatrixRef<const double> b) {
  require_dims(b.rows() == x.size() && b.cols() == y.size(),
               "bilinear: matrix is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ", inputs are " +
                   std::to_string(x.size()) + " and " + std::to_string(y.size()));
  double s = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) s += x[a] * dot(b.row(a), y);
  return s;
}

inline double leaky_relu(double h, double slope) { return h >= 0.0 ? h : slope * h; }

// leaky_relu(W x + b)
inline std::vector<double> dense_forward(std::span<const double> x, MatrixRef<const double> w,
                                         std::span<const double> b, double slope) {
  require_dims(w.cols() == x.size() && w.rows() == b.size(), "dense_forward: shapes do not conform");
  std::vector<double> out(w.rows());
  matvec(w, x, out);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = leaky_relu(out[r] + b[r], slope);
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Sigmoid kept strictly inside (0, 1) even when it saturates in double.
inline double score_from_logit(double logit) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return std::clamp(sigmoid(logit), lo, hi);
}

// Inverted dropout scales: 0 with probability rate, 1/(1-rate) otherwise.
// Empty means "no dropout" and draws nothing from the generator.
inline std::vector<double> dropout_mask(std::size_t n, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> m(n);
  for (auto& v : m) v = rng->bernoulli(rate) ? 0.0 : keep;
  return m;
}

// ---------------------------------------------------------------------------
// Forward pipeline pieces, shared by the QE score and in-batch pretraining.

struct Projection {
  std::vector<double> input;     // layer input after dropout
  std::vector<double> pre;       // W input + b
  std::vector<double> act_mask;  // dropout on the activation, empty if none
  std::vector<double> out;       // dropped-out activation plus trailing 1
};

struct ImageFeatures {
  Projection image;
  std::vector<Projection> labels;  // first min(K, |labels|) labels
  std::vector<double> label_image;  // B_oi * i_hat
};

struct TextFeatures {
  Projection sentence;
  std::vector<double> label_sentence;  // B_os * s_hat
  std::vector<double> image_sentence;  // B_is * s_hat
};

struct HeadResult {
  std::vector<double> z;       // after dropout, length 2K+1
  std::vector<double> z_mask;  // empty if no dropout
  double logit = 0.0;
};

namespace detail {

inline Projection project(const ParamSet& p, Block w_block, Block b_block, std::span<const float> raw, Rng* rng,
                          const Sample& s, const char* field) {
  const auto& cfg = p.config();
  if (raw.size() != p.matrix(w_block).cols()) {
    fail(ErrorKind::DimensionMismatch, "sample '" + s.sample_id + "': " + field + " has " + std::to_string(raw.size()) +
                                           " entries, expected " + std::to_string(p.matrix(w_block).cols()));
  }
  Projection proj;
  proj.input.assign(raw.begin(), raw.end());
  if (auto m = dropout_mask(proj.input.size(), cfg.dropout_rate, rng); !m.empty()) {
    for (std::size_t i = 0; i < m.size(); ++i) proj.input[i] *= m[i];
  }
  const auto w = p.matrix(w_block);
  const auto b = p.block(b_block);
  proj.pre.resize(w.rows());
  matvec(w, proj.input, proj.pre);
  for (std::size_t r = 0; r < proj.pre.size(); ++r) proj.pre[r] += b[r];

  proj.act_mask = dropout_mask(proj.pre.size(), cfg.dropout_rate, rng);
  proj.out.resize(proj.pre.size() + 1);
  for (std::size_t r = 0; r < proj.pre.size(); ++r) {
    const double a = leaky_relu(proj.pre[r], cfg.leaky_slope);
    proj.out[r] = proj.act_mask.empty() ? a : a * proj.act_mask[r];
  }
  proj.out.back() = 1.0;
  return proj;
}

// Accumulates parameter gradients of a projection given d(loss)/d(out).
inline void project_backward(const Projection& proj, std::span<const double> d_out, double slope, ParamSet& grads,
                             Block w_block, Block b_block) {
  auto gw = grads.matrix(w_block);
  auto gb = grads.block(b_block);
  for (std::size_t r = 0; r < proj.pre.size(); ++r) {
    double d = d_out[r];
    if (!proj.act_mask.empty()) d *= proj.act_mask[r];
    if (proj.pre[r] < 0.0) d *= slope;
    if (d == 0.0) continue;
    gb[r] += d;
    const auto row = gw.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += d * proj.input[c];
  }
}

}  // namespace detail

inline std::size_t labels_used(const ModelConfig& cfg, const Sample& s) {
  return std::min(static_cast<std::size_t>(cfg.num_labels), s.labels.size());
}

inline ImageFeatures encode_image(const ParamSet& p, const Sample& s, Rng* rng = nullptr) {
  ImageFeatures f;
  f.image = detail::project(p, Block::ImageW, Block::ImageB, s.image, rng, s, "image");
  const std::size_t n = labels_used(p.config(), s);
  f.labels.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    f.labels.push_back(detail::project(p, Block::LabelW, Block::LabelB, s.labels[j], rng, s, "label"));
  }
  f.label_image.resize(f.image.out.size());
  matvec(p.matrix(Block::LabelImage), f.image.out, f.label_image);
  return f;
}

inline TextFeatures encode_text(const ParamSet& p, const Sample& s, Rng* rng = nullptr) {
  TextFeatures f;
  f.sentence = detail::project(p, Block::SentenceW, Block::SentenceB, s.sentence, rng, s, "sentence");
  f.label_sentence.resize(f.sentence.out.size());
  f.image_sentence.resize(f.sentence.out.size());
  matvec(p.matrix(Block::LabelSentence), f.sentence.out, f.label_sentence);
  matvec(p.matrix(Block::ImageSentence), f.sentence.out, f.image_sentence);
  return f;
}

inline HeadResult head_forward(const ParamSet& p, const ImageFeatures& img, const TextFeatures& txt,
                               Rng* rng = nullptr) {
  const auto k = static_cast<std::size_t>(p.config().num_labels);
  HeadResult h;
  h.z.assign(2 * k + 1, 0.0);
  for (std::size_t j = 0; j < img.labels.size(); ++j) {
    h.z[j] = dot(img.labels[j].out, img.label_image);
    h.z[k + j] = dot(img.labels[j].out, txt.label_sentence);
  }
  h.z[2 * k] = dot(img.image.out, txt.image_sentence);
  h.z_mask = dropout_mask(h.z.size(), p.config().dropout_rate, rng);
  if (!h.z_mask.empty()) {
    for (std::size_t i = 0; i < h.z.size(); ++i) h.z[i] *= h.z_mask[i];
  }
  h.logit = dot(p.block(Block::OutW), h.z) + p.block(Block::OutB)[0];
  if (!std::isfinite(h.logit)) fail(ErrorKind::NonFiniteIntermediate, "non-finite logit");
  return h;
}

// Gradients w.r.t. the projected vectors of each side.
struct ImageGrad {
  std::vector<double> image;
  std::vector<std::vector<double>> labels;

  explicit ImageGrad(const ImageFeatures& f) : image(f.image.out.size(), 0.0) {
    labels.assign(f.labels.size(), std::vector<double>(f.image.out.size(), 0.0));
  }
};

struct TextGrad {
  std::vector<double> sentence;
  explicit TextGrad(const TextFeatures& f) : sentence(f.sentence.out.size(), 0.0) {}
};

inline void head_backward(const ParamSet& p, const ImageFeatures& img, const TextFeatures& txt, const HeadResult& h,
                          double d_logit, ParamSet& grads, ImageGrad& gi, TextGrad& gt) {
  const auto k = static_cast<std::size_t>(p.config().num_labels);
  const std::size_t width = img.image.out.size();

  axpy(d_logit, h.z, grads.block(Block::OutW));
  grads.block(Block::OutB)[0] += d_logit;

  const auto w_out = p.block(Block::OutW);
  auto dz = [&](std::size_t idx) {
    const double d = d_logit * w_out[idx];
    return h.z_mask.empty() ? d : d * h.z_mask[idx];
  };

  std::vector<double> acc_oi(width, 0.0);
  std::vector<double> acc_os(width, 0.0);
  for (std::size_t j = 0; j < img.labels.size(); ++j) {
    const double d_oi = dz(j);
    const double d_os = dz(k + j);
    const auto& o = img.labels[j].out;
    axpy(d_oi, o, acc_oi);
    axpy(d_os, o, acc_os);
    axpy(d_oi, img.label_image, gi.labels[j]);
    axpy(d_os, txt.label_sentence, gi.labels[j]);
  }
  if (!img.labels.empty()) {
    outer_acc<double>(grads.matrix(Block::LabelImage), acc_oi, img.image.out, 1.0);
    matvec_t_acc(p.matrix(Block::LabelImage), acc_oi, 1.0, gi.image);
    outer_acc<double>(grads.matrix(Block::LabelSentence), acc_os, txt.sentence.out, 1.0);
    matvec_t_acc(p.matrix(Block::LabelSentence), acc_os, 1.0, gt.sentence);
  }

  const double d_is = dz(2 * k);
  if (d_is != 0.0) {
    outer_acc<double>(grads.matrix(Block::ImageSentence), img.image.out, txt.sentence.out, d_is);
    axpy(d_is, txt.image_sentence, gi.image);
    matvec_t_acc(p.matrix(Block::ImageSentence), img.image.out, d_is, gt.sentence);
  }
}

inline void encode_image_backward(const ParamSet& p, const ImageFeatures& f, const ImageGrad& g, ParamSet& grads) {
  const double slope = p.config().leaky_slope;
  detail::project_backward(f.image, g.image, slope, grads, Block::ImageW, Block::ImageB);
  for (std::size_t j = 0; j < f.labels.size(); ++j) {
    detail::project_backward(f.labels[j], g.labels[j], slope, grads, Block::LabelW, Block::LabelB);
  }
}

inline void encode_text_backward(const ParamSet& p, const TextFeatures& f, const TextGrad& g, ParamSet& grads) {
  detail::project_backward(f.sentence, g.sentence, p.config().leaky_slope, grads, Block::SentenceW, Block::SentenceB);
}

// ---------------------------------------------------------------------------
// Whole-sample API

// Pre-sigmoid output. Pass a generator for training-mode dropout, nullptr for
// deterministic inference.
inline double forward_logit(const ParamSet& p, const Sample& s, Rng* dropout = nullptr) {
  const auto img = encode_image(p, s, dropout);
  const auto txt = encode_text(p, s, dropout);
  return head_forward(p, img, txt, dropout).logit;
}

inline double forward(const ParamSet& p, const Sample& s, Rng* dropout = nullptr) {
  return score_from_logit(forward_logit(p, s, dropout));
}

inline std::vector<double> predict(const ParamSet& p, std::span<const Sample> samples) {
  std::vector<double> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out[i] = forward(p, samples[i]); });
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

// Batch-mean squared error and its exact gradient. With a generator, each
// sample draws its dropout masks from its own child stream, seeded in batch
// order, so the result does not depend on the worker count.
inline LossAndGrad backward(const ParamSet& p, std::span<const Sample* const> batch, Rng* dropout = nullptr) {
  if (batch.empty()) fail(ErrorKind::EmptyDataset, "backward: empty batch");
  for (const Sample* s : batch) {
    if (!s->target) fail(ErrorKind::MissingTarget, "sample '" + s->sample_id + "' has no target");
  }
  std::vector<std::uint64_t> seeds(batch.size(), 0);
  if (dropout != nullptr) {
    for (auto& seed : seeds) seed = dropout->next_u64();
  }

  constexpr std::size_t kChunk = 16;
  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<Gradients> chunk_grads(n_chunks, Gradients(p.config()));
  std::vector<double> sq_err(batch.size(), 0.0);

  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const Sample& s = *batch[i];
      Rng sample_rng(seeds[i]);
      Rng* rng = dropout != nullptr ? &sample_rng : nullptr;
      const auto img = encode_image(p, s, rng);
      const auto txt = encode_text(p, s, rng);
      const auto head = head_forward(p, img, txt, rng);
      const double score = score_from_logit(head.logit);
      const double diff = score - static_cast<double>(*s.target);
      sq_err[i] = diff * diff;
      const double d_logit = 2.0 * diff * inv_n * score * (1.0 - score);
      ImageGrad gi(img);
      TextGrad gt(txt);
      head_backward(p, img, txt, head, d_logit, chunk_grads[c], gi, gt);
      encode_image_backward(p, img, gi, chunk_grads[c]);
      encode_text_backward(p, txt, gt, chunk_grads[c]);
    }
  });

  LossAndGrad out{0.0, Gradients(p.config())};
  for (const auto& g : chunk_grads) out.grads += g;
  for (double e : sq_err) out.loss += e;
  out.loss *= inv_n;
  return out;
}

inline LossAndGrad backward(const ParamSet& p, std::span<const Sample> batch, Rng* dropout = nullptr) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward(p, std::span<const Sample* const>(ptrs), dropout);
}

// Uniform in +-1/sqrt(fan_in) for weight matrices, zero biases.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  for (Block b : {Block::ImageW, Block::LabelW, Block::SentenceW, Block::LabelImage, Block::LabelSentence,
                  Block::ImageSentence, Block::OutW}) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.shape(b).cols));
    for (auto& v : p.block(b)) v = rng.uniform(-scale, scale);
  }
  return p;
}

}  // namespace capqe
