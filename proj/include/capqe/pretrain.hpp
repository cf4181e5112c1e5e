#pragma once

// Image-text matching pretraining. Within a batch of B (image, ground-truth
// caption) pairs, every image is scored against every caption with the full
// QE head, and a softmax over each row must pick out the diagonal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capqe/checkpoint.hpp"
#include "capqe/error.hpp"
#include "capqe/model.hpp"
#include "capqe/optim.hpp"
#include "capqe/rng.hpp"
#include "capqe/tensor.hpp"
#include "capqe/training.hpp"

namespace capqe {

// Forward state of one batch, kept for the backward pass.
struct PairForward {
  std::vector<ImageFeatures> images;
  std::vector<TextFeatures> texts;
  std::vector<HeadResult> cells;  // row-major, B x B
  Matrix logits;
};

// Entry (i, j) is the pre-sigmoid QE logit of sample i's image and labels
// paired with sample j's sentence.
inline PairForward in_batch_forward(const ModelParams& params, std::span<const Sample* const> batch,
                                    Rng* dropout = nullptr) {
  const std::size_t b = batch.size();
  PairForward f;
  f.images.reserve(b);
  f.texts.reserve(b);
  for (const Sample* s : batch) f.images.push_back(encode_image(params, *s, dropout));
  for (const Sample* s : batch) f.texts.push_back(encode_text(params, *s, dropout));
  f.cells.reserve(b * b);
  f.logits = Matrix(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      f.cells.push_back(head_forward(params, f.images[i], f.texts[j], dropout));
      f.logits(i, j) = f.cells.back().logit;
    }
  }
  return f;
}

inline Matrix in_batch_logits(const ModelParams& params, std::span<const Sample> batch) {
  if (batch.size() < 2) fail(ErrorKind::InvalidArgument, "in-batch logits need at least 2 pairs");
  std::vector<const Sample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return in_batch_forward(params, ptrs).logits;
}

struct NceResult {
  double loss = 0.0;
  double accuracy = 0.0;
  Matrix grad;  // d loss / d logits
};

// Mean over rows of -log softmax(row)[diagonal], image-to-caption direction
// only. A row counts as correct only if its diagonal is the unique maximum.
inline NceResult nce_loss_with_grad(const Matrix& logits) {
  if (logits.rows != logits.cols) fail(ErrorKind::NonSquare, "nce_loss: logits must be square");
  const std::size_t b = logits.rows;
  if (b < 2) fail(ErrorKind::InvalidArgument, "nce_loss: need at least 2 rows");
  NceResult r;
  r.grad = Matrix(b, b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) sum += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(sum);
    r.loss += lse - logits(i, i);
    for (std::size_t j = 0; j < b; ++j) {
      const double p = std::exp(logits(i, j) - lse);
      r.grad(i, j) = (p - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
    }
    bool unique_max = true;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i && logits(i, j) >= logits(i, i)) unique_max = false;
    }
    correct += unique_max;
  }
  r.loss /= static_cast<double>(b);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(b);
  return r;
}

inline std::pair<double, double> nce_loss(const Matrix& logits) {
  const auto r = nce_loss_with_grad(logits);
  return {r.loss, r.accuracy};
}

struct PairLossAndGrad {
  double loss = 0.0;
  double accuracy = 0.0;
  Gradients grads;
};

inline PairLossAndGrad pair_backward(const ModelParams& params, std::span<const Sample* const> batch,
                                     Rng* dropout = nullptr) {
  const auto fwd = in_batch_forward(params, batch, dropout);
  const auto nce = nce_loss_with_grad(fwd.logits);
  const std::size_t b = batch.size();

  PairLossAndGrad out{nce.loss, nce.accuracy, Gradients(params.config())};
  std::vector<ImageGrad> gi;
  std::vector<TextGrad> gt;
  for (const auto& f : fwd.images) gi.emplace_back(f);
  for (const auto& f : fwd.texts) gt.emplace_back(f);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      head_backward(params, fwd.images[i], fwd.texts[j], fwd.cells[i * b + j], nce.grad(i, j), out.grads, gi[i], gt[j]);
    }
  }
  for (std::size_t i = 0; i < b; ++i) encode_image_backward(params, fwd.images[i], gi[i], out.grads);
  for (std::size_t j = 0; j < b; ++j) encode_text_backward(params, fwd.texts[j], gt[j], out.grads);
  return out;
}

// Mean matching accuracy over consecutive full batches of `batch_size`.
inline double in_batch_accuracy(const ModelParams& params, std::span<const Sample> pairs, std::size_t batch_size) {
  if (batch_size < 2 || pairs.size() < batch_size) {
    fail(ErrorKind::InvalidArgument, "in_batch_accuracy: need at least one full batch of >= 2 pairs");
  }
  const std::size_t n_batches = pairs.size() / batch_size;
  std::vector<double> acc(n_batches, 0.0);
  parallel_for(n_batches, [&](std::size_t t) {
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(&pairs[t * batch_size + i]);
    acc[t] = nce_loss(in_batch_forward(params, batch).logits).second;
  });
  return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(n_batches);
}

struct PretrainEntry {
  std::int64_t step = 0;
  std::optional<double> train_loss;
  std::optional<double> dev_accuracy;

  friend bool operator==(const PretrainEntry&, const PretrainEntry&) = default;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<PretrainEntry> history;
};

// Adam on the in-batch matching loss. Each epoch is a fresh seeded shuffle cut
// into full batches of cfg.batch_size; a trailing partial batch is dropped so
// every step sees the same number of negatives.
inline PretrainResult pretrain(const ModelParams& model_init, std::span<const Sample> pairs,
                               std::span<const Sample> dev_pairs, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t b = cfg.batch_size;
  if (b < 2) fail(ErrorKind::InvalidArgument, "pretraining batch size must be >= 2");
  if (pairs.size() < b) {
    fail(ErrorKind::EmptyDataset, "pretraining needs at least one full batch (" + std::to_string(b) + " pairs), got " +
                                      std::to_string(pairs.size()));
  }
  const bool have_dev = dev_pairs.size() >= b;
  const std::size_t per_epoch = pairs.size() / b;
  const std::int64_t max_steps = cfg.max_steps ? *cfg.max_steps : static_cast<std::int64_t>(20 * per_epoch);

  ModelParams params = detail::resolve_start(model_init, cfg);
  Rng root(cfg.seed);
  Rng shuffle_rng = root.fork(1);
  Rng dropout = root.fork(2);
  AdamState adam(params.size());

  PretrainResult result;
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  auto record = [&](std::int64_t step) {
    PretrainEntry e;
    e.step = step;
    if (loss_count > 0) e.train_loss = loss_sum / static_cast<double>(loss_count);
    if (have_dev) e.dev_accuracy = in_batch_accuracy(params, dev_pairs, b);
    result.history.push_back(e);
    loss_sum = 0.0;
    loss_count = 0;
  };

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_in_epoch = per_epoch;
  std::vector<const Sample*> batch;
  record(0);
  for (std::int64_t step = 1; step <= max_steps; ++step) {
    if (batch_in_epoch == per_epoch) {
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      batch_in_epoch = 0;
    }
    batch.clear();
    for (std::size_t i = 0; i < b; ++i) batch.push_back(&pairs[order[batch_in_epoch * b + i]]);
    ++batch_in_epoch;
    PairLossAndGrad lg;
    try {
      lg = pair_backward(params, batch, &dropout);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteIntermediate) throw;
      fail(ErrorKind::NonFiniteLoss, "non-finite value at step " + std::to_string(step) + ": " + e.message());
    }
    if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
      fail(ErrorKind::NonFiniteLoss, "non-finite pretraining loss at step " + std::to_string(step));
    }
    adam_step(params.values(), lg.grads.values(), adam, cfg.learning_rate);
    loss_sum += lg.loss;
    ++loss_count;
    if (step % cfg.eval_every == 0 || step == max_steps) record(step);
  }
  result.checkpoint = Checkpoint{params, max_steps, std::nullopt, "pretrained"};
  return result;
}

inline std::string pretrain_history_to_csv(const std::vector<PretrainEntry>& h) {
  std::string out = "step,train_loss,dev_accuracy\n";
  for (const auto& e : h) {
    out += std::to_string(e.step) + ",";
    if (e.train_loss) out += format_number(*e.train_loss);
    out += ",";
    if (e.dev_accuracy) out += format_number(*e.dev_accuracy);
    out += "\n";
  }
  return out;
}

}  // namespace capqe
