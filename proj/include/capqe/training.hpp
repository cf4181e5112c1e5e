#pragma once

// MSE fine-tuning with Adam and Spearman-based checkpoint selection.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "capqe/checkpoint.hpp"
#include "capqe/error.hpp"
#include "capqe/metrics.hpp"
#include "capqe/model.hpp"
#include "capqe/optim.hpp"
#include "capqe/rng.hpp"

namespace capqe {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 256;
  // Unset means 20 epochs.
  std::optional<std::int64_t> max_steps;
  std::int64_t eval_every = 100;
  std::uint64_t seed = 0;
  std::optional<Checkpoint> warm_start;

  void validate() const {
    if (batch_size < 1) fail(ErrorKind::InvalidArgument, "batch_size must be >= 1");
    if (eval_every < 1) fail(ErrorKind::InvalidArgument, "eval_every must be >= 1");
    if (max_steps && *max_steps < 0) fail(ErrorKind::InvalidArgument, "max_steps must be >= 0");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
      fail(ErrorKind::InvalidArgument, "learning_rate must be finite and >= 0");
    }
  }

  std::int64_t resolved_max_steps(std::size_t n_train) const {
    if (max_steps) return *max_steps;
    const auto per_epoch = static_cast<std::int64_t>((n_train + batch_size - 1) / batch_size);
    return 20 * per_epoch;
  }
};

struct HistoryEntry {
  std::int64_t step = 0;
  std::optional<double> train_loss;  // mean batch loss since the previous eval
  std::optional<double> dev_spearman;
  double dev_mse = 0.0;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct TrainHistory {
  std::vector<HistoryEntry> entries;
  std::int64_t best_step = 0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint latest;
  TrainHistory history;
};

namespace detail {

inline void require_targets(std::span<const Sample> samples, const char* what) {
  for (const auto& s : samples) {
    if (!s.target) fail(ErrorKind::MissingTarget, std::string(what) + " sample '" + s.sample_id + "' has no target");
  }
}

inline std::vector<double> targets_of(std::span<const Sample> samples) {
  std::vector<double> t;
  t.reserve(samples.size());
  for (const auto& s : samples) t.push_back(static_cast<double>(*s.target));
  return t;
}

// Seeded epoch-wise shuffling into batches of `batch_size`; the last partial
// batch of an epoch is kept.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, Rng rng) : order_(n), batch_size_(batch_size), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::span<const std::size_t> next() {
    if (cursor_ == 0) rng_.shuffle(std::span<std::size_t>(order_));
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    std::span<const std::size_t> batch(order_.data() + cursor_, end - cursor_);
    cursor_ = end == order_.size() ? 0 : end;
    return batch;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

inline ModelParams resolve_start(const ModelParams& model_init, const TrainConfig& cfg) {
  if (!cfg.warm_start) return model_init;
  const auto& warm = cfg.warm_start->params;
  if (!warm.config().same_shape(model_init.config())) {
    fail(ErrorKind::VersionMismatch, "warm-start checkpoint has P=" + std::to_string(warm.config().proj_dim) +
                                         " K=" + std::to_string(warm.config().num_labels) + ", model expects P=" +
                                         std::to_string(model_init.config().proj_dim) +
                                         " K=" + std::to_string(model_init.config().num_labels));
  }
  // Shapes come from the checkpoint, training hyperparameters from model_init.
  ModelParams p(model_init.config());
  std::copy(warm.values().begin(), warm.values().end(), p.values().begin());
  return p;
}

}  // namespace detail

inline EvalReport evaluate(const ModelParams& params, std::span<const Sample> samples) {
  detail::require_targets(samples, "evaluation");
  if (samples.empty()) fail(ErrorKind::EmptyDataset, "evaluate: no samples");
  const auto preds = predict(params, samples);
  const auto targets = detail::targets_of(samples);
  return evaluate_predictions(targets, preds);
}

inline EvalReport evaluate(const Checkpoint& ckpt, std::span<const Sample> samples) {
  return evaluate(ckpt.params, samples);
}

// Trains from `model_init` (or cfg.warm_start) and returns the checkpoint with
// the highest dev Spearman; ties go to the earliest step. Evaluations happen
// at step 0, every eval_every steps, and at the final step.
inline TrainResult train(const ModelParams& model_init, std::span<const Sample> train_set,
                         std::span<const Sample> dev_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorKind::EmptyDataset, "training set is empty");
  if (dev_set.empty()) fail(ErrorKind::EmptyDataset, "dev set is empty");
  detail::require_targets(train_set, "training");
  detail::require_targets(dev_set, "dev");

  ModelParams params = detail::resolve_start(model_init, cfg);
  const std::string provenance = cfg.warm_start ? "fine-tuned" : "scratch";
  const std::int64_t max_steps = cfg.resolved_max_steps(train_set.size());

  Rng root(cfg.seed);
  detail::BatchStream batches(train_set.size(), cfg.batch_size, root.fork(1));
  Rng dropout = root.fork(2);
  AdamState adam(params.size());

  TrainResult result;
  bool have_best = false;
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;

  auto record_eval = [&](std::int64_t step) {
    const auto report = evaluate(params, dev_set);
    HistoryEntry e;
    e.step = step;
    if (loss_count > 0) e.train_loss = loss_sum / static_cast<double>(loss_count);
    e.dev_spearman = report.spearman;
    e.dev_mse = report.mse;
    result.history.entries.push_back(e);
    loss_sum = 0.0;
    loss_count = 0;

    result.latest = Checkpoint{params, step, report.spearman, provenance};
    const bool better = !have_best || (report.spearman && (!result.best.dev_spearman ||
                                                           *report.spearman > *result.best.dev_spearman));
    if (better) {
      result.best = result.latest;
      result.history.best_step = step;
      have_best = true;
    }
  };

  record_eval(0);
  std::vector<const Sample*> batch;
  for (std::int64_t step = 1; step <= max_steps; ++step) {
    batch.clear();
    for (std::size_t idx : batches.next()) batch.push_back(&train_set[idx]);
    LossAndGrad lg;
    try {
      lg = backward(params, batch, &dropout);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteIntermediate) throw;
      fail(ErrorKind::NonFiniteLoss, "non-finite value at step " + std::to_string(step) + ": " + e.message());
    }
    if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
      fail(ErrorKind::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(step));
    }
    adam_step(params.values(), lg.grads.values(), adam, cfg.learning_rate);
    loss_sum += lg.loss;
    ++loss_count;
    if (step % cfg.eval_every == 0 || step == max_steps) record_eval(step);
  }
  return result;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string history_to_csv(const TrainHistory& h) {
  std::string out = "step,train_loss,dev_spearman,dev_mse\n";
  for (const auto& e : h.entries) {
    out += std::to_string(e.step) + ",";
    if (e.train_loss) out += format_number(*e.train_loss);
    out += ",";
    if (e.dev_spearman) out += format_number(*e.dev_spearman);
    out += "," + format_number(e.dev_mse) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid search over learning rate and label count.

struct GridCell {
  double learning_rate = 1e-5;
  int num_labels = 16;
  // Overrides the base config's step budget for this cell.
  std::optional<std::int64_t> max_steps;
};

inline std::vector<GridCell> make_grid(std::span<const double> lrs, std::span<const int> ks) {
  std::vector<GridCell> cells;
  for (int k : ks) {
    for (double lr : lrs) cells.push_back({lr, k, std::nullopt});
  }
  return cells;
}

struct GridRow {
  double lr = 0.0;
  int num_labels = 0;
  std::optional<double> spearman_dev;
  std::optional<double> spearman_test;
  double mse_dev = 0.0;
  std::optional<double> mse_test;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::size_t selected = 0;
  Checkpoint best;
};

inline GridResult grid_search(std::span<const GridCell> cells, const ModelConfig& base_model, const TrainConfig& base,
                              std::uint64_t init_seed, std::span<const Sample> train_set,
                              std::span<const Sample> dev_set, std::span<const Sample> test_set = {}) {
  if (cells.empty()) fail(ErrorKind::InvalidArgument, "grid is empty");
  GridResult out;
  bool have = false;
  for (const auto& cell : cells) {
    ModelConfig mc = base_model;
    mc.num_labels = cell.num_labels;
    TrainConfig tc = base;
    tc.learning_rate = cell.learning_rate;
    if (cell.max_steps) tc.max_steps = cell.max_steps;
    auto run = train(init_params(mc, init_seed), train_set, dev_set, tc);

    GridRow row;
    row.lr = cell.learning_rate;
    row.num_labels = cell.num_labels;
    row.spearman_dev = run.best.dev_spearman;
    row.mse_dev = evaluate(run.best, dev_set).mse;
    if (!test_set.empty()) {
      const auto t = evaluate(run.best, test_set);
      row.spearman_test = t.spearman;
      row.mse_test = t.mse;
    }
    const bool better = !have || (row.spearman_dev && (!out.rows[out.selected].spearman_dev ||
                                                       *row.spearman_dev > *out.rows[out.selected].spearman_dev));
    out.rows.push_back(row);
    if (better) {
      out.selected = out.rows.size() - 1;
      out.best = run.best;
      have = true;
    }
  }
  return out;
}

inline std::string grid_to_csv(const GridResult& g) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::string out = "lr,K,spearman_dev,spearman_test,mse_dev,mse_test\n";
  for (const auto& r : g.rows) {
    out += format_number(r.lr) + "," + std::to_string(r.num_labels) + "," + opt(r.spearman_dev) + "," +
           opt(r.spearman_test) + "," + format_number(r.mse_dev) + "," + opt(r.mse_test) + "\n";
  }
  return out;
}

inline nlohmann::json grid_to_json(const GridResult& g) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : g.rows) {
    rows.push_back({{"lr", r.lr},
                    {"K", r.num_labels},
                    {"spearman_dev", opt(r.spearman_dev)},
                    {"spearman_test", opt(r.spearman_test)},
                    {"mse_dev", r.mse_dev},
                    {"mse_test", opt(r.mse_test)}});
  }
  return {{"rows", rows}, {"selected", g.selected}};
}

}  // namespace capqe
