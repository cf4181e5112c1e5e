#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "capqe/capqe.hpp"
#include "capqe/formats.hpp"

namespace capqe::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Reads inputs through here so the manifest can checksum exactly what was used.
class Run {
 public:
  Run(std::string command, CLI::App* sub) : command_(std::move(command)), sub_(sub) {}

  std::string read(const std::string& path) {
    auto data = read_file(path);
    inputs_.push_back({{"path", path}, {"crc32", hex32(crc32_of(data))}, {"bytes", data.size()}});
    return data;
  }

  SampleSet samples(const std::string& path) {
    auto data = read(path);
    (void)data;
    return load_samples(path);
  }

  Checkpoint checkpoint(const std::string& path) {
    const auto data = read(path);
    return decode_checkpoint(data, std::nullopt, path);
  }

  void write(const std::string& path, std::string_view data) {
    write_file(path, data, force_);
    outputs_.push_back(path);
  }

  void write_samples(const SampleSet& s, const std::string& path) {
    SaveOptions opts;
    opts.force = force_;
    save_samples(s, path, opts);
    outputs_.push_back(path);
  }

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_force(bool f) { force_ = f; }

  // <primary>.manifest.json; everything except run.timestamp is a function of
  // the invocation and its inputs.
  void finish(const std::string& primary) {
    json flags = json::object();
    for (const CLI::Option* opt : sub_->get_options()) {
      const std::string name = opt->get_single_name();
      if (name == "help") continue;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        if (opt->get_expected_max() > 1) {
          flags[name] = res;
        } else {
          flags[name] = res.empty() ? std::string("true") : res.back();
        }
      } else if (!opt->get_default_str().empty()) {
        flags[name] = opt->get_default_str();
      }
    }
    json m;
    m["command"] = command_;
    m["flags"] = flags;
    m["seed"] = seed_ ? json(*seed_) : json(nullptr);
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["run"] = {{"timestamp", utc_timestamp()}};
    write_file(primary + ".manifest.json", m.dump(2) + "\n", true);
  }

 private:
  std::string command_;
  CLI::App* sub_;
  std::optional<std::uint64_t> seed_;
  bool force_ = false;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

std::string jsonl(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const EvalReport& r) {
  return {{"n", r.n}, {"spearman", optional_json(r.spearman)}, {"mse", r.mse}};
}

struct ModelFlags {
  int proj_dim = 64;
  int num_labels = 16;
  double leaky_slope = 0.01;
  double dropout = 0.2;
  CLI::Option* proj_opt = nullptr;
  CLI::Option* labels_opt = nullptr;
  CLI::Option* slope_opt = nullptr;
  CLI::Option* dropout_opt = nullptr;

  void add(CLI::App* app, bool with_labels = true) {
    proj_opt = app->add_option("--proj-dim", proj_dim, "Projection width P")
                   ->capture_default_str()
                   ->check(CLI::PositiveNumber);
    if (with_labels) {
      labels_opt = app->add_option("--num-labels", num_labels, "Label slots K")
                       ->capture_default_str()
                       ->check(CLI::NonNegativeNumber);
    }
    slope_opt = app->add_option("--leaky-slope", leaky_slope, "Leaky-ReLU slope")->capture_default_str();
    dropout_opt = app->add_option("--dropout", dropout, "Dropout rate")
                      ->capture_default_str()
                      ->check(CLI::Range(0.0, 0.999999));
  }

  // Flags left at their defaults inherit the warm-start checkpoint's values.
  ModelConfig resolve(const std::optional<Checkpoint>& warm) const {
    ModelConfig c;
    const ModelConfig* base = warm ? &warm->config() : nullptr;
    c.proj_dim = (base && proj_opt->count() == 0) ? base->proj_dim : proj_dim;
    c.num_labels = (base && (!labels_opt || labels_opt->count() == 0)) ? base->num_labels : num_labels;
    c.leaky_slope = (base && slope_opt->count() == 0) ? base->leaky_slope : leaky_slope;
    c.dropout_rate = (base && dropout_opt->count() == 0) ? base->dropout_rate : dropout;
    return c;
  }
};

struct TrainFlags {
  double lr = 1e-5;
  std::size_t batch_size = 256;
  std::int64_t max_steps = -1;
  std::int64_t eval_every = 100;
  std::uint64_t seed = 0;
  std::string warm_start;

  void add(CLI::App* app, bool with_lr = true) {
    if (with_lr) {
      app->add_option("--lr", lr, "Adam learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
    }
    app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--max-steps", max_steps, "Optimizer steps (default: 20 epochs)")->check(CLI::NonNegativeNumber);
    app->add_option("--eval-every", eval_every, "Steps between dev evaluations")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Seed for all randomness")->capture_default_str();
    app->add_option("--warm-start", warm_start, "Checkpoint to start from");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    if (max_steps >= 0) c.max_steps = max_steps;
    c.eval_every = eval_every;
    c.seed = seed;
    return c;
  }
};

void add_force(CLI::App* app, bool& force) {
  app->add_flag("--force", force, "Overwrite existing output files");
}

struct Options {
  bool force = false;

  // aggregate
  std::string agg_in, agg_out, agg_log;
  int max_skips = kDefaultMaxSkips;

  // stability
  std::string stab_a, stab_b, stab_out;

  // split
  std::string split_in, split_train, split_dev, split_test;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;

  // pretrain / train / grid
  std::string pairs, dev_pairs, train_in, dev_in, test_in, ckpt_out, latest_out, history_out;
  std::string grid_csv, grid_json;
  std::vector<double> lrs{1e-4, 1e-5, 1e-6};
  std::vector<int> ks{0, 5, 10, 20};
  ModelFlags model_flags[3];
  TrainFlags train_flags[3];
  ModelFlags* model = &model_flags[0];
  TrainFlags* train = &train_flags[0];

  // eval / score / filter
  std::string model_path, data_in, report_out, scores_out, kept_out, rejected_out;
  double threshold = 0.0;

  // pr-curve / operating-point
  std::string pr_scores, pr_annotations, pr_out, pr_summary, pr_svg, curve_in, op_out;
  double target_precision = 0.8;
};

void summary(std::ostream& out, const json& j) { out << j.dump() << "\n"; }

// ---------------------------------------------------------------------------

void cmd_aggregate(Options& o, Run& run, std::ostream& out, std::ostream& err) {
  const auto records = parse_rating_records(run.read(o.agg_in), o.agg_in);
  const auto agg = aggregate_dataset(records, o.max_skips);
  std::vector<std::string> lines, log_lines;
  for (const auto& s : agg.scores) lines.push_back(scored_record_to_jsonl(s));
  for (const auto& f : agg.filter_log) log_lines.push_back(filter_log_to_jsonl(f));
  for (const auto& [img, cap] : agg.low_count) {
    err << "warning: (" << img << ", " << cap << ") has fewer than " << kProtocolMinValid << " valid ratings\n";
  }
  const std::string log_path = o.agg_log.empty() ? o.agg_out + ".filtered.jsonl" : o.agg_log;
  run.write(o.agg_out, jsonl(lines));
  run.write(log_path, jsonl(log_lines));
  run.finish(o.agg_out);
  summary(out, {{"scored", agg.scores.size()}, {"filtered", agg.filter_log.size()}, {"low_count", agg.low_count.size()}});
}

std::map<std::pair<std::string, std::string>, QualityScore> score_map(const std::string& text, const std::string& path) {
  std::map<std::pair<std::string, std::string>, QualityScore> m;
  for (const auto& r : parse_scored_records(text, path)) {
    if (!m.emplace(std::make_pair(r.image_id, r.caption_id), r.score).second) {
      fail(ErrorKind::DuplicateKey, path + ": duplicate (" + r.image_id + ", " + r.caption_id + ")");
    }
  }
  return m;
}

void cmd_stability(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto a = score_map(run.read(o.stab_a), o.stab_a);
  const auto b = score_map(run.read(o.stab_b), o.stab_b);
  const auto r = stability_report(a, b);
  const json j{{"n_pairs", r.n_pairs},
               {"mean_diff", r.mean_diff},
               {"std_diff", r.std_diff},
               {"frac_within_quarter", r.frac_within_quarter}};
  if (!o.stab_out.empty()) {
    run.write(o.stab_out, j.dump(2) + "\n");
    run.finish(o.stab_out);
  }
  summary(out, j);
}

void cmd_split(Options& o, Run& run, std::ostream& out, std::ostream&) {
  if (o.fractions.size() != 3) throw UsageError("--fractions: expected exactly 3 values");
  run.set_seed(o.split_seed);
  const auto samples = run.samples(o.split_in);
  const auto parts = split_image_disjoint(samples, {o.fractions[0], o.fractions[1], o.fractions[2]}, o.split_seed);
  run.write_samples(parts.train, o.split_train);
  run.write_samples(parts.dev, o.split_dev);
  run.write_samples(parts.test, o.split_test);
  run.finish(o.split_train);
  summary(out, {{"train", parts.train.size()}, {"dev", parts.dev.size()}, {"test", parts.test.size()}});
}

std::optional<Checkpoint> load_warm(Options& o, Run& run) {
  if (o.train->warm_start.empty()) return std::nullopt;
  return run.checkpoint(o.train->warm_start);
}

void cmd_pretrain(Options& o, Run& run, std::ostream& out, std::ostream&) {
  run.set_seed(o.train->seed);
  const auto pairs = run.samples(o.pairs);
  const auto dev = o.dev_pairs.empty() ? SampleSet{} : run.samples(o.dev_pairs);
  auto cfg = o.train->config();
  cfg.warm_start = load_warm(o, run);
  const auto mc = o.model->resolve(cfg.warm_start);
  const auto result = pretrain(init_params(mc, o.train->seed), pairs, dev, cfg);
  run.write(o.ckpt_out, encode_checkpoint(result.checkpoint));
  if (!o.history_out.empty()) run.write(o.history_out, pretrain_history_to_csv(result.history));
  run.finish(o.ckpt_out);
  const auto& last = result.history.back();
  summary(out, {{"steps", result.checkpoint.step},
                {"train_loss", optional_json(last.train_loss)},
                {"dev_accuracy", optional_json(last.dev_accuracy)}});
}

void cmd_train(Options& o, Run& run, std::ostream& out, std::ostream&) {
  run.set_seed(o.train->seed);
  const auto train_set = run.samples(o.train_in);
  const auto dev_set = run.samples(o.dev_in);
  auto cfg = o.train->config();
  cfg.warm_start = load_warm(o, run);
  const auto mc = o.model->resolve(cfg.warm_start);
  const auto result = train(init_params(mc, o.train->seed), train_set, dev_set, cfg);
  run.write(o.ckpt_out, encode_checkpoint(result.best));
  if (!o.latest_out.empty()) run.write(o.latest_out, encode_checkpoint(result.latest));
  if (!o.history_out.empty()) run.write(o.history_out, history_to_csv(result.history));
  run.finish(o.ckpt_out);
  summary(out, {{"best_step", result.best.step},
                {"dev_spearman", optional_json(result.best.dev_spearman)},
                {"provenance", result.best.provenance}});
}

void cmd_grid(Options& o, Run& run, std::ostream& out, std::ostream&) {
  if (o.lrs.empty() || o.ks.empty()) throw UsageError("--lrs and --ks must be non-empty");
  run.set_seed(o.train->seed);
  const auto train_set = run.samples(o.train_in);
  const auto dev_set = run.samples(o.dev_in);
  const auto test_set = o.test_in.empty() ? SampleSet{} : run.samples(o.test_in);
  auto cfg = o.train->config();
  cfg.warm_start = load_warm(o, run);
  const auto base = o.model->resolve(cfg.warm_start);
  const auto cells = make_grid(o.lrs, o.ks);
  const auto g = grid_search(cells, base, cfg, o.train->seed, train_set, dev_set, test_set);
  run.write(o.grid_csv, grid_to_csv(g));
  if (!o.grid_json.empty()) run.write(o.grid_json, grid_to_json(g).dump(2) + "\n");
  if (!o.ckpt_out.empty()) run.write(o.ckpt_out, encode_checkpoint(g.best));
  run.finish(o.grid_csv);
  const auto& sel = g.rows[g.selected];
  summary(out, {{"selected_lr", sel.lr}, {"selected_K", sel.num_labels}, {"spearman_dev", optional_json(sel.spearman_dev)}});
}

void cmd_eval(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto ckpt = run.checkpoint(o.model_path);
  const auto samples = run.samples(o.data_in);
  const auto j = report_json(evaluate(ckpt, samples));
  if (!o.report_out.empty()) {
    run.write(o.report_out, j.dump(2) + "\n");
    run.finish(o.report_out);
  }
  summary(out, j);
}

void cmd_score(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto ckpt = run.checkpoint(o.model_path);
  const auto samples = run.samples(o.data_in);
  const auto scores = predict(ckpt.params, samples);
  std::string text;
  for (std::size_t i = 0; i < samples.size(); ++i) text += prediction_to_jsonl(samples[i].sample_id, scores[i]) + "\n";
  run.write(o.scores_out, text);
  run.finish(o.scores_out);
  summary(out, {{"scored", samples.size()}});
}

void cmd_filter(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto ckpt = run.checkpoint(o.model_path);
  const auto samples = run.samples(o.data_in);
  const auto scores = predict(ckpt.params, samples);
  SampleSet kept, rejected;
  for (std::size_t i = 0; i < samples.size(); ++i) (scores[i] > o.threshold ? kept : rejected).push_back(samples[i]);
  run.write_samples(kept, o.kept_out);
  run.write_samples(rejected, o.rejected_out);
  run.finish(o.kept_out);
  summary(out, {{"kept", kept.size()}, {"rejected", rejected.size()}, {"threshold", o.threshold}});
}

void cmd_pr_curve(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto scores = parse_predictions(run.read(o.pr_scores), o.pr_scores);
  std::map<std::string, bool> labels;
  for (const auto& a : parse_annotations(run.read(o.pr_annotations), o.pr_annotations)) {
    if (!labels.emplace(a.sample_id, ext_good(a)).second) {
      fail(ErrorKind::DuplicateKey, o.pr_annotations + ": duplicate sample_id '" + a.sample_id + "'");
    }
  }
  const auto curve = pr_curve(scores, labels);
  const double area = auc(curve);
  const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto& kv) { return kv.second; }));
  const json s{{"auc", area}, {"n_samples", labels.size()}, {"n_positive", positives}, {"n_points", curve.size()}};
  const std::string summary_path = o.pr_summary.empty() ? o.pr_out + ".summary.json" : o.pr_summary;
  run.write(o.pr_out, pr_curve_to_csv(curve));
  run.write(summary_path, s.dump(2) + "\n");
  if (!o.pr_svg.empty()) run.write(o.pr_svg, pr_curve_to_svg(curve, area));
  run.finish(o.pr_out);
  summary(out, s);
}

void cmd_operating_point(Options& o, Run& run, std::ostream& out, std::ostream&) {
  const auto curve = parse_pr_curve_csv(run.read(o.curve_in), o.curve_in);
  const auto p = report_operating_point(curve, o.target_precision);
  const json j{{"threshold", p.threshold}, {"precision", optional_json(p.precision)}, {"recall", p.recall},
               {"n_served", p.n_served}};
  if (!o.op_out.empty()) {
    run.write(o.op_out, j.dump(2) + "\n");
    run.finish(o.op_out);
  }
  summary(out, j);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Caption quality estimation over precomputed embeddings", "qe"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  using Handler = std::function<void(Options&, Run&, std::ostream&, std::ostream&)>;
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto sub = [&](const std::string& name, const std::string& desc, Handler h) {
    auto* s = app.add_subcommand(name, desc);
    commands.emplace_back(s, std::move(h));
    return s;
  };

  auto* agg = sub("aggregate", "Aggregate YES/NO/SKIP ratings into eighth-quantized scores", cmd_aggregate);
  agg->add_option("--in", o.agg_in, "Ratings jsonl")->required();
  agg->add_option("--out", o.agg_out, "Scores jsonl")->required();
  agg->add_option("--filter-log", o.agg_log, "Filtered-sample log (default <out>.filtered.jsonl)");
  agg->add_option("--max-skips", o.max_skips, "Largest SKIP count that is still scored")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  add_force(agg, o.force);

  auto* stab = sub("stability", "Compare two aggregations of the same items", cmd_stability);
  stab->add_option("--a", o.stab_a, "First scores jsonl")->required();
  stab->add_option("--b", o.stab_b, "Second scores jsonl")->required();
  stab->add_option("--out", o.stab_out, "Report JSON");
  add_force(stab, o.force);

  auto* split = sub("split", "Image-disjoint train/dev/test split", cmd_split);
  split->add_option("--in", o.split_in, "Samples (jsonl or packed)")->required();
  split->add_option("--train", o.split_train, "Train output")->required();
  split->add_option("--dev", o.split_dev, "Dev output")->required();
  split->add_option("--test", o.split_test, "Test output")->required();
  split->add_option("--fractions", o.fractions, "Train,dev,test fractions")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  split->add_option("--seed", o.split_seed, "Seed")->capture_default_str();
  add_force(split, o.force);

  auto* pre = sub("pretrain", "In-batch image-caption matching pretraining", cmd_pretrain);
  pre->add_option("--pairs", o.pairs, "Ground-truth pairs (sample format, no targets)")->required();
  pre->add_option("--dev-pairs", o.dev_pairs, "Held-out pairs for matching accuracy");
  pre->add_option("--out", o.ckpt_out, "Checkpoint output")->required();
  pre->add_option("--history", o.history_out, "History CSV");
  o.model_flags[0].add(pre);
  o.train_flags[0].add(pre);
  add_force(pre, o.force);

  auto* tr = sub("train", "Train the QE model on labeled samples", cmd_train);
  tr->add_option("--train", o.train_in, "Training samples")->required();
  tr->add_option("--dev", o.dev_in, "Dev samples for model selection")->required();
  tr->add_option("--out", o.ckpt_out, "Best checkpoint output")->required();
  tr->add_option("--latest", o.latest_out, "Final-step checkpoint output");
  tr->add_option("--history", o.history_out, "History CSV");
  o.model_flags[1].add(tr);
  o.train_flags[1].add(tr);
  add_force(tr, o.force);

  auto* grid = sub("grid", "Learning-rate by label-count grid search", cmd_grid);
  grid->add_option("--train", o.train_in, "Training samples")->required();
  grid->add_option("--dev", o.dev_in, "Dev samples")->required();
  grid->add_option("--test", o.test_in, "Test samples");
  grid->add_option("--lrs", o.lrs, "Learning rates")->delimiter(',')->capture_default_str();
  grid->add_option("--ks", o.ks, "Label counts K")->delimiter(',')->capture_default_str()->check(CLI::NonNegativeNumber);
  grid->add_option("--out-csv", o.grid_csv, "Grid table CSV")->required();
  grid->add_option("--out-json", o.grid_json, "Grid table JSON");
  grid->add_option("--out", o.ckpt_out, "Checkpoint of the selected cell");
  o.model_flags[2].add(grid, false);
  o.train_flags[2].add(grid, false);
  add_force(grid, o.force);

  auto* ev = sub("eval", "Spearman and MSE of a checkpoint on labeled samples", cmd_eval);
  ev->add_option("--model", o.model_path, "Checkpoint")->required();
  ev->add_option("--in", o.data_in, "Labeled samples")->required();
  ev->add_option("--out", o.report_out, "Report JSON");
  add_force(ev, o.force);

  auto* sc = sub("score", "Score samples with a checkpoint", cmd_score);
  sc->add_option("--model", o.model_path, "Checkpoint")->required();
  sc->add_option("--in", o.data_in, "Samples")->required();
  sc->add_option("--out", o.scores_out, "Scores jsonl")->required();
  add_force(sc, o.force);

  auto* pr = sub("pr-curve", "Precision/recall of ExtGood captions over score thresholds", cmd_pr_curve);
  pr->add_option("--scores", o.pr_scores, "Scores jsonl from `qe score`")->required();
  pr->add_option("--annotations", o.pr_annotations, "Fine-grained annotation jsonl")->required();
  pr->add_option("--out", o.pr_out, "Curve CSV")->required();
  pr->add_option("--summary", o.pr_summary, "Summary JSON (default <out>.summary.json)");
  pr->add_option("--svg", o.pr_svg, "SVG plot");
  add_force(pr, o.force);

  auto* flt = sub("filter", "Partition samples by score > threshold", cmd_filter);
  flt->add_option("--model", o.model_path, "Checkpoint")->required();
  flt->add_option("--in", o.data_in, "Samples")->required();
  flt->add_option("--threshold", o.threshold, "Serve when score > threshold")->required();
  flt->add_option("--kept", o.kept_out, "Served samples")->required();
  flt->add_option("--rejected", o.rejected_out, "Rejected samples")->required();
  add_force(flt, o.force);

  auto* op = sub("operating-point", "Largest-recall curve point reaching a target precision", cmd_operating_point);
  op->add_option("--curve", o.curve_in, "Curve CSV from `qe pr-curve`")->required();
  op->add_option("--target-precision", o.target_precision, "Target precision")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  op->add_option("--out", o.op_out, "Result JSON");
  add_force(op, o.force);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "qe: " << e.what() << "\n";
    err << "run 'qe --help' for usage\n";
    return kExitUsage;
  }

  for (auto& [s, handler] : commands) {
    if (!s->parsed()) continue;
    Run r(s->get_name(), s);
    r.set_force(o.force);
    const std::size_t slot = s == pre ? 0 : s == tr ? 1 : 2;
    o.model = &o.model_flags[slot];
    o.train = &o.train_flags[slot];
    try {
      handler(o, r, out, err);
      return kExitOk;
    } catch (const UsageError& e) {
      err << "qe " << s->get_name() << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const Error& e) {
      err << "qe " << s->get_name() << ": " << e.what() << "\n";
      return kExitData;
    } catch (const std::exception& e) {
      err << "qe " << s->get_name() << ": " << e.what() << "\n";
      return kExitData;
    }
  }
  err << "qe: no subcommand given\n";
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace capqe::cli
