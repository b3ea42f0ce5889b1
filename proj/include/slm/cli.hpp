#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "slm/csv.hpp"
#include "slm/ensemble.hpp"
#include "slm/generators.hpp"
#include "slm/metrics.hpp"
#include "slm/serialize.hpp"
#include "slm/split.hpp"

namespace slm::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kTraining = 3 };

class UsageError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// ---------------------------------------------------------------------------
// Settings: every tunable of a training run, with defaults.

struct Settings {
  std::string model = "slm-tree";
  TreeParams tree;
  std::size_t trees = 20;
  std::size_t rounds = 100;
  double learning_rate = 0.1;
  double lambda = 0.0;
  double base_score = 0.0;
  bool bagging = false;
  bool classic_splits = false;
  std::uint64_t seed = 0;
  double train_fraction = 0.0;  // 0: train on everything, no holdout split
  std::uint64_t split_seed = 0;
  bool stratify = true;
};

struct ModelSpec {
  ModelKind kind = ModelKind::tree;
  Task task = Task::classification;
};

inline ModelSpec parse_model_name(std::string_view name) {
  const auto dash = name.find('-');
  if (dash != std::string_view::npos) {
    const auto family = name.substr(0, dash);
    const auto variant = name.substr(dash + 1);
    if ((family == "slm" || family == "slr") && (variant == "tree" || variant == "forest" || variant == "boost"))
      return {parse_model_kind(variant), family == "slm" ? Task::classification : Task::regression};
  }
  throw UsageError("unknown model '" + std::string(name) +
                   "' (expected slm-tree, slm-forest, slm-boost, slr-tree, slr-forest or slr-boost)");
}

namespace detail {

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const auto n = parse_integer(v);
  if (!n || *n < 0) throw UsageError(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

inline double to_real(const std::string& key, const std::string& v) {
  const auto x = parse_real(v);
  if (!x) throw UsageError(key + ": expected a number, got '" + v + "'");
  return *x;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw UsageError(key + ": expected a seed, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

}  // namespace detail

struct Knob {
  std::string name;
  std::string help;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

#define SLM_COUNT_KNOB(key, help, field) \
  Knob{key, help, [](const Settings& s) { return std::to_string(s.field); }, \
       [](Settings& s, const std::string& v) { s.field = detail::to_count(key, v); }}
#define SLM_REAL_KNOB(key, help, field) \
  Knob{key, help, [](const Settings& s) { return format_real(s.field); }, \
       [](Settings& s, const std::string& v) { s.field = detail::to_real(key, v); }}
#define SLM_BOOL_KNOB(key, help, field) \
  Knob{key, help, [](const Settings& s) { return detail::from_bool(s.field); }, \
       [](Settings& s, const std::string& v) { s.field = detail::to_bool(key, v); }}
#define SLM_SEED_KNOB(key, help, field) \
  Knob{key, help, [](const Settings& s) { return std::to_string(s.field); }, \
       [](Settings& s, const std::string& v) { s.field = detail::to_u64(key, v); }}

/// The hyperparameter table shared by flags, config files and suites.
inline const std::vector<Knob>& knobs() {
  static const std::vector<Knob> table = {
      Knob{"model", "slm-tree | slm-forest | slm-boost | slr-tree | slr-forest | slr-boost",
           [](const Settings& s) { return s.model; },
           [](Settings& s, const std::string& v) {
             parse_model_name(v);
             s.model = v;
           }},
      SLM_COUNT_KNOB("d0", "retained input dimensions (0 keeps all)", tree.projection.d0),
      SLM_COUNT_KNOB("p", "sampled projection candidates per node", tree.projection.p),
      SLM_COUNT_KNOB("r", "active coefficients per candidate", tree.projection.r),
      SLM_REAL_KNOB("alpha", "envelope decay", tree.projection.alpha),
      SLM_REAL_KNOB("a-int", "envelope scale", tree.projection.a_int),
      SLM_REAL_KNOB("beta", "selection-probability decay", tree.projection.beta),
      SLM_COUNT_KNOB("q-max", "hyperplanes per node", tree.projection.q_max),
      SLM_REAL_KNOB("theta-minimax", "cosine bound for extra hyperplanes", tree.projection.theta_minimax),
      SLM_COUNT_KNOB("exhaustive-limit", "enumerate the candidate space up to this size", tree.projection.exhaustive_limit),
      SLM_COUNT_KNOB("bins", "threshold bins per projection", tree.bins),
      SLM_COUNT_KNOB("max-depth", "maximum leaf depth", tree.max_depth),
      SLM_COUNT_KNOB("min-samples", "smallest node that may split", tree.min_samples),
      SLM_REAL_KNOB("min-loss", "node loss below which splitting stops", tree.min_loss),
      SLM_COUNT_KNOB("trees", "forest size", trees),
      SLM_COUNT_KNOB("rounds", "boosting rounds", rounds),
      SLM_REAL_KNOB("learning-rate", "boosting shrinkage", learning_rate),
      SLM_REAL_KNOB("lambda", "leaf weight regularizer", lambda),
      SLM_REAL_KNOB("base-score", "initial boosting score", base_score),
      SLM_BOOL_KNOB("bagging", "bootstrap rows per forest tree", bagging),
      SLM_BOOL_KNOB("classic-splits", "boost with mse splits on the negative gradient", classic_splits),
      SLM_SEED_KNOB("seed", "training seed", seed),
      SLM_REAL_KNOB("train-fraction", "hold out 1 - fraction for testing (0: no split)", train_fraction),
      SLM_SEED_KNOB("split-seed", "seed of the train/test split", split_seed),
      SLM_BOOL_KNOB("stratify", "stratify the split by class", stratify),
  };
  return table;
}

#undef SLM_COUNT_KNOB
#undef SLM_REAL_KNOB
#undef SLM_BOOL_KNOB
#undef SLM_SEED_KNOB

inline const Knob* find_knob(std::string_view name) {
  for (const auto& k : knobs())
    if (k.name == name) return &k;
  return nullptr;
}

inline void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  const auto* k = find_knob(key);
  if (!k) throw UsageError("unknown setting '" + key + "'");
  k->set(s, value);
}

inline std::vector<std::pair<std::string, std::string>> settings_echo(const Settings& s) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : knobs()) out.emplace_back(k.name, k.get(s));
  return out;
}

// ---------------------------------------------------------------------------
// Training and evaluation shared by train and benchmark.

inline TreeParams tree_params_for(const Settings& s, Task task) {
  auto tp = s.tree;
  tp.loss = task == Task::classification ? LossKind::entropy : LossKind::mse;
  tp.lambda = s.lambda;
  return tp;
}

inline FitResult fit_settings(const Settings& s, const Dataset& train, const Dataset* holdout,
                              std::size_t threads = 0) {
  const auto spec = parse_model_name(s.model);
  if (spec.task != train.task)
    throw UsageError("task mismatch: model " + s.model + " needs " + std::string(to_string(spec.task)) +
                     " data, found " + std::string(to_string(train.task)));
  const auto tp = tree_params_for(s, spec.task);
  switch (spec.kind) {
    case ModelKind::tree: return {fit_tree_model(train, tp, s.seed), {}};
    case ModelKind::forest: {
      ForestParams fp;
      fp.n_trees = s.trees;
      fp.tree = tp;
      fp.seed = s.seed;
      fp.bagging = s.bagging;
      fp.threads = threads;
      return fit_forest(train, fp, holdout);
    }
    case ModelKind::boost: {
      BoostParams bp;
      bp.n_rounds = s.rounds;
      bp.learning_rate = s.learning_rate;
      bp.lambda = s.lambda;
      bp.tree = tp;
      bp.base_score = s.base_score;
      bp.seed = s.seed;
      bp.classic_splits = s.classic_splits;
      return fit_boost(train, bp, holdout);
    }
  }
  return {};
}

/// Accuracy (classification) or RMSE (regression) of a model on a dataset.
inline double evaluate(const EnsembleModel& model, const Dataset& ds) {
  if (ds.task == Task::classification) {
    std::vector<int> pred(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) pred[i] = predict_model(model, ds.features.row(i)).label;
    return accuracy(pred, ds.labels);
  }
  std::vector<double> pred(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pred[i] = predict_model(model, ds.features.row(i)).value;
  return rmse(pred, ds.values);
}

inline std::string metric_name(Task task) { return task == Task::classification ? "accuracy" : "rmse"; }

inline nlohmann::ordered_json stats_json(const EnsembleModel& model) {
  const auto st = model_stats(model);
  nlohmann::ordered_json j;
  j["trees"] = st.trees;
  j["param_count"] = st.param_count;
  j["depth"] = st.depth;
  j["partitions"] = st.partitions;
  j["leaves"] = st.leaves;
  if (model.trees.size() == 1) j["level_counts"] = tree_stats(model.trees.front()).level_counts;
  return j;
}

inline std::vector<std::string> echo_lines(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv) out.push_back(k + " = " + v);
  return out;
}

inline std::string quote_if_needed(const std::string& v) {
  if (v.find_first_of(" \t;#\"") == std::string::npos && !v.empty()) return v;
  std::ostringstream os;
  os << std::quoted(v);
  return os.str();
}

// ---------------------------------------------------------------------------
// Generators

struct GenSpec {
  std::string kind = "moons2";
  std::size_t n = 500;  // per class for the 2D sets, total for friedman
  double noise = 0.2;   // boundary fraction (2D) or target noise std (friedman)
  std::size_t features = 10;
  bool unit_ranges = false;
  std::uint64_t seed = 0;

  std::vector<std::pair<std::string, std::string>> echo() const {
    return {{"kind", kind},
            {"n", std::to_string(n)},
            {"noise", format_real(noise)},
            {"features", std::to_string(features)},
            {"unit-ranges", detail::from_bool(unit_ranges)},
            {"seed", std::to_string(seed)}};
  }
};

inline Dataset generate(const GenSpec& g) {
  if (g.kind == "moons2") return gen_moons(2, g.n, g.noise, g.seed);
  if (g.kind == "moons4") return gen_moons(4, g.n, g.noise, g.seed);
  if (g.kind == "circle-ring") return gen_circle_and_ring(g.n, g.noise, g.seed);
  if (g.kind == "friedman1" || g.kind == "friedman2" || g.kind == "friedman3") {
    FriedmanOptions opt;
    opt.noise = g.noise;
    opt.ranges = g.unit_ranges ? FriedmanRanges::unit : FriedmanRanges::standard;
    return gen_friedman(g.kind.back() - '0', g.n, g.features, g.seed, opt);
  }
  throw UsageError("unknown generator '" + g.kind + "' (expected moons2, moons4, circle-ring, friedman1, friedman2 or friedman3)");
}

// ---------------------------------------------------------------------------
// Data sources

struct DataSource {
  std::string path;
  std::string target;  // column name or zero-based index; empty: last column
  std::string task;    // empty: implied by the model
  bool no_header = false;
};

inline TargetColumn target_column(const std::string& t) {
  if (t.empty()) return kLastColumn;
  if (const auto idx = parse_integer(t); idx && *idx >= 0) return static_cast<std::size_t>(*idx);
  return t;
}

inline Dataset load_source(const DataSource& src, Task task) {
  CsvReadOptions opt;
  opt.target = target_column(src.target);
  opt.task = task;
  opt.has_header = !src.no_header;
  return load_csv(src.path, opt);
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fixed(double v, int digits = 6) { return format_fixed(v, digits); }

inline std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::ostringstream os;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line += r[c];
      if (c + 1 < r.size()) line += std::string(width[c] - r[c].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

inline void write_json_block(std::ostream& out, const nlohmann::ordered_json& j) {
  out << "--- begin metrics json ---\n" << j.dump(2) << "\n--- end metrics json ---\n";
}

/// Extracts the machine-readable block of a report document.
inline nlohmann::ordered_json read_json_block(std::istream& in) {
  std::string line, body;
  bool inside = false;
  while (std::getline(in, line)) {
    if (line == "--- begin metrics json ---") {
      inside = true;
    } else if (line == "--- end metrics json ---") {
      return nlohmann::ordered_json::parse(body);
    } else if (inside) {
      body += line + '\n';
    }
  }
  throw FormatError("report has no metrics block");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

// Registers one string option per hyperparameter; values are applied after
// parsing so config files and flags share a single code path.
inline std::map<std::string, std::string>& add_knob_options(CLI::App& app,
                                                            std::map<std::string, std::string>& raw) {
  for (const auto& k : knobs()) app.add_option("--" + k.name, raw[k.name], k.help);
  return raw;
}

// Defaults, then the config file, then flags given on the command line.
inline Settings settings_from(const CLI::App& app, const std::map<std::string, std::string>& raw,
                              const std::vector<std::pair<std::string, std::string>>& file) {
  Settings s;
  for (const auto& [k, v] : file)
    if (app.count("--" + k) == 0) apply_setting(s, k, v);
  for (const auto& k : knobs())
    if (app.count("--" + k.name) > 0) k.set(s, raw.at(k.name));
  return s;
}

inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvErrorKind::not_found, 0, "", path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError(path + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    if (!it.parents.empty()) throw UsageError(path + ": sections are not supported here ('" + it.name + "')");
    std::string v;
    for (const auto& x : it.inputs) v += (v.empty() ? "" : " ") + x;
    out.emplace_back(it.name, v);
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> source_echo(const DataSource& src,
                                                                    const std::string& test_path) {
  std::vector<std::pair<std::string, std::string>> e = {
      {"data", src.path}, {"target", src.target}, {"task", src.task}, {"no-header", from_bool(src.no_header)}};
  if (!test_path.empty()) e.emplace_back("test", test_path);
  return e;
}

}  // namespace detail

struct CommandContext {
  std::ostream& out;
  std::ostream& err;
};

inline int cmd_gen_data(const GenSpec& g, const std::string& output, CommandContext& ctx) {
  const auto ds = generate(g);
  std::vector<std::string> comments = {"slm gen-data"};
  for (const auto& line : echo_lines(g.echo())) comments.push_back(line);
  std::ostringstream os;
  write_csv(ds, os, comments);
  write_text_file(output, os.str());
  ctx.out << "L=" << ds.size() << " D=" << ds.dims() << " K=" << ds.num_classes << '\n';
  return kOk;
}

struct TrainRequest {
  Settings settings;
  DataSource data;
  std::string test_path;
  std::string model_path;
  std::string report_path;  // empty: <model>.report.txt
  std::string curve_path;   // empty: <model>.curve.csv
  std::size_t threads = 0;
};

inline int cmd_train(const TrainRequest& req, CommandContext& ctx) {
  const auto& s = req.settings;
  const auto spec = parse_model_name(s.model);
  const Task task = req.data.task.empty() ? spec.task : parse_task(req.data.task);
  if (task != spec.task)
    throw UsageError("task mismatch: model " + s.model + " cannot train on " + std::string(to_string(task)) + " data");

  const Dataset all = load_source(req.data, task);
  Dataset train = all;
  std::optional<Dataset> test;
  if (!req.test_path.empty()) {
    DataSource t = req.data;
    t.path = req.test_path;
    test = load_source(t, task);
  } else if (s.train_fraction > 0.0) {
    auto [tr, te] = train_test_split(all, SplitSpec{s.train_fraction, s.split_seed, s.stratify});
    train = std::move(tr);
    test = std::move(te);
  }
  if (test && test->dims() != train.dims())
    throw UsageError("test data has " + std::to_string(test->dims()) + " features, training data has " +
                     std::to_string(train.dims()));

  DataSource resolved = req.data;
  resolved.task = to_string(task);
  auto config = detail::source_echo(resolved, req.test_path);
  for (auto& kv : settings_echo(s)) config.push_back(kv);

  const auto start = std::chrono::steady_clock::now();
  auto fit = fit_settings(s, train, test ? &*test : nullptr, req.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fit.model.metadata = config;

  save_model(fit.model, req.model_path);
  const auto comments = echo_lines(config);
  std::string curve_path;
  if (spec.kind != ModelKind::tree) {
    curve_path = req.curve_path.empty() ? req.model_path + ".curve.csv" : req.curve_path;
    export_learning_curve(fit.curve, curve_path, comments);
  }

  const double train_metric = evaluate(fit.model, train);
  nlohmann::ordered_json j;
  j["command"] = "train";
  j["model"] = s.model;
  j["task"] = to_string(task);
  j["metric"] = metric_name(task);
  j["train_samples"] = train.size();
  j["train"] = train_metric;
  if (test) {
    j["test_samples"] = test->size();
    j["test"] = evaluate(fit.model, *test);
  }
  j["stats"] = stats_json(fit.model);
  j["wall_time_s"] = seconds;
  j["model_file"] = req.model_path;
  if (!curve_path.empty()) j["curve_file"] = curve_path;
  for (const auto& [k, v] : config) j["config"][k] = v;

  std::ostringstream doc;
  doc << "slm train report\n\n";
  std::vector<std::vector<std::string>> rows = {{"", "train", "test"},
                                                {metric_name(task), fixed(train_metric),
                                                 test ? fixed(j["test"].get<double>()) : "-"},
                                                {"samples", std::to_string(train.size()),
                                                 test ? std::to_string(test->size()) : "-"}};
  doc << aligned_table(rows) << '\n';
  const auto st = model_stats(fit.model);
  doc << aligned_table({{"model", s.model},
                        {"trees", std::to_string(st.trees)},
                        {"param_count", std::to_string(st.param_count)},
                        {"depth", std::to_string(st.depth)},
                        {"partitions", std::to_string(st.partitions)},
                        {"leaves", std::to_string(st.leaves)},
                        {"wall_time_s", fixed(seconds, 3)}})
      << '\n';
  doc << "config\n";
  for (const auto& line : comments) doc << "  " << line << '\n';
  doc << '\n';
  write_json_block(doc, j);
  const auto report_path = req.report_path.empty() ? req.model_path + ".report.txt" : req.report_path;
  write_text_file(report_path, doc.str());

  ctx.out << s.model << ' ' << metric_name(task) << " train " << fixed(train_metric);
  if (test) ctx.out << " test " << fixed(j["test"].get<double>());
  ctx.out << " param_count " << st.param_count << '\n';
  return kOk;
}

struct PredictRequest {
  std::string model_path;
  DataSource data;
  std::string output;  // "-" or empty: standard output
};

inline int cmd_predict(const PredictRequest& req, CommandContext& ctx) {
  const auto model = load_model_file(req.model_path);
  if (!req.data.task.empty() && parse_task(req.data.task) != model.task)
    throw UsageError("task mismatch: model is " + std::string(to_string(model.task)) + ", requested " +
                     req.data.task);
  const auto table = load_table(req.data.path, !req.data.no_header);
  const std::size_t width = table.cells.cols();
  const std::size_t d = model.num_features;

  // Either exactly D feature columns, or D features plus the target.
  std::optional<Dataset> labelled;
  if (width == d + 1) {
    labelled = load_source(req.data, model.task);
  } else if (width != d) {
    throw UsageError("dimension mismatch: model expects D=" + std::to_string(d) + " features, data has " +
                     std::to_string(width) + " columns");
  }
  const Matrix& x = labelled ? labelled->features : table.cells;

  std::ostringstream os;
  os << "row,prediction";
  if (model.task == Task::classification)
    for (int k = 0; k < model.num_classes; ++k) os << ",p" << k;
  os << '\n';
  std::vector<int> labels;
  std::vector<double> values;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto p = predict_model(model, x.row(i));
    os << i << ',';
    if (model.task == Task::classification) {
      os << p.label;
      for (double v : p.probabilities) os << ',' << format_real(v);
      labels.push_back(p.label);
    } else {
      os << format_real(p.value);
      values.push_back(p.value);
    }
    os << '\n';
  }
  if (req.output.empty() || req.output == "-")
    ctx.out << os.str();
  else
    write_text_file(req.output, os.str());

  if (labelled) {
    const double m = model.task == Task::classification ? accuracy(labels, labelled->labels)
                                                        : rmse(values, labelled->values);
    (req.output.empty() || req.output == "-" ? ctx.err : ctx.out)
        << metric_name(model.task) << ' ' << fixed(m) << " rows " << x.rows() << '\n';
  }
  return kOk;
}

inline int cmd_inspect(const std::string& model_path, bool config_only, CommandContext& ctx) {
  const auto model = load_model_file(model_path);
  if (config_only) {
    for (const auto& [k, v] : model.metadata) ctx.out << k << " = " << quote_if_needed(v) << '\n';
    return kOk;
  }
  const auto st = model_stats(model);
  ctx.out << aligned_table({{"kind", std::string(to_string(model.kind))},
                            {"task", std::string(to_string(model.task))},
                            {"classes", std::to_string(model.num_classes)},
                            {"features", std::to_string(model.num_features)},
                            {"trees", std::to_string(st.trees)},
                            {"param_count", std::to_string(st.param_count)},
                            {"depth", std::to_string(st.depth)},
                            {"partitions", std::to_string(st.partitions)},
                            {"leaves", std::to_string(st.leaves)}});
  std::vector<std::vector<std::string>> rows = {{"tree", "seed", "d0", "depth", "partitions", "leaves", "param_count", "level_counts"}};
  for (std::size_t i = 0; i < model.trees.size(); ++i) {
    const auto ts = tree_stats(model.trees[i]);
    std::string levels;
    for (auto c : ts.level_counts) levels += (levels.empty() ? "" : " ") + std::to_string(c);
    rows.push_back({std::to_string(i), i < model.tree_seeds.size() ? std::to_string(model.tree_seeds[i]) : "-",
                    std::to_string(model.trees[i].subspace.size()), std::to_string(ts.depth),
                    std::to_string(ts.partitions), std::to_string(ts.leaves),
                    std::to_string(param_count(model.trees[i])), levels});
  }
  ctx.out << '\n' << aligned_table(rows);
  return kOk;
}

// ---------------------------------------------------------------------------
// Benchmark suites

struct SuiteDataset {
  std::string name;
  std::optional<GenSpec> generator;
  DataSource source;
  std::vector<std::string> models;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> model_overrides;
  std::map<std::string, std::vector<std::pair<std::string, std::vector<std::string>>>> grids;
};

struct Suite {
  std::vector<std::string> models = {"slm-tree"};
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<SuiteDataset> datasets;
  std::vector<std::tuple<std::string, std::string, double>> baselines;  // dataset, label, metric
  std::size_t threads = 0;
};

namespace detail {

inline std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
  return s;
}

inline SuiteDataset& dataset_entry(Suite& suite, const std::string& name) {
  for (auto& d : suite.datasets)
    if (d.name == name) return d;
  suite.datasets.push_back({});
  suite.datasets.back().name = name;
  return suite.datasets.back();
}

inline void dataset_key(SuiteDataset& d, const std::string& key, const std::vector<std::string>& in) {
  const auto value = joined(in);
  auto gen = [&]() -> GenSpec& {
    if (!d.generator) d.generator = GenSpec{};
    return *d.generator;
  };
  if (key == "generator") gen().kind = value;
  else if (key == "n") gen().n = to_count(key, value);
  else if (key == "noise") gen().noise = to_real(key, value);
  else if (key == "features") gen().features = to_count(key, value);
  else if (key == "unit-ranges") gen().unit_ranges = to_bool(key, value);
  else if (key == "gen-seed") gen().seed = to_u64(key, value);
  else if (key == "path") d.source.path = value;
  else if (key == "target") d.source.target = value;
  else if (key == "task") d.source.task = value;
  else if (key == "no-header") d.source.no_header = to_bool(key, value);
  else if (key == "models") d.models = in;
  else if (find_knob(key)) d.overrides.emplace_back(key, value);
  else throw UsageError("dataset " + d.name + ": unknown key '" + key + "'");
}

}  // namespace detail

/// Parses a suite document. Sections:
///   [suite]                   models, threads, and defaults for any setting
///   [dataset.NAME]            generator (+ n, noise, features, unit-ranges, gen-seed)
///                             or path (+ target, task, no-header); models; settings
///   [dataset.NAME.MODEL]      settings for one model on one dataset
///   [grid.NAME.MODEL]         setting = v1 v2 ...; one row per combination
///   [baselines.NAME]          label = metric, copied into the report
inline Suite parse_suite(std::istream& in) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError(std::string("suite: ") + e.what());
  }
  Suite suite;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    const auto& sec = it.parents;
    const auto value = detail::joined(it.inputs);
    const auto where = [&] {
      std::string s;
      for (const auto& p : sec) s += (s.empty() ? "" : ".") + p;
      return s.empty() ? std::string("top level") : "[" + s + "]";
    };
    if (sec.size() == 1 && sec[0] == "suite") {
      if (it.name == "models") suite.models = it.inputs;
      else if (it.name == "threads") suite.threads = detail::to_count("threads", value);
      else if (find_knob(it.name)) suite.overrides.emplace_back(it.name, value);
      else throw UsageError("suite: unknown key '" + it.name + "'");
    } else if (sec.size() == 2 && sec[0] == "dataset") {
      detail::dataset_key(detail::dataset_entry(suite, sec[1]), it.name, it.inputs);
    } else if (sec.size() == 3 && sec[0] == "dataset") {
      parse_model_name(sec[2]);
      if (!find_knob(it.name) || it.name == "model") throw UsageError(where() + ": unknown setting '" + it.name + "'");
      detail::dataset_entry(suite, sec[1]).model_overrides[sec[2]].emplace_back(it.name, value);
    } else if (sec.size() == 3 && sec[0] == "grid") {
      parse_model_name(sec[2]);
      if (!find_knob(it.name) || it.name == "model") throw UsageError(where() + ": unknown setting '" + it.name + "'");
      detail::dataset_entry(suite, sec[1]).grids[sec[2]].emplace_back(it.name, it.inputs);
    } else if (sec.size() == 2 && sec[0] == "baselines") {
      suite.baselines.emplace_back(sec[1], it.name, detail::to_real(it.name, value));
    } else {
      throw UsageError("suite: unexpected entry '" + it.name + "' in " + where());
    }
  }
  for (const auto& d : suite.datasets)
    if (d.generator.has_value() == !d.source.path.empty())
      throw UsageError("dataset " + d.name + ": give exactly one of generator or path");
  return suite;
}

struct BenchmarkCell {
  std::string dataset;
  std::string model;
  std::string label;  // model plus grid values
  std::string file_stem;
  Settings settings;
  std::vector<std::pair<std::string, std::string>> config;
};

struct CellResult {
  bool ok = false;
  std::string reason;
  std::string metric;
  double train = 0.0;
  double test = 0.0;
  ModelStats stats;
  double seconds = 0.0;
  std::string model_text;
  std::string curve_text;
  std::vector<std::pair<std::string, std::string>> config;  // effective settings
};

namespace detail {

inline std::string file_safe(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

inline std::vector<BenchmarkCell> expand_cells(const Suite& suite) {
  std::vector<BenchmarkCell> cells;
  for (const auto& d : suite.datasets) {
    const auto& models = d.models.empty() ? suite.models : d.models;
    for (const auto& m : models) {
      std::vector<std::pair<std::string, std::string>> base = suite.overrides;
      base.insert(base.end(), d.overrides.begin(), d.overrides.end());
      base.emplace_back("model", m);
      if (auto it = d.model_overrides.find(m); it != d.model_overrides.end())
        base.insert(base.end(), it->second.begin(), it->second.end());
      std::vector<std::vector<std::pair<std::string, std::string>>> combos = {{}};
      if (auto g = d.grids.find(m); g != d.grids.end()) {
        for (const auto& [key, values] : g->second) {
          std::vector<std::vector<std::pair<std::string, std::string>>> next;
          for (const auto& c : combos)
            for (const auto& v : values) {
              next.push_back(c);
              next.back().emplace_back(key, v);
            }
          combos = std::move(next);
        }
      }
      for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        BenchmarkCell cell;
        cell.dataset = d.name;
        cell.model = m;
        cell.label = m;
        std::string grid_label;
        for (const auto& [k, v] : combos[ci]) grid_label += (grid_label.empty() ? "" : ",") + k + "=" + v;
        if (!grid_label.empty()) cell.label += "[" + grid_label + "]";
        cell.file_stem = file_safe(d.name) + "__" + file_safe(m) + (combos.size() > 1 ? "__g" + std::to_string(ci) : "");
        cell.config = base;
        cell.config.insert(cell.config.end(), combos[ci].begin(), combos[ci].end());
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

inline std::vector<std::pair<std::string, std::string>> dataset_echo(const SuiteDataset& d) {
  std::vector<std::pair<std::string, std::string>> e = {{"dataset", d.name}};
  if (d.generator) {
    for (auto [k, v] : d.generator->echo()) e.emplace_back(k == "seed" ? "gen-seed" : k == "kind" ? "generator" : k, v);
  } else {
    e.emplace_back("path", d.source.path);
    e.emplace_back("target", d.source.target);
    e.emplace_back("task", d.source.task);
    e.emplace_back("no-header", from_bool(d.source.no_header));
  }
  return e;
}

inline CellResult run_cell(const BenchmarkCell& cell, const SuiteDataset& d) {
  CellResult r;
  try {
    Settings s;
    s.train_fraction = 0.6;
    for (const auto& [k, v] : cell.config) apply_setting(s, k, v);
    const auto spec = parse_model_name(s.model);
    Dataset all;
    if (d.generator) {
      all = generate(*d.generator);
    } else {
      const Task task = d.source.task.empty() ? spec.task : parse_task(d.source.task);
      all = load_source(d.source, task);
    }
    Dataset train = all;
    std::optional<Dataset> test;
    if (s.train_fraction > 0.0) {
      auto [tr, te] = train_test_split(all, SplitSpec{s.train_fraction, s.split_seed, s.stratify});
      train = std::move(tr);
      test = std::move(te);
    }
    auto echo = dataset_echo(d);
    for (auto& kv : settings_echo(s)) echo.push_back(kv);

    const auto start = std::chrono::steady_clock::now();
    auto fit = fit_settings(s, train, test ? &*test : nullptr, 1);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fit.model.metadata = echo;
    r.config = echo;
    r.metric = metric_name(train.task);
    r.train = evaluate(fit.model, train);
    r.test = test ? evaluate(fit.model, *test) : r.train;
    r.stats = model_stats(fit.model);
    r.model_text = save_model(fit.model);
    if (spec.kind != ModelKind::tree) {
      std::ostringstream os;
      export_learning_curve(fit.curve, os, echo_lines(echo));
      r.curve_text = os.str();
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.reason = e.what();
    std::replace(r.reason.begin(), r.reason.end(), '\n', ' ');
    std::replace(r.reason.begin(), r.reason.end(), ',', ';');
  }
  return r;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace detail

/// Runs every (dataset, model) cell of a suite and writes report.txt,
/// report.csv, models/, curves/ and the timing sidecar timings.csv into
/// `out_dir`. Everything except timings.csv is a deterministic function of
/// the suite.
inline int cmd_benchmark(const Suite& suite, const std::filesystem::path& out_dir, std::size_t threads,
                         CommandContext& ctx) {
  const auto cells = detail::expand_cells(suite);
  std::vector<CellResult> results(cells.size());
  const auto dataset_of = [&](const std::string& name) -> const SuiteDataset& {
    return *std::find_if(suite.datasets.begin(), suite.datasets.end(), [&](const auto& d) { return d.name == name; });
  };

  std::size_t workers = threads ? threads : (suite.threads ? suite.threads : std::max(1u, std::thread::hardware_concurrency()));
  workers = std::max<std::size_t>(1, std::min(workers, cells.size()));
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < cells.size(); i += workers) results[i] = detail::run_cell(cells[i], dataset_of(cells[i].dataset));
    }));
  for (auto& j : jobs) j.get();

  std::filesystem::create_directories(out_dir / "models");
  std::filesystem::create_directories(out_dir / "curves");

  std::vector<std::vector<std::string>> table = {
      {"dataset", "model", "metric", "train", "test", "param_count", "depth", "partitions", "trees", "status"}};
  std::ostringstream csv, timings;
  csv << "dataset,model,metric,train,test,param_count,depth,partitions,trees,status\n";
  timings << "dataset,model,seconds\n";
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& r = results[i];
    nlohmann::ordered_json j;
    j["dataset"] = c.dataset;
    j["model"] = c.label;
    if (r.ok) {
      const std::vector<std::string> row = {c.dataset, c.label, r.metric, fixed(r.train), fixed(r.test),
                                            std::to_string(r.stats.param_count), std::to_string(r.stats.depth),
                                            std::to_string(r.stats.partitions), std::to_string(r.stats.trees), "ok"};
      table.push_back(row);
      for (std::size_t k = 0; k < row.size(); ++k) csv << (k ? "," : "") << detail::csv_field(row[k]);
      csv << '\n';
      write_text_file(out_dir / "models" / (c.file_stem + ".slm"), r.model_text);
      if (!r.curve_text.empty()) write_text_file(out_dir / "curves" / (c.file_stem + ".csv"), r.curve_text);
      j["status"] = "ok";
      j["metric"] = r.metric;
      j["train"] = r.train;
      j["test"] = r.test;
      j["param_count"] = r.stats.param_count;
      j["depth"] = r.stats.depth;
      j["partitions"] = r.stats.partitions;
      j["trees"] = r.stats.trees;
      j["model_file"] = "models/" + c.file_stem + ".slm";
      timings << detail::csv_field(c.dataset) << ',' << detail::csv_field(c.label) << ',' << fixed(r.seconds, 3) << '\n';
    } else {
      const std::string status = "FAIL(" + r.reason + ")";
      table.push_back({c.dataset, c.label, "-", "-", "-", "-", "-", "-", "-", status});
      csv << detail::csv_field(c.dataset) << ',' << detail::csv_field(c.label) << ",,,,,,,," << detail::csv_field(status) << '\n';
      j["status"] = status;
    }
    if (r.ok) {
      for (const auto& [k, v] : r.config) j["config"][k] = v;
    } else {
      for (const auto& [k, v] : detail::dataset_echo(dataset_of(c.dataset))) j["config"][k] = v;
      for (const auto& [k, v] : c.config) j["config"][k] = v;
    }
    rows.push_back(j);
  }
  for (const auto& [ds, label, value] : suite.baselines) {
    table.push_back({ds, label, "external", "-", fixed(value), "-", "-", "-", "-", "baseline"});
    csv << detail::csv_field(ds) << ',' << detail::csv_field(label) << ",external,," << fixed(value) << ",,,,,baseline\n";
    rows.push_back({{"dataset", ds}, {"model", label}, {"status", "baseline"}, {"test", value}});
  }

  std::ostringstream doc;
  doc << "slm benchmark report\n\n" << aligned_table(table) << '\n';
  nlohmann::ordered_json j;
  j["command"] = "benchmark";
  j["rows"] = rows;
  write_json_block(doc, j);
  write_text_file(out_dir / "report.txt", doc.str());
  write_text_file(out_dir / "report.csv", csv.str());
  write_text_file(out_dir / "timings.csv", timings.str());
  ctx.out << aligned_table(table);
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CommandContext ctx{out, err};
  CLI::App app{"Subspace learning machine: oblique trees, forests and boosting"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  GenSpec g;
  std::string gen_out;
  gen->add_option("--kind", g.kind, "moons2 | moons4 | circle-ring | friedman1 | friedman2 | friedman3")->capture_default_str();
  gen->add_option("--n", g.n, "samples per class (2D sets) or in total (friedman)")->capture_default_str();
  gen->add_option("--noise", g.noise, "boundary-noise fraction (2D sets) or target noise std (friedman)")->capture_default_str();
  gen->add_option("--features", g.features, "friedman1 input dimension (> 5)")->capture_default_str();
  gen->add_flag("--unit-ranges", g.unit_ranges, "friedman2/3 inputs uniform on [0,1]");
  gen->add_option("--seed", g.seed, "generator seed")->capture_default_str();
  gen->add_option("-o,--output", gen_out, "output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model and write it with a metrics report");
  std::map<std::string, std::string> train_raw;
  detail::add_knob_options(*train, train_raw);
  TrainRequest treq;
  std::string train_config;
  train->add_option("--config", train_config, "read settings from an INI file (flags override it)");
  train->add_option("--data", treq.data.path, "training CSV");
  train->add_option("--test", treq.test_path, "test CSV (instead of --train-fraction)");
  train->add_option("--target", treq.data.target, "target column name or index (default: last column)");
  train->add_option("--task", treq.data.task, "classification | regression (default: implied by the model)");
  train->add_flag("--no-header", treq.data.no_header, "CSV has no header row");
  train->add_option("-o,--output", treq.model_path, "model file");
  train->add_option("--report", treq.report_path, "metrics report (default: <model>.report.txt)");
  train->add_option("--curve", treq.curve_path, "learning curve CSV (default: <model>.curve.csv)");
  train->add_option("--threads", treq.threads, "forest worker threads (0: all cores)");

  // predict
  auto* pred = app.add_subcommand("predict", "predict with a saved model");
  PredictRequest preq;
  pred->add_option("--model", preq.model_path, "model file")->required();
  pred->add_option("--data", preq.data.path, "input CSV: D feature columns, optionally plus the target")->required();
  pred->add_option("--target", preq.data.target, "target column when present (default: last column)");
  pred->add_option("--task", preq.data.task, "expected task of the model");
  pred->add_flag("--no-header", preq.data.no_header, "CSV has no header row");
  pred->add_option("-o,--output", preq.output, "predictions CSV (default: standard output)");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "run a benchmark suite");
  std::string suite_path, bench_out = "benchmark-out";
  std::size_t bench_threads = 0;
  bench->add_option("--suite", suite_path, "suite INI file")->required();
  bench->add_option("-o,--output", bench_out, "output directory")->capture_default_str();
  bench->add_option("--threads", bench_threads, "parallel cells (0: suite setting or all cores)");

  // inspect
  auto* insp = app.add_subcommand("inspect", "print tree statistics and parameter counts of a model");
  std::string insp_model;
  bool insp_config = false;
  insp->add_option("model", insp_model, "model file")->required();
  insp->add_flag("--config", insp_config, "print only the embedded training configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(g, gen_out, ctx);
    if (train->parsed()) {
      std::vector<std::pair<std::string, std::string>> file, knob_entries;
      if (!train_config.empty()) file = detail::read_config_file(train_config);
      for (const auto& [k, v] : file) {
        const auto given = [&](const char* flag) { return train->count(flag) > 0; };
        if (k == "data") { if (!given("--data")) treq.data.path = v; }
        else if (k == "test") { if (!given("--test")) treq.test_path = v; }
        else if (k == "target") { if (!given("--target")) treq.data.target = v; }
        else if (k == "task") { if (!given("--task")) treq.data.task = v; }
        else if (k == "no-header") { if (!given("--no-header")) treq.data.no_header = detail::to_bool(k, v); }
        else knob_entries.emplace_back(k, v);
      }
      if (treq.data.path.empty()) throw UsageError("train: --data is required");
      if (treq.model_path.empty()) throw UsageError("train: --output is required");
      treq.settings = detail::settings_from(*train, train_raw, knob_entries);
      return cmd_train(treq, ctx);
    }
    if (pred->parsed()) return cmd_predict(preq, ctx);
    if (bench->parsed()) {
      std::ifstream in(suite_path);
      if (!in) throw CsvError(CsvErrorKind::not_found, 0, "", suite_path);
      return cmd_benchmark(parse_suite(in), bench_out, bench_threads, ctx);
    }
    if (insp->parsed()) return cmd_inspect(insp_model, insp_config, ctx);
  } catch (const TrainingError& e) {
    err << "error: training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace slm::cli
