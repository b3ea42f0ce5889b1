#pragma once

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "slm/ensemble.hpp"
#include "slm/error.hpp"
#include "slm/format.hpp"
#include "slm/tree.hpp"

// Plain-text model format. Tokens are whitespace separated, strings are
// quoted, reals carry 17 significant digits so every double survives the
// round trip. Nodes nest: an internal node lists its splits, then one
// `child <bits>` block per nonempty cell, where bit j of <bits> (leftmost
// is split 0) says the cell lies on the >= side of split j.
//
//   slm-model 1
//   kind forest
//   ...
//   tree
//     seed 42
//     node 0 600
//       split 2 1 -3 0.316... -0.948... 0.125 0.61
//       child 0
//         node 1 250
//           leaf counts 2 240 10
//         end
//       ...

namespace slm {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename... Ts>
  void line(const Ts&... parts) {
    out_ << std::string(2 * indent_, ' ');
    bool first = true;
    ((out_ << (first ? "" : " ") << parts, first = false), ...);
    out_ << '\n';
  }
  void push() { ++indent_; }
  void pop() { --indent_; }

 private:
  std::ostream& out_;
  std::size_t indent_ = 0;
};

inline std::string quoted(const std::string& s) {
  std::ostringstream os;
  os << std::quoted(s);
  return os.str();
}

inline std::string bitstring(CellKey key, std::size_t q) {
  std::string s(q, '0');
  for (std::size_t j = 0; j < q; ++j)
    if (key >> j & 1U) s[j] = '1';
  return s;
}

inline void write_params(Writer& w, const TreeParams& tp) {
  const auto& pp = tp.projection;
  w.line("params");
  w.push();
  w.line("max_depth", tp.max_depth);
  w.line("min_samples", tp.min_samples);
  w.line("min_loss", format_real(tp.min_loss));
  w.line("bins", tp.bins);
  w.line("loss", to_string(tp.loss));
  w.line("lambda", format_real(tp.lambda));
  w.line("d0", pp.d0);
  w.line("p", pp.p);
  w.line("r", pp.r);
  w.line("alpha", format_real(pp.alpha));
  w.line("a_int", format_real(pp.a_int));
  w.line("beta", format_real(pp.beta));
  w.line("q_max", pp.q_max);
  w.line("theta_minimax", format_real(pp.theta_minimax));
  w.line("exhaustive_limit", pp.exhaustive_limit);
  w.line("max_zero_redraws", pp.max_zero_redraws);
  w.line("rounds", pp.rounds.size());
  w.push();
  for (const auto& rd : pp.rounds) w.line(format_real(rd.alpha), format_real(rd.beta), rd.r);
  w.pop();
  w.pop();
  w.line("end");
}

inline void write_node(Writer& w, const Tree& tree, std::size_t idx) {
  const auto& node = tree.nodes[idx];
  w.line("node", node.depth, node.n_samples);
  w.push();
  if (node.is_leaf()) {
    if (tree.task == Task::classification) {
      std::ostringstream os;
      os << "counts " << node.histogram.size();
      for (auto c : node.histogram) os << ' ' << c;
      w.line("leaf", os.str());
    } else {
      w.line("leaf value", format_real(node.value));
    }
  } else {
    for (const auto& s : node.splits) {
      std::ostringstream os;
      os << s.coeffs.size();
      for (int c : s.coeffs) os << ' ' << c;
      for (double u : s.unit) os << ' ' << format_real(u);
      os << ' ' << format_real(s.threshold) << ' ' << format_real(s.loss);
      w.line("split", os.str());
    }
    for (const auto& [key, child] : node.children) {
      w.line("child", bitstring(key, node.splits.size()));
      w.push();
      write_node(w, tree, child);
      w.pop();
    }
  }
  w.pop();
  w.line("end");
}

inline void write_tree(Writer& w, const Tree& tree, std::uint64_t seed) {
  w.line("tree");
  w.push();
  w.line("seed", seed);
  w.line("task", to_string(tree.task));
  w.line("classes", tree.num_classes);
  w.line("features", tree.num_features);
  std::ostringstream sub;
  sub << tree.subspace.size();
  for (auto d : tree.subspace) sub << ' ' << d;
  w.line("subspace", sub.str());
  write_params(w, tree.params);
  if (!tree.nodes.empty()) write_node(w, tree, 0);
  w.pop();
  w.line("end");
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw FormatError("unexpected end of model file");
    return s;
  }
  void expect(std::string_view token) {
    const auto s = word();
    if (s != token) throw FormatError("expected '" + std::string(token) + "', found '" + s + "'");
  }
  std::string text() {
    std::string s;
    if (!(in_ >> std::quoted(s))) throw FormatError("unexpected end of model file");
    return s;
  }
  double real() {
    const auto s = word();
    const auto v = parse_real(s);
    if (!v) throw FormatError("malformed real '" + s + "'");
    return *v;
  }
  long long integer() {
    const auto s = word();
    const auto v = parse_integer(s);
    if (!v) throw FormatError("malformed integer '" + s + "'");
    return *v;
  }
  std::size_t count() {
    const auto v = integer();
    if (v < 0) throw FormatError("negative count");
    return static_cast<std::size_t>(v);
  }
  std::uint64_t u64() {
    const auto s = word();
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("malformed seed '" + s + "'");
    return v;
  }
  double keyed_real(std::string_view key) {
    expect(key);
    return real();
  }
  std::size_t keyed_count(std::string_view key) {
    expect(key);
    return count();
  }

 private:
  std::istream& in_;
};

template <typename F>
auto translate(F&& f) {
  try {
    return f();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
}

inline TreeParams read_params(Reader& r) {
  TreeParams tp;
  auto& pp = tp.projection;
  r.expect("params");
  tp.max_depth = r.keyed_count("max_depth");
  tp.min_samples = r.keyed_count("min_samples");
  tp.min_loss = r.keyed_real("min_loss");
  tp.bins = static_cast<int>(r.keyed_count("bins"));
  r.expect("loss");
  tp.loss = translate([&] { return parse_loss_kind(r.word()); });
  tp.lambda = r.keyed_real("lambda");
  pp.d0 = r.keyed_count("d0");
  pp.p = r.keyed_count("p");
  pp.r = r.keyed_count("r");
  pp.alpha = r.keyed_real("alpha");
  pp.a_int = r.keyed_real("a_int");
  pp.beta = r.keyed_real("beta");
  pp.q_max = r.keyed_count("q_max");
  pp.theta_minimax = r.keyed_real("theta_minimax");
  pp.exhaustive_limit = r.keyed_count("exhaustive_limit");
  pp.max_zero_redraws = r.keyed_count("max_zero_redraws");
  const auto n_rounds = r.keyed_count("rounds");
  for (std::size_t i = 0; i < n_rounds; ++i) {
    ProjectionRound rd;
    rd.alpha = r.real();
    rd.beta = r.real();
    rd.r = r.count();
    pp.rounds.push_back(rd);
  }
  r.expect("end");
  return tp;
}

inline std::size_t read_node(Reader& r, Tree& tree) {
  r.expect("node");
  const std::size_t idx = tree.nodes.size();
  tree.nodes.emplace_back();
  tree.nodes[idx].depth = r.count();
  tree.nodes[idx].n_samples = r.count();
  for (;;) {
    const auto tok = r.word();
    if (tok == "end") break;
    if (tok == "leaf") {
      const auto kind = r.word();
      if (kind == "counts") {
        const auto k = r.count();
        if (k != static_cast<std::size_t>(tree.num_classes)) throw FormatError("leaf histogram size mismatch");
        for (std::size_t c = 0; c < k; ++c) tree.nodes[idx].histogram.push_back(r.count());
      } else if (kind == "value") {
        tree.nodes[idx].value = r.real();
      } else {
        throw FormatError("unknown leaf kind '" + kind + "'");
      }
    } else if (tok == "split") {
      SplitRecord s;
      const auto d = r.count();
      if (d != tree.subspace.size()) throw FormatError("split width does not match the subspace");
      for (std::size_t i = 0; i < d; ++i) s.coeffs.push_back(static_cast<int>(r.integer()));
      for (std::size_t i = 0; i < d; ++i) s.unit.push_back(r.real());
      s.threshold = r.real();
      s.loss = r.real();
      tree.nodes[idx].splits.push_back(std::move(s));
    } else if (tok == "child") {
      const auto bits = r.word();
      if (bits.size() != tree.nodes[idx].splits.size() || bits.find_first_not_of("01") != std::string::npos)
        throw FormatError("malformed cell key '" + bits + "'");
      CellKey key = 0;
      for (std::size_t j = 0; j < bits.size(); ++j)
        if (bits[j] == '1') key |= CellKey{1} << j;
      const auto child = read_node(r, tree);
      auto& children = tree.nodes[idx].children;
      if (!children.empty() && children.back().first >= key) throw FormatError("child keys out of order");
      children.emplace_back(key, child);
    } else {
      throw FormatError("unexpected token '" + tok + "' in node");
    }
  }
  const auto& node = tree.nodes[idx];
  if (!node.splits.empty() && node.children.empty()) throw FormatError("internal node without children");
  if (node.splits.empty() && !node.children.empty()) throw FormatError("children without splits");
  return idx;
}

inline Tree read_tree(Reader& r, std::uint64_t& seed) {
  Tree tree;
  r.expect("tree");
  r.expect("seed");
  seed = r.u64();
  r.expect("task");
  tree.task = translate([&] { return parse_task(r.word()); });
  r.expect("classes");
  tree.num_classes = static_cast<int>(r.count());
  tree.num_features = r.keyed_count("features");
  const auto n_sub = r.keyed_count("subspace");
  for (std::size_t i = 0; i < n_sub; ++i) {
    const auto d = r.count();
    if (d >= tree.num_features) throw FormatError("subspace dimension out of range");
    tree.subspace.push_back(d);
  }
  tree.params = read_params(r);
  read_node(r, tree);
  r.expect("end");
  return tree;
}

}  // namespace detail

inline void save_model(const EnsembleModel& model, std::ostream& out) {
  detail::Writer w(out);
  w.line("slm-model", kModelFormatVersion);
  w.line("kind", to_string(model.kind));
  w.line("task", to_string(model.task));
  w.line("classes", model.num_classes);
  w.line("features", model.num_features);
  w.line("learning_rate", format_real(model.learning_rate));
  w.line("base_score", format_real(model.base_score));
  w.line("trees_per_round", model.trees_per_round);
  w.line("feature_names", model.feature_names.size());
  w.push();
  for (const auto& n : model.feature_names) w.line(detail::quoted(n));
  w.pop();
  w.line("target_name", detail::quoted(model.target_name));
  w.line("metadata", model.metadata.size());
  w.push();
  for (const auto& [k, v] : model.metadata) w.line(detail::quoted(k), detail::quoted(v));
  w.pop();
  w.line("trees", model.trees.size());
  for (std::size_t i = 0; i < model.trees.size(); ++i)
    detail::write_tree(w, model.trees[i], i < model.tree_seeds.size() ? model.tree_seeds[i] : 0);
  w.line("end");
}

inline std::string save_model(const EnsembleModel& model) {
  std::ostringstream os;
  save_model(model, os);
  return os.str();
}

inline void save_model(const EnsembleModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  save_model(model, out);
  if (!out) throw InvalidArgument("write failed: " + path);
}

inline EnsembleModel load_model(std::istream& in) {
  detail::Reader r(in);
  EnsembleModel m;
  r.expect("slm-model");
  const auto version = r.integer();
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  r.expect("kind");
  m.kind = detail::translate([&] { return parse_model_kind(r.word()); });
  r.expect("task");
  m.task = detail::translate([&] { return parse_task(r.word()); });
  r.expect("classes");
  m.num_classes = static_cast<int>(r.count());
  m.num_features = r.keyed_count("features");
  m.learning_rate = r.keyed_real("learning_rate");
  m.base_score = r.keyed_real("base_score");
  m.trees_per_round = r.keyed_count("trees_per_round");
  const auto n_names = r.keyed_count("feature_names");
  for (std::size_t i = 0; i < n_names; ++i) m.feature_names.push_back(r.text());
  r.expect("target_name");
  m.target_name = r.text();
  const auto n_meta = r.keyed_count("metadata");
  for (std::size_t i = 0; i < n_meta; ++i) {
    auto k = r.text();
    auto v = r.text();
    m.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto n_trees = r.keyed_count("trees");
  for (std::size_t i = 0; i < n_trees; ++i) {
    std::uint64_t seed = 0;
    m.trees.push_back(detail::read_tree(r, seed));
    m.tree_seeds.push_back(seed);
    const auto& t = m.trees.back();
    if (t.num_features != m.num_features || t.task != (m.kind == ModelKind::boost ? Task::regression : m.task))
      throw FormatError("tree " + std::to_string(i) + " does not match the model header");
  }
  r.expect("end");
  if (m.trees.empty()) throw FormatError("model has no trees");
  if (m.trees_per_round == 0 || m.trees.size() % m.trees_per_round != 0)
    throw FormatError("tree count is not a multiple of trees_per_round");
  return m;
}

inline EnsembleModel load_model_text(const std::string& text) {
  std::istringstream is(text);
  return load_model(is);
}

inline EnsembleModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("input not found: " + path);
  return load_model(in);
}

}  // namespace slm
