#pragma once

// Multiclass gradient-boosted decision trees over binary features.
//
// One regression tree per class per round, fit to the multinomial-deviance
// pseudo-residuals r = 1{y = c} - softmax(F)_c. Leaves take the Newton step
// ((L-1)/L) * sum(r) / sum(|r|(1-|r|)), clipped to [-4, 4]. The raw per-class
// sums z = base + lr * sum(leaf) are the logits the open-set rule reads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malkit/common.hpp"
#include "malkit/dataset.hpp"
#include "malkit/permissions.hpp"

namespace malkit {

struct GBMConfig {
  int rounds = 100;
  int max_depth = 4;
  double learning_rate = 0.1;
  int min_leaf = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (rounds < 0) throw Error("rounds must be >= 0");
    if (max_depth < 1) throw Error("max_depth must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be > 0");
    if (min_leaf < 1) throw Error("min_leaf must be >= 1");
  }

  friend bool operator==(const GBMConfig&, const GBMConfig&) = default;
};

inline constexpr double kLeafClip = 4.0;

/// Tree node. Internal nodes test p[feature]; leaves have feature == -1.
struct TreeNode {
  std::int32_t feature = -1;
  std::int32_t child_off = -1;  // p[feature] == 0
  std::int32_t child_on = -1;   // p[feature] == 1
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

/// Regression tree stored in preorder: node 0 is the root and the
/// `off` subtree immediately follows its parent.
struct DecisionTree {
  std::int32_t class_index = 0;
  std::vector<TreeNode> nodes;

  double predict(const PermissionVector& p) const noexcept {
    const TreeNode* node = nodes.data();
    while (!node->is_leaf()) {
      node = &nodes[static_cast<std::size_t>(p.test(static_cast<std::size_t>(node->feature)) ? node->child_on
                                                                                            : node->child_off)];
    }
    return node->value;
  }

  /// Number of internal nodes on the longest root-to-leaf path.
  int depth() const {
    auto walk = [&](auto&& self, std::int32_t i) -> int {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) return 0;
      return 1 + std::max(self(self, n.child_off), self(self, n.child_on));
    };
    return nodes.empty() ? 0 : walk(walk, 0);
  }
};

/// Logit vector z, aligned with GBMModel::classes.
using LogitVector = std::vector<double>;

/// Trained closed-set classifier.
struct GBMModel {
  GBMConfig config;
  std::vector<std::string> classes;  // sorted
  std::vector<double> base_scores;
  PermissionVocabulary vocab;
  std::vector<DecisionTree> trees;  // round-major: trees[r * L + c]

  std::size_t num_classes() const noexcept { return classes.size(); }
  std::size_t num_features() const noexcept { return vocab.size(); }
  std::size_t num_rounds() const noexcept { return classes.empty() ? 0 : trees.size() / classes.size(); }
  std::string vocab_fingerprint() const { return vocab.fingerprint(); }
};

/// z_c = base_c + lr * sum of the leaf values class c's trees route p to.
/// Exactly one root-to-leaf walk per tree.
inline LogitVector decision_values(const GBMModel& m, const PermissionVector& p) {
  if (p.size() != m.num_features()) {
    throw Error("dimension mismatch: vector has " + std::to_string(p.size()) + " features, model expects " +
                std::to_string(m.num_features()));
  }
  LogitVector z = m.base_scores;
  const double lr = m.config.learning_rate;
  for (const auto& tree : m.trees) z[static_cast<std::size_t>(tree.class_index)] += lr * tree.predict(p);
  return z;
}

/// Numerically stable softmax (max-shifted).
inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  if (z.empty()) return out;
  const double shift = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - shift);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

/// Index of the largest entry; the first one wins ties.
inline std::size_t argmax(std::span<const double> z) {
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

/// Closed-set label: argmax of z. Classes are sorted, so ties go to the
/// lexicographically first family.
inline FamilyLabel predict_closed(const GBMModel& m, const PermissionVector& p) {
  return FamilyLabel::known(m.classes[argmax(decision_values(m, p))]);
}

struct TrainOptions {
  unsigned threads = 1;
  /// When set, receives the training deviance before round 1 and after every round.
  std::vector<double>* deviance_trace = nullptr;
};

namespace detail {

/// Sum over samples of -log softmax(F_i)[y_i].
inline double multinomial_deviance(const std::vector<double>& scores, const std::vector<std::size_t>& labels,
                                   std::size_t num_classes) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = &scores[i * num_classes];
    const double shift = *std::max_element(row, row + num_classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) sum += std::exp(row[c] - shift);
    total += std::log(sum) + shift - row[labels[i]];
  }
  return total;
}

// Training state shared by all tree fits of one round.
struct TreeFitter {
  const std::vector<std::uint8_t>& features;  // row-major n x P
  std::size_t num_features;
  const std::vector<double>& residuals;
  const GBMConfig& config;
  double newton_scale;  // (L-1)/L

  double leaf_value(const std::vector<std::size_t>& rows) const {
    double num = 0.0, den = 0.0;
    for (auto i : rows) {
      const double r = residuals[i];
      num += r;
      den += std::abs(r) * (1.0 - std::abs(r));
    }
    if (num == 0.0) return 0.0;
    if (den < std::numeric_limits<double>::min()) return num > 0 ? kLeafClip : -kLeafClip;
    return std::clamp(newton_scale * num / den, -kLeafClip, kLeafClip);
  }

  void grow(std::vector<TreeNode>& nodes, const std::vector<std::size_t>& rows, int depth) const {
    const auto self = nodes.size();
    nodes.emplace_back();
    const auto n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(config.min_leaf);

    int best_feature = -1;
    if (depth < config.max_depth && n >= 2 * min_leaf) {
      std::vector<double> sum_on(num_features, 0.0);
      std::vector<std::uint32_t> count_on(num_features, 0);
      double sum = 0.0;
      for (auto i : rows) {
        const double r = residuals[i];
        const std::uint8_t* x = &features[i * num_features];
        sum += r;
        for (std::size_t f = 0; f < num_features; ++f) {
          sum_on[f] += x[f] * r;
          count_on[f] += x[f];
        }
      }
      // Squared-error gain: sL^2/nL + sR^2/nR - s^2/n.
      const double parent = sum * sum / static_cast<double>(n);
      double best_gain = 1e-12;
      for (std::size_t f = 0; f < num_features; ++f) {
        const std::size_t n_on = count_on[f];
        const std::size_t n_off = n - n_on;
        if (n_on < min_leaf || n_off < min_leaf) continue;
        const double s_on = sum_on[f];
        const double s_off = sum - s_on;
        const double gain = s_on * s_on / static_cast<double>(n_on) + s_off * s_off / static_cast<double>(n_off) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
        }
      }
    }

    if (best_feature < 0) {
      nodes[self].value = leaf_value(rows);
      return;
    }

    std::vector<std::size_t> off, on;
    for (auto i : rows) (features[i * num_features + static_cast<std::size_t>(best_feature)] ? on : off).push_back(i);
    nodes[self].feature = best_feature;
    nodes[self].child_off = static_cast<std::int32_t>(nodes.size());
    grow(nodes, off, depth + 1);
    nodes[self].child_on = static_cast<std::int32_t>(nodes.size());
    grow(nodes, on, depth + 1);
  }
};

}  // namespace detail

/// Fits the boosted ensemble on known-family samples.
///
/// Deterministic: the result depends only on the samples, their order and
/// the config. Per-class fits of one round may run on `options.threads`
/// workers without changing the model.
inline GBMModel train(std::span<const LabeledSample> samples, const PermissionVocabulary& vocab,
                      const GBMConfig& config, const TrainOptions& options = {}) {
  config.validate();
  std::vector<std::string> classes;
  for (const auto& s : samples) {
    if (s.label.is_novel() || s.label.name() == kOthersFamily) {
      throw Error("training data must contain known families only (found '" + s.label.str() + "')");
    }
    if (s.vector.size() != vocab.size()) {
      throw Error("sample '" + s.id + "' has " + std::to_string(s.vector.size()) + " features, expected " +
                  std::to_string(vocab.size()));
    }
    classes.push_back(s.label.name());
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error("training requires at least 2 classes, found " + std::to_string(classes.size()));

  const std::size_t n = samples.size();
  const std::size_t P = vocab.size();
  const std::size_t L = classes.size();

  std::vector<std::uint8_t> features(n * P);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = samples[i].vector.bits();
    std::copy(bits.begin(), bits.end(), features.begin() + static_cast<std::ptrdiff_t>(i * P));
    labels[i] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), samples[i].label.name()) -
                                         classes.begin());
  }

  GBMModel model;
  model.config = config;
  model.classes = classes;
  model.base_scores.assign(L, 0.0);
  model.vocab = vocab;
  model.trees.reserve(static_cast<std::size_t>(config.rounds) * L);

  std::vector<double> scores(n * L, 0.0);
  std::vector<double> probs(n * L);
  std::vector<std::size_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;
  const double newton_scale = static_cast<double>(L - 1) / static_cast<double>(L);

  if (options.deviance_trace) {
    options.deviance_trace->clear();
    options.deviance_trace->push_back(detail::multinomial_deviance(scores, labels, L));
  }

  for (int round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = softmax(std::span<const double>(&scores[i * L], L));
      std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * L));
    }
    std::vector<DecisionTree> round_trees(L);
    parallel_for(L, options.threads, [&](std::size_t c) {
      std::vector<double> residuals(n);
      for (std::size_t i = 0; i < n; ++i) residuals[i] = (labels[i] == c ? 1.0 : 0.0) - probs[i * L + c];
      detail::TreeFitter fitter{features, P, residuals, config, newton_scale};
      round_trees[c].class_index = static_cast<std::int32_t>(c);
      fitter.grow(round_trees[c].nodes, all_rows, 0);
    });
    for (std::size_t c = 0; c < L; ++c) {
      const auto& tree = round_trees[c];
      for (std::size_t i = 0; i < n; ++i) {
        scores[i * L + c] += config.learning_rate * tree.predict(samples[i].vector);
      }
      model.trees.push_back(std::move(round_trees[c]));
    }
    if (options.deviance_trace) options.deviance_trace->push_back(detail::multinomial_deviance(scores, labels, L));
  }
  return model;
}

inline GBMModel train(const Dataset& d, const GBMConfig& config, const TrainOptions& options = {}) {
  return train(d.samples(), d.vocab(), config, options);
}

// ---------------------------------------------------------------------------
// Persistence: {schema_version, kind, config, classes, base_scores, vocab,
// trees:[{class, nodes}]}. Nodes are preorder with explicit leaf markers, the
// `off` child before the `on` child.

inline nlohmann::json config_to_json(const GBMConfig& c) {
  return {{"rounds", c.rounds},
          {"max_depth", c.max_depth},
          {"learning_rate", c.learning_rate},
          {"min_leaf", c.min_leaf},
          {"seed", c.seed}};
}

inline GBMConfig config_from_json(const nlohmann::json& j) {
  GBMConfig c;
  c.rounds = j.at("rounds").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_leaf = j.at("min_leaf").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json model_to_json(const GBMModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    auto emit = [&](auto&& self, std::int32_t i) -> void {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", true}, {"value", n.value}});
      } else {
        nodes.push_back({{"leaf", false}, {"feature", n.feature}});
        self(self, n.child_off);
        self(self, n.child_on);
      }
    };
    emit(emit, 0);
    trees.push_back({{"class", t.class_index}, {"nodes", std::move(nodes)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "malkit-gbm"},
          {"config", config_to_json(m.config)},
          {"classes", m.classes},
          {"base_scores", m.base_scores},
          {"vocab", m.vocab.names()},
          {"vocab_fingerprint", m.vocab_fingerprint()},
          {"trees", std::move(trees)}};
}

inline GBMModel model_from_json(const nlohmann::json& j, const std::string& source = "model") {
  check_schema_version(j, source);
  GBMModel m;
  try {
    m.config = config_from_json(j.at("config"));
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.base_scores = j.at("base_scores").get<std::vector<double>>();
    m.vocab = PermissionVocabulary(j.at("vocab").get<std::vector<std::string>>());
    if (j.contains("vocab_fingerprint") && j["vocab_fingerprint"].get<std::string>() != m.vocab_fingerprint()) {
      throw Error(source + ": vocabulary fingerprint mismatch");
    }
    if (m.base_scores.size() != m.classes.size()) throw Error(source + ": base_scores/classes length mismatch");
    if (!std::is_sorted(m.classes.begin(), m.classes.end())) throw Error(source + ": classes must be sorted");
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      t.class_index = jt.at("class").get<std::int32_t>();
      if (t.class_index < 0 || static_cast<std::size_t>(t.class_index) >= m.classes.size()) {
        throw Error(source + ": tree class index out of range");
      }
      const auto& jn = jt.at("nodes");
      std::size_t cursor = 0;
      auto read = [&](auto&& self) -> std::int32_t {
        if (cursor >= jn.size()) throw Error(source + ": truncated tree");
        const auto& node = jn[cursor++];
        const auto index = static_cast<std::int32_t>(t.nodes.size());
        t.nodes.emplace_back();
        if (node.at("leaf").get<bool>()) {
          t.nodes[static_cast<std::size_t>(index)].value = node.at("value").get<double>();
        } else {
          const auto f = node.at("feature").get<std::int32_t>();
          if (f < 0 || static_cast<std::size_t>(f) >= m.vocab.size()) throw Error(source + ": feature index out of range");
          t.nodes[static_cast<std::size_t>(index)].feature = f;
          const auto off = self(self);
          t.nodes[static_cast<std::size_t>(index)].child_off = off;
          const auto on = self(self);
          t.nodes[static_cast<std::size_t>(index)].child_on = on;
        }
        return index;
      };
      read(read);
      if (cursor != jn.size()) throw Error(source + ": trailing nodes in tree");
      m.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(source + ": " + e.what());
  }
  if (!m.classes.empty() && m.trees.size() % m.classes.size() != 0) {
    throw Error(source + ": tree count is not a multiple of the class count");
  }
  return m;
}

/// Hash of the serialized model (threshold excluded).
inline std::string model_hash(const GBMModel& m) { return hex64(fnv1a(model_to_json(m).dump())); }

}  // namespace malkit
