#pragma once

// Evaluation quantities: micro/macro recall, recall confusion matrices,
// novelty ROC/AUC, the false-positive decomposition and inference timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "malkit/common.hpp"

namespace malkit {

namespace detail {
inline void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": sequences differ in length");
  if (a == 0) throw Error(std::string(what) + ": empty input");
}
}  // namespace detail

/// Fraction of exact matches (accuracy). Novel is a label like any other.
inline double micro_recall(std::span<const FamilyLabel> pred, std::span<const FamilyLabel> truth) {
  detail::check_aligned(pred.size(), truth.size(), "micro_recall");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Unweighted mean of per-class recall over classes present in `truth`.
inline double macro_recall(std::span<const FamilyLabel> pred, std::span<const FamilyLabel> truth) {
  detail::check_aligned(pred.size(), truth.size(), "macro_recall");
  std::map<FamilyLabel, std::pair<std::size_t, std::size_t>> per_class;  // hits, support
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& [hits, support] = per_class[truth[i]];
    ++support;
    hits += pred[i] == truth[i];
  }
  double total = 0.0;
  for (const auto& [label, hs] : per_class) total += static_cast<double>(hs.first) / static_cast<double>(hs.second);
  return total / static_cast<double>(per_class.size());
}

/// Row-normalised confusion matrix; rows are true labels.
struct RecallMatrix {
  std::vector<FamilyLabel> labels;
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::vector<double>> rates;
  std::vector<std::size_t> support;
  std::vector<bool> empty_row;  // zero support: row left all-zero

  double micro() const {
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      hits += counts[i][i];
      total += support[i];
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }

  double macro() const {
    double sum = 0.0;
    std::size_t rows = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (empty_row[i]) continue;
      sum += rates[i][i];
      ++rows;
    }
    return rows == 0 ? 0.0 : sum / static_cast<double>(rows);
  }
};

/// Entry (i, j) = #{truth = i and pred = j} / #{truth = i}. `labels` must
/// cover every label that occurs.
inline RecallMatrix recall_matrix(std::span<const FamilyLabel> pred, std::span<const FamilyLabel> truth,
                                  std::vector<FamilyLabel> labels) {
  if (pred.size() != truth.size()) throw Error("recall_matrix: sequences differ in length");
  std::map<FamilyLabel, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!index.emplace(labels[i], i).second) throw Error("recall_matrix: duplicate label " + labels[i].str());
  }
  const std::size_t n = labels.size();
  RecallMatrix m;
  m.counts.assign(n, std::vector<std::size_t>(n, 0));
  m.rates.assign(n, std::vector<double>(n, 0.0));
  m.support.assign(n, 0);
  m.empty_row.assign(n, false);
  auto lookup = [&](const FamilyLabel& l) {
    const auto it = index.find(l);
    if (it == index.end()) throw Error("recall_matrix: label '" + l.str() + "' not in label set");
    return it->second;
  };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = lookup(truth[i]);
    ++m.counts[r][lookup(pred[i])];
    ++m.support[r];
  }
  for (std::size_t r = 0; r < n; ++r) {
    m.empty_row[r] = m.support[r] == 0;
    if (m.empty_row[r]) continue;
    for (std::size_t c = 0; c < n; ++c) {
      m.rates[r][c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(m.support[r]);
    }
  }
  m.labels = std::move(labels);
  return m;
}

/// Sorted union of the labels in both sequences (Novel last).
inline std::vector<FamilyLabel> label_set(std::span<const FamilyLabel> a, std::span<const FamilyLabel> b) {
  std::set<FamilyLabel> s(a.begin(), a.end());
  s.insert(b.begin(), b.end());
  return {s.begin(), s.end()};
}

struct RocPoint {
  double threshold;  // samples with score >= threshold are called Novel
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Novelty ROC: Novel is the positive class and higher scores mean more
/// novel. One point per distinct score plus the (0, 0) origin; AUC by the
/// trapezoid rule, which equals the Mann-Whitney statistic with ties as 1/2.
inline RocCurve novelty_roc(std::span<const double> scores, const std::vector<bool>& is_novel) {
  if (scores.size() != is_novel.size()) throw Error("novelty_roc: sequences differ in length");
  std::size_t positives = 0;
  for (bool b : is_novel) positives += b;
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw Error("novelty_roc: both novel and known samples are required");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (is_novel[order[i]] ? tp : fp) += 1;
    roc.points.push_back({s, static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives)});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  roc.auc = area;
  return roc;
}

/// TPR on the ROC curve at a given FPR, interpolating linearly between
/// points (the expected TPR when ties are broken at random).
inline double tpr_at_fpr(const RocCurve& roc, double fpr) {
  const auto& pts = roc.points;
  std::size_t j = 0;  // last point with fpr <= target
  while (j + 1 < pts.size() && pts[j + 1].fpr <= fpr) ++j;
  if (pts[j].fpr == fpr || j + 1 == pts.size()) return pts[j].tpr;
  const auto& a = pts[j];
  const auto& b = pts[j + 1];
  return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
}

/// Split of the known-family samples that the open-set rule flagged Novel.
struct FPDecomposition {
  std::size_t known_samples = 0;
  double fpr_total = 0.0;
  double fpr_from_correct = 0.0;         // C had them right
  double fpr_from_misclassified = 0.0;   // C had them wrong anyway
  double adjusted_micro_recall = 0.0;
  double adjusted_macro_recall = 0.0;
};

/// Rates share the denominator "known test samples". The adjusted recalls
/// accept Novel as the right answer for a known sample C misclassified.
inline FPDecomposition fp_decomposition(std::span<const FamilyLabel> closed_pred,
                                        std::span<const FamilyLabel> open_pred,
                                        std::span<const FamilyLabel> truth) {
  detail::check_aligned(open_pred.size(), truth.size(), "fp_decomposition");
  if (closed_pred.size() != truth.size()) throw Error("fp_decomposition: sequences differ in length");
  FPDecomposition out;
  std::size_t flagged_correct = 0, flagged_wrong = 0;
  std::vector<FamilyLabel> adjusted(open_pred.begin(), open_pred.end());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].is_novel()) continue;
    ++out.known_samples;
    if (!open_pred[i].is_novel()) continue;
    if (closed_pred[i] == truth[i]) {
      ++flagged_correct;
    } else {
      ++flagged_wrong;
      adjusted[i] = truth[i];
    }
  }
  if (out.known_samples > 0) {
    const double k = static_cast<double>(out.known_samples);
    out.fpr_from_correct = static_cast<double>(flagged_correct) / k;
    out.fpr_from_misclassified = static_cast<double>(flagged_wrong) / k;
    out.fpr_total = static_cast<double>(flagged_correct + flagged_wrong) / k;
  }
  out.adjusted_micro_recall = micro_recall(adjusted, truth);
  out.adjusted_macro_recall = macro_recall(adjusted, truth);
  return out;
}

struct TimingResult {
  double seconds_per_sample = 0.0;  // median over repetitions of the per-pass mean
  std::size_t repetitions = 0;
  std::size_t samples = 0;
};

inline constexpr std::size_t kMinTimingRepetitions = 30;

/// Median-of-means wall-clock time per sample of `classify_one`, after one
/// warm-up pass. Repetitions below 30 are raised to 30.
template <typename Sample, typename Fn>
TimingResult time_inference(Fn&& classify_one, std::span<const Sample> samples, std::size_t repetitions) {
  if (samples.empty()) throw Error("time_inference: no samples");
  repetitions = std::max(repetitions, kMinTimingRepetitions);
  volatile double sink = 0.0;
  auto consume = [&](const auto& result) {
    if constexpr (std::is_arithmetic_v<std::decay_t<decltype(result)>>) {
      sink = sink + static_cast<double>(result);
    } else {
      sink = sink + 1.0;
    }
  };
  for (const auto& s : samples) consume(classify_one(s));

  std::vector<double> means;
  means.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (const auto& s : samples) consume(classify_one(s));
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    means.push_back(elapsed.count() / static_cast<double>(samples.size()));
  }
  std::nth_element(means.begin(), means.begin() + static_cast<std::ptrdiff_t>(means.size() / 2), means.end());
  return {means[means.size() / 2], repetitions, samples.size()};
}

}  // namespace malkit
