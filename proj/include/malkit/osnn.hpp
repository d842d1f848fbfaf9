#pragma once

// Open-Set Nearest-Neighbor baseline. For a query p, t is the nearest
// training sample and u the nearest one whose family differs from t's;
// R = d(p, t) / d(p, u) lies in [0, 1]. A large ratio means the query sits
// between families and is flagged Novel (original rule).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "malkit/common.hpp"
#include "malkit/dataset.hpp"
#include "malkit/osr.hpp"

namespace malkit {

enum class Distance { Hamming, Euclidean };

enum class UnknownRule {
  RatioAbove,  // Novel when R > T (original method)
  RatioBelow,  // Novel when R < T
};

inline Distance parse_distance(const std::string& s) {
  if (s == "hamming") return Distance::Hamming;
  if (s == "euclidean") return Distance::Euclidean;
  throw Error("unknown distance '" + s + "' (expected hamming or euclidean)");
}

inline UnknownRule parse_unknown_rule(const std::string& s) {
  if (s == "ratio-above" || s == "original") return UnknownRule::RatioAbove;
  if (s == "ratio-below" || s == "literal") return UnknownRule::RatioBelow;
  throw Error("unknown OSNN rule '" + s + "' (expected original or literal)");
}

inline double hamming(const PermissionVector& a, const PermissionVector& b) {
  const auto x = a.bits();
  const auto y = b.bits();
  unsigned diff = 0;
  for (std::size_t f = 0; f < x.size(); ++f) diff += static_cast<unsigned>(x[f] != y[f]);
  return static_cast<double>(diff);
}

inline double distance(const PermissionVector& a, const PermissionVector& b, Distance kind) {
  const double h = hamming(a, b);
  return kind == Distance::Hamming ? h : std::sqrt(h);
}

struct OSNNModel {
  std::vector<LabeledSample> train;
  Distance metric = Distance::Hamming;
  double ratio_threshold = 1.0;
  UnknownRule rule = UnknownRule::RatioAbove;

  OSNNModel() = default;
  OSNNModel(std::vector<LabeledSample> samples, Distance d = Distance::Hamming, double threshold = 1.0,
            UnknownRule r = UnknownRule::RatioAbove)
      : train(std::move(samples)), metric(d), ratio_threshold(threshold), rule(r) {
    if (train.empty()) throw Error("OSNN needs at least one training sample");
    for (const auto& s : train) {
      if (s.vector.size() != train.front().vector.size()) throw Error("OSNN training vectors differ in length");
    }
  }
};

struct OSNNRatio {
  std::size_t nearest = 0;        // index of t
  std::size_t nearest_other = 0;  // index of u
  FamilyLabel label = FamilyLabel::novel();
  double ratio = 0.0;
};

/// Linear scan. Ties go to the lowest training index. `exclude` skips one
/// training index (leave-one-out scoring of the training set itself).
/// Neighbours are ranked by Hamming count under both metrics; the Euclidean
/// ratio is sqrt of the Hamming ratio, so both metrics rank queries alike.
inline OSNNRatio osnn_ratio(const OSNNModel& m, const PermissionVector& p,
                            std::optional<std::size_t> exclude = std::nullopt) {
  if (m.train.empty()) throw Error("OSNN model has no training samples");
  if (p.size() != m.train.front().vector.size()) throw Error("dimension mismatch in OSNN query");
  const std::size_t n = m.train.size();
  std::vector<double> dist(n);
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  std::size_t t = kNone;
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    dist[i] = hamming(p, m.train[i].vector);
    if (t == kNone || dist[i] < dist[t]) t = i;
  }
  if (t == kNone) throw Error("OSNN model has no usable training samples");
  std::size_t u = kNone;
  for (std::size_t i = 0; i < n; ++i) {
    if ((exclude && *exclude == i) || m.train[i].label == m.train[t].label) continue;
    if (u == kNone || dist[i] < dist[u]) u = i;
  }
  if (u == kNone) throw Error("OSNN needs training samples from at least two families");

  OSNNRatio out;
  out.nearest = t;
  out.nearest_other = u;
  out.label = m.train[t].label;
  if (dist[u] == 0.0) {
    out.ratio = 1.0;  // identical vectors under different labels
  } else {
    out.ratio = dist[t] / dist[u];
    if (m.metric == Distance::Euclidean) out.ratio = std::sqrt(out.ratio);
  }
  return out;
}

inline bool osnn_is_novel(UnknownRule rule, double ratio, double threshold) {
  return rule == UnknownRule::RatioAbove ? ratio > threshold : ratio < threshold;
}

inline FamilyLabel osnn_classify(const OSNNModel& m, const PermissionVector& p) {
  const auto r = osnn_ratio(m, p);
  return osnn_is_novel(m.rule, r.ratio, m.ratio_threshold) ? FamilyLabel::novel() : r.label;
}

/// Threshold from calibration ratios so that at most a fraction `fpr` of
/// them fall on the Novel side. Same order-statistic rule as the MaxLogit
/// threshold, applied to -R under the original rule.
inline double osnn_threshold_from_ratios(std::span<const double> ratios, double fpr, UnknownRule rule) {
  if (rule == UnknownRule::RatioBelow) {
    return calibrate_threshold(ratios, fpr).tau;
  }
  std::vector<double> negated(ratios.begin(), ratios.end());
  for (auto& r : negated) r = -r;
  const double tau = calibrate_threshold(negated, fpr).tau;
  if (std::isinf(tau)) return *std::min_element(ratios.begin(), ratios.end());
  return -tau;
}

/// Calibrates the ratio threshold on `calibration`. When the calibration
/// set is the model's own training set (same order), pass `leave_one_out`
/// so each sample is scored without itself.
inline double osnn_calibrate(const OSNNModel& m, std::span<const LabeledSample> calibration, double fpr,
                             bool leave_one_out = false) {
  if (calibration.empty()) throw Error("OSNN calibration needs at least one sample");
  std::vector<double> ratios;
  ratios.reserve(calibration.size());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    ratios.push_back(osnn_ratio(m, calibration[i].vector, leave_one_out ? std::optional(i) : std::nullopt).ratio);
  }
  return osnn_threshold_from_ratios(ratios, fpr, m.rule);
}

}  // namespace malkit
