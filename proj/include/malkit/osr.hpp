#pragma once

// MaxLogit open-set recognition on top of the boosted classifier: a sample
// is Novel when the largest raw decision value falls below tau.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malkit/common.hpp"
#include "malkit/gbm.hpp"

namespace malkit {

inline double max_logit(std::span<const double> z) {
  if (z.empty()) throw Error("max_logit of an empty logit vector");
  return *std::max_element(z.begin(), z.end());
}

enum class CalibrationSource { TrainingFold, ExternalTT };

inline std::string to_string(CalibrationSource s) {
  return s == CalibrationSource::TrainingFold ? "training-fold" : "external-TT";
}

struct OSRThreshold {
  double tau = -std::numeric_limits<double>::infinity();
  double target_fpr = 0.0;
  std::size_t calibration_size = 0;
  CalibrationSource source = CalibrationSource::TrainingFold;
  std::string model_hash;
};

/// Largest c such that c / k <= fpr, evaluated in the same floating-point
/// form the guarantee is stated in.
inline std::size_t allowed_false_positives(double fpr, std::size_t k) {
  const double kd = static_cast<double>(k);
  auto c = static_cast<std::size_t>(std::min(kd, std::floor(fpr * kd)));
  while (c > 0 && static_cast<double>(c) / kd > fpr) --c;
  while (c < k && static_cast<double>(c + 1) / kd <= fpr) ++c;
  return c;
}

/// Empirical FPR-quantile of calibration scores.
///
/// With m sorted ascending and c = floor(fpr * k), tau is the (c+1)-th
/// order statistic, or +inf when c == k. At most c scores lie strictly
/// below tau, so the empirical false-positive rate never exceeds fpr.
inline OSRThreshold calibrate_threshold(std::span<const double> scores, double fpr,
                                        CalibrationSource source = CalibrationSource::TrainingFold) {
  if (scores.empty()) throw Error("threshold calibration needs at least one sample");
  if (!(fpr >= 0.0 && fpr <= 1.0)) throw Error("target FPR must lie in [0, 1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw Error("calibration scores must be finite");
  }
  const std::size_t c = allowed_false_positives(fpr, sorted.size());
  OSRThreshold t;
  t.target_fpr = fpr;
  t.calibration_size = sorted.size();
  t.source = source;
  if (c >= sorted.size()) {
    t.tau = std::numeric_limits<double>::infinity();
  } else {
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(c), sorted.end());
    t.tau = sorted[c];
  }
  return t;
}

/// Result of one open-set decision, with the logits kept for audit.
struct OpenSetDecision {
  FamilyLabel label = FamilyLabel::novel();
  std::size_t closed_class = 0;  // argmax index, even when Novel
  LogitVector logits;
  double max_logit = 0.0;
};

/// Applies the rule to any model exposing `classes` and a
/// `decision_values(model, p)` found by ADL. Exactly one decision_values
/// call; the rest is O(classes).
template <typename Model>
OpenSetDecision classify_open(const Model& model, double tau, const PermissionVector& p) {
  OpenSetDecision d;
  d.logits = decision_values(model, p);
  d.closed_class = argmax(d.logits);
  d.max_logit = d.logits[d.closed_class];
  d.label = d.max_logit < tau ? FamilyLabel::novel() : FamilyLabel::known(model.classes[d.closed_class]);
  return d;
}

/// The composed open-set classifier: GBM plus a threshold calibrated on it.
class OpenSetClassifier {
 public:
  OpenSetClassifier(GBMModel model, OSRThreshold threshold)
      : model_(std::move(model)), threshold_(std::move(threshold)) {
    if (threshold_.model_hash != model_hash(model_)) {
      throw Error("threshold was calibrated against a different model (hash " + threshold_.model_hash + ", model " +
                  model_hash(model_) + ")");
    }
  }

  const GBMModel& model() const noexcept { return model_; }
  const OSRThreshold& threshold() const noexcept { return threshold_; }

  OpenSetDecision classify(const PermissionVector& p) const { return classify_open(model_, threshold_.tau, p); }

 private:
  GBMModel model_;
  OSRThreshold threshold_;
};

inline OpenSetDecision classify_open(const OpenSetClassifier& k, const PermissionVector& p) { return k.classify(p); }

/// Calibrates tau for `model` on the max-logits of the samples in `tt`.
inline OpenSetClassifier calibrate(GBMModel model, std::span<const LabeledSample> tt, double fpr,
                                   CalibrationSource source = CalibrationSource::TrainingFold) {
  std::vector<double> scores;
  scores.reserve(tt.size());
  for (const auto& s : tt) scores.push_back(max_logit(decision_values(model, s.vector)));
  auto threshold = calibrate_threshold(scores, fpr, source);
  threshold.model_hash = model_hash(model);
  return OpenSetClassifier(std::move(model), std::move(threshold));
}

namespace detail {
inline nlohmann::json real_to_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}
inline double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error("invalid real value '" + s + "'");
  }
  return j.get<double>();
}
}  // namespace detail

inline nlohmann::json threshold_to_json(const OSRThreshold& t) {
  return {{"tau", detail::real_to_json(t.tau)},
          {"target_fpr", t.target_fpr},
          {"calibration_size", t.calibration_size},
          {"calibration_source", to_string(t.source)},
          {"model_hash", t.model_hash}};
}

inline OSRThreshold threshold_from_json(const nlohmann::json& j) {
  OSRThreshold t;
  try {
    t.tau = detail::real_from_json(j.at("tau"));
    t.target_fpr = j.at("target_fpr").get<double>();
    t.calibration_size = j.at("calibration_size").get<std::size_t>();
    const auto src = j.value("calibration_source", std::string("training-fold"));
    t.source = src == "external-TT" ? CalibrationSource::ExternalTT : CalibrationSource::TrainingFold;
    t.model_hash = j.at("model_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("osr section: ") + e.what());
  }
  return t;
}

/// Model file with the threshold stored under `osr`.
inline nlohmann::json classifier_to_json(const OpenSetClassifier& k) {
  auto j = model_to_json(k.model());
  j["osr"] = threshold_to_json(k.threshold());
  return j;
}

inline OpenSetClassifier classifier_from_json(const nlohmann::json& j, const std::string& source = "model") {
  auto model = model_from_json(j, source);
  if (!j.contains("osr")) throw Error(source + ": model has no calibrated threshold (run calibrate first)");
  return OpenSetClassifier(std::move(model), threshold_from_json(j["osr"]));
}

}  // namespace malkit
