#pragma once

// Cross-validation harness: runs an open-set method over every fold of a
// split plan and aggregates closed-set, open-set and novelty-detection
// metrics, both averaged per fold and pooled over folds.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malkit/dataset.hpp"
#include "malkit/gbm.hpp"
#include "malkit/metrics.hpp"
#include "malkit/osnn.hpp"
#include "malkit/osr.hpp"

namespace malkit {

/// Per-sample outputs of one method on one fold's test set.
struct FoldScores {
  std::vector<FamilyLabel> truth;
  std::vector<FamilyLabel> closed;  // closed-set prediction
  std::vector<FamilyLabel> open;    // open-set prediction (may be Novel)
  std::vector<double> novelty;      // higher = more novel
  double threshold = 0.0;
  std::size_t calibration_size = 0;
  std::string model_hash;
};

/// Trains on fold.train, calibrates on fold.calibration and scores fold.test.
using FoldRunner = std::function<FoldScores(const Dataset&, const Fold&)>;

/// MaxLogit over boosted trees; novelty score is -max_logit.
inline FoldRunner maxlogit_runner(GBMConfig gbm, double fpr) {
  return [gbm, fpr](const Dataset& d, const Fold& fold) {
    const Dataset train_set = subset(d, fold.train);
    const Dataset tt = subset(d, fold.calibration);
    auto k = calibrate(train(train_set, gbm), tt.samples(), fpr,
                       fold.external_calibration ? CalibrationSource::ExternalTT : CalibrationSource::TrainingFold);
    FoldScores out;
    out.threshold = k.threshold().tau;
    out.calibration_size = k.threshold().calibration_size;
    out.model_hash = k.threshold().model_hash;
    for (auto i : fold.test) {
      const auto decision = k.classify(d[i].vector);
      out.truth.push_back(test_truth(d, fold, i));
      out.closed.push_back(FamilyLabel::known(k.model().classes[decision.closed_class]));
      out.open.push_back(decision.label);
      out.novelty.push_back(-decision.max_logit);
    }
    return out;
  };
}

/// OSNN baseline. When calibrating on the training fold itself, ratios are
/// computed leave-one-out. Novelty score is R under the original rule, -R
/// under the literal one.
inline FoldRunner osnn_runner(Distance metric, UnknownRule rule, double fpr) {
  return [metric, rule, fpr](const Dataset& d, const Fold& fold) {
    const Dataset train_set = subset(d, fold.train);
    OSNNModel model(train_set.samples(), metric, 1.0, rule);
    if (fold.external_calibration) {
      const Dataset tt = subset(d, fold.calibration);
      model.ratio_threshold = osnn_calibrate(model, tt.samples(), fpr);
    } else {
      model.ratio_threshold = osnn_calibrate(model, train_set.samples(), fpr, true);
    }
    FoldScores out;
    out.threshold = model.ratio_threshold;
    out.calibration_size = fold.calibration.size();
    for (auto i : fold.test) {
      const auto r = osnn_ratio(model, d[i].vector);
      const bool novel = osnn_is_novel(rule, r.ratio, model.ratio_threshold);
      out.truth.push_back(test_truth(d, fold, i));
      out.closed.push_back(r.label);
      out.open.push_back(novel ? FamilyLabel::novel() : r.label);
      out.novelty.push_back(rule == UnknownRule::RatioAbove ? r.ratio : -r.ratio);
    }
    return out;
  };
}

struct FoldReport {
  std::size_t iteration = 0;
  std::size_t index = 0;
  std::optional<std::string> held_out;
  std::string model_hash;
  double threshold = 0.0;
  std::size_t train_size = 0;
  std::size_t calibration_size = 0;
  std::size_t test_known = 0;
  std::size_t test_novel = 0;
  double closed_micro = 0.0;  // known test samples only
  double closed_macro = 0.0;
  double open_micro = 0.0;    // every test sample, Novel included
  double open_macro = 0.0;
  double test_fpr = 0.0;      // known samples flagged Novel
  std::optional<double> auc;
  FPDecomposition fp;
};

/// Novelty-detection results for one novel pool (one held-out family, or
/// `others` under k-fold).
struct NoveltyGroup {
  std::string name;
  RocCurve pooled_roc;
  double mean_fold_auc = std::numeric_limits<double>::quiet_NaN();
  double tpr_at_target = 0.0;  // pooled ROC at the calibration target FPR
  double test_fpr = 0.0;       // pooled over this group's folds
};

struct MetricSummary {
  double closed_micro = 0.0;
  double closed_macro = 0.0;
  double open_micro = 0.0;
  double open_macro = 0.0;
  double test_fpr = 0.0;
  double fpr_from_correct = 0.0;
  double fpr_from_misclassified = 0.0;
  double adjusted_micro = 0.0;
  double adjusted_macro = 0.0;
};

struct EvaluationReport {
  std::string method;
  SplitKind kind = SplitKind::KFold;
  double target_fpr = 0.0;
  std::vector<FoldReport> folds;
  MetricSummary fold_mean;
  MetricSummary pooled;
  RecallMatrix closed_matrix;
  RecallMatrix open_matrix;
  RecallMatrix adjusted_matrix;
  std::vector<NoveltyGroup> novelty;
};

namespace detail {

template <typename Pred>
std::vector<FamilyLabel> select(const std::vector<FamilyLabel>& v, const std::vector<FamilyLabel>& truth, Pred keep) {
  std::vector<FamilyLabel> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (keep(truth[i])) out.push_back(v[i]);
  }
  return out;
}

inline bool known(const FamilyLabel& l) { return !l.is_novel(); }

inline double flagged_rate(const std::vector<FamilyLabel>& open, const std::vector<FamilyLabel>& truth) {
  std::size_t known_count = 0, flagged = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].is_novel()) continue;
    ++known_count;
    flagged += open[i].is_novel();
  }
  return known_count == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(known_count);
}

inline MetricSummary summarize(const FoldScores& s) {
  MetricSummary m;
  const auto closed_known = select(s.closed, s.truth, known);
  const auto truth_known = select(s.truth, s.truth, known);
  if (!truth_known.empty()) {
    m.closed_micro = micro_recall(closed_known, truth_known);
    m.closed_macro = macro_recall(closed_known, truth_known);
  }
  m.open_micro = micro_recall(s.open, s.truth);
  m.open_macro = macro_recall(s.open, s.truth);
  m.test_fpr = flagged_rate(s.open, s.truth);
  const auto fp = fp_decomposition(s.closed, s.open, s.truth);
  m.fpr_from_correct = fp.fpr_from_correct;
  m.fpr_from_misclassified = fp.fpr_from_misclassified;
  m.adjusted_micro = fp.adjusted_micro_recall;
  m.adjusted_macro = fp.adjusted_macro_recall;
  return m;
}

inline void append(FoldScores& into, const FoldScores& from) {
  into.truth.insert(into.truth.end(), from.truth.begin(), from.truth.end());
  into.closed.insert(into.closed.end(), from.closed.begin(), from.closed.end());
  into.open.insert(into.open.end(), from.open.begin(), from.open.end());
  into.novelty.insert(into.novelty.end(), from.novelty.begin(), from.novelty.end());
}

inline std::optional<RocCurve> roc_of(const FoldScores& s) {
  std::vector<bool> novel;
  for (const auto& t : s.truth) novel.push_back(t.is_novel());
  const auto positives = std::count(novel.begin(), novel.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(novel.size())) return std::nullopt;
  return novelty_roc(s.novelty, novel);
}

}  // namespace detail

/// Runs `runner` on every fold (folds in parallel on up to `threads`
/// workers) and reduces in fold order, so the report is independent of
/// scheduling.
inline EvaluationReport evaluate(const Dataset& d, const SplitPlan& plan, const FoldRunner& runner,
                                 const std::string& method, double target_fpr, unsigned threads = 1) {
  std::vector<FoldScores> scores(plan.folds.size());
  parallel_for(plan.folds.size(), threads, [&](std::size_t i) { scores[i] = runner(d, plan.folds[i]); });

  EvaluationReport report;
  report.method = method;
  report.kind = plan.kind;
  report.target_fpr = target_fpr;

  FoldScores pooled;
  std::map<std::string, FoldScores> group_scores;
  std::map<std::string, std::vector<double>> group_aucs;
  std::vector<std::string> group_order;

  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    const auto& fold = plan.folds[i];
    const auto& s = scores[i];
    FoldReport fr;
    fr.iteration = fold.iteration;
    fr.index = fold.index;
    fr.held_out = fold.held_out;
    fr.model_hash = s.model_hash;
    fr.threshold = s.threshold;
    fr.train_size = fold.train.size();
    fr.calibration_size = s.calibration_size;
    for (const auto& t : s.truth) (t.is_novel() ? fr.test_novel : fr.test_known) += 1;
    const auto m = detail::summarize(s);
    fr.closed_micro = m.closed_micro;
    fr.closed_macro = m.closed_macro;
    fr.open_micro = m.open_micro;
    fr.open_macro = m.open_macro;
    fr.test_fpr = m.test_fpr;
    fr.fp = fp_decomposition(s.closed, s.open, s.truth);
    const auto roc = detail::roc_of(s);
    if (roc) fr.auc = roc->auc;
    report.folds.push_back(fr);
    detail::append(pooled, s);

    const std::string group = fold.held_out ? *fold.held_out : std::string(kOthersFamily);
    if (!group_scores.count(group)) group_order.push_back(group);
    detail::append(group_scores[group], s);
    if (roc) group_aucs[group].push_back(roc->auc);
  }

  const double nf = static_cast<double>(report.folds.size());
  auto& mean = report.fold_mean;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto m = detail::summarize(scores[i]);
    mean.closed_micro += m.closed_micro / nf;
    mean.closed_macro += m.closed_macro / nf;
    mean.open_micro += m.open_micro / nf;
    mean.open_macro += m.open_macro / nf;
    mean.test_fpr += m.test_fpr / nf;
    mean.fpr_from_correct += m.fpr_from_correct / nf;
    mean.fpr_from_misclassified += m.fpr_from_misclassified / nf;
    mean.adjusted_micro += m.adjusted_micro / nf;
    mean.adjusted_macro += m.adjusted_macro / nf;
  }
  report.pooled = detail::summarize(pooled);

  const auto closed_known = detail::select(pooled.closed, pooled.truth, detail::known);
  const auto truth_known = detail::select(pooled.truth, pooled.truth, detail::known);
  report.closed_matrix = recall_matrix(closed_known, truth_known, label_set(closed_known, truth_known));
  report.open_matrix = recall_matrix(pooled.open, pooled.truth, label_set(pooled.open, pooled.truth));
  {
    std::vector<FamilyLabel> adjusted = pooled.open;
    for (std::size_t i = 0; i < adjusted.size(); ++i) {
      if (!pooled.truth[i].is_novel() && adjusted[i].is_novel() && pooled.closed[i] != pooled.truth[i]) {
        adjusted[i] = pooled.truth[i];
      }
    }
    report.adjusted_matrix = recall_matrix(adjusted, pooled.truth, label_set(adjusted, pooled.truth));
  }

  for (const auto& name : group_order) {
    const auto& gs = group_scores[name];
    const auto roc = detail::roc_of(gs);
    if (!roc) continue;
    NoveltyGroup g;
    g.name = name;
    g.pooled_roc = *roc;
    const auto& aucs = group_aucs[name];
    if (!aucs.empty()) {
      double sum = 0.0;
      for (double a : aucs) sum += a;
      g.mean_fold_auc = sum / static_cast<double>(aucs.size());
    }
    g.tpr_at_target = tpr_at_fpr(*roc, target_fpr);
    g.test_fpr = detail::flagged_rate(gs.open, gs.truth);
    report.novelty.push_back(std::move(g));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization.

inline nlohmann::json summary_to_json(const MetricSummary& m) {
  return {{"closed_micro_recall", m.closed_micro},
          {"closed_macro_recall", m.closed_macro},
          {"open_micro_recall", m.open_micro},
          {"open_macro_recall", m.open_macro},
          {"test_fpr", m.test_fpr},
          {"fpr_from_correct", m.fpr_from_correct},
          {"fpr_from_misclassified", m.fpr_from_misclassified},
          {"adjusted_micro_recall", m.adjusted_micro},
          {"adjusted_macro_recall", m.adjusted_macro}};
}

inline nlohmann::json matrix_to_json(const RecallMatrix& m) {
  std::vector<std::string> labels;
  for (const auto& l : m.labels) labels.push_back(l.str());
  return {{"labels", labels}, {"rates", m.rates}, {"counts", m.counts}, {"support", m.support},
          {"empty_rows", m.empty_row}};
}

inline nlohmann::json report_to_json(const EvaluationReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"iteration", f.iteration},
                     {"fold", f.index},
                     {"held_out", f.held_out ? nlohmann::json(*f.held_out) : nlohmann::json(nullptr)},
                     {"model_hash", f.model_hash},
                     {"threshold", detail::real_to_json(f.threshold)},
                     {"train_size", f.train_size},
                     {"calibration_size", f.calibration_size},
                     {"test_known", f.test_known},
                     {"test_novel", f.test_novel},
                     {"closed_micro_recall", f.closed_micro},
                     {"closed_macro_recall", f.closed_macro},
                     {"open_micro_recall", f.open_micro},
                     {"open_macro_recall", f.open_macro},
                     {"test_fpr", f.test_fpr},
                     {"auc", f.auc ? nlohmann::json(*f.auc) : nlohmann::json(nullptr)},
                     {"fpr_from_correct", f.fp.fpr_from_correct},
                     {"fpr_from_misclassified", f.fp.fpr_from_misclassified}});
  }
  nlohmann::json novelty = nlohmann::json::array();
  for (const auto& g : r.novelty) {
    novelty.push_back({{"novel_class", g.name},
                       {"pooled_auc", g.pooled_roc.auc},
                       {"mean_fold_auc", std::isnan(g.mean_fold_auc) ? nlohmann::json(nullptr)
                                                                     : nlohmann::json(g.mean_fold_auc)},
                       {"tpr_at_target_fpr", g.tpr_at_target},
                       {"test_fpr", g.test_fpr},
                       {"roc_points", g.pooled_roc.points.size()}});
  }
  return {{"method", r.method},
          {"mode", r.kind == SplitKind::KFold ? "kfold" : "loco"},
          {"target_fpr", r.target_fpr},
          {"fold_mean", summary_to_json(r.fold_mean)},
          {"pooled", summary_to_json(r.pooled)},
          {"closed_recall_matrix", matrix_to_json(r.closed_matrix)},
          {"open_recall_matrix", matrix_to_json(r.open_matrix)},
          {"adjusted_recall_matrix", matrix_to_json(r.adjusted_matrix)},
          {"novelty", novelty},
          {"folds", folds}};
}

/// `threshold,fpr,tpr` lines; the first point's threshold is "inf".
inline std::string roc_to_csv(const RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) {
    out += (std::isinf(p.threshold) ? std::string(p.threshold > 0 ? "inf" : "-inf") : format_double(p.threshold));
    out += "," + format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  }
  return out;
}

}  // namespace malkit
