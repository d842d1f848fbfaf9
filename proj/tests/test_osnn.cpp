#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "malkit/metrics.hpp"
#include "malkit/osnn.hpp"
#include "test_support.hpp"

namespace malkit {
namespace {

using testing::bits;

OSNNModel two_point_model(double threshold = 1.0) {
  return OSNNModel({{"x", FamilyLabel::known("X"), bits({0, 0})}, {"y", FamilyLabel::known("Y"), bits({1, 1})}},
                   Distance::Hamming, threshold);
}

TEST(OsnnRatio, HandExamples) {
  const auto m = two_point_model();
  const auto exact = osnn_ratio(m, bits({0, 0}));
  EXPECT_EQ(exact.label, FamilyLabel::known("X"));
  EXPECT_EQ(exact.ratio, 0.0);

  const auto between = osnn_ratio(m, bits({1, 0}));
  EXPECT_EQ(between.label, FamilyLabel::known("X"));
  EXPECT_EQ(between.nearest, 0u);
  EXPECT_EQ(between.ratio, 1.0);

  const auto other = osnn_ratio(m, bits({1, 1}));
  EXPECT_EQ(other.label, FamilyLabel::known("Y"));
  EXPECT_EQ(other.ratio, 0.0);
}

TEST(OsnnRatio, IdenticalVectorsUnderDifferentLabels) {
  const OSNNModel m({{"a", FamilyLabel::known("A"), bits({1, 0})}, {"b", FamilyLabel::known("B"), bits({1, 0})}});
  const auto r = osnn_ratio(m, bits({1, 0}));
  EXPECT_EQ(r.label, FamilyLabel::known("A"));
  EXPECT_EQ(r.ratio, 1.0);
}

TEST(OsnnRatio, Errors) {
  const OSNNModel single({{"a", FamilyLabel::known("A"), bits({1})}, {"b", FamilyLabel::known("A"), bits({0})}});
  EXPECT_THROW(osnn_ratio(single, bits({1})), Error);
  EXPECT_THROW(osnn_ratio(two_point_model(), bits({1})), Error);
  EXPECT_THROW(OSNNModel(std::vector<LabeledSample>{}), Error);
  EXPECT_THROW(parse_unknown_rule("sideways"), Error);
  EXPECT_THROW(parse_distance("cosine"), Error);
}

TEST(OsnnClassify, Rules) {
  EXPECT_EQ(osnn_classify(two_point_model(0.0), bits({0, 0})), FamilyLabel::known("X"));
  EXPECT_TRUE(osnn_classify(two_point_model(0.5), bits({1, 0})).is_novel());
  EXPECT_EQ(osnn_classify(two_point_model(1.0), bits({1, 0})), FamilyLabel::known("X"));

  auto literal = two_point_model(0.5);
  literal.rule = UnknownRule::RatioBelow;
  EXPECT_TRUE(osnn_classify(literal, bits({0, 0})).is_novel());
  EXPECT_EQ(osnn_classify(literal, bits({1, 0})), FamilyLabel::known("X"));
}

// Exhaustive pairwise oracle, independent of the single-pass implementation.
OSNNRatio oracle(const OSNNModel& m, const PermissionVector& p) {
  const std::size_t n = m.train.size();
  std::size_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool best = true;
    for (std::size_t j = 0; j < n; ++j) {
      const double di = distance(p, m.train[i].vector, m.metric);
      const double dj = distance(p, m.train[j].vector, m.metric);
      if (dj < di || (dj == di && j < i)) best = false;
    }
    if (best) t = i;
  }
  std::size_t u = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.train[i].label == m.train[t].label) continue;
    bool best = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (m.train[j].label == m.train[t].label) continue;
      const double di = distance(p, m.train[i].vector, m.metric);
      const double dj = distance(p, m.train[j].vector, m.metric);
      if (dj < di || (dj == di && j < i)) best = false;
    }
    if (best) u = i;
  }
  OSNNRatio r;
  r.nearest = t;
  r.nearest_other = u;
  r.label = m.train[t].label;
  const double ht = hamming(p, m.train[t].vector);
  const double hu = hamming(p, m.train[u].vector);
  r.ratio = hu == 0.0 ? 1.0 : ht / hu;
  if (hu != 0.0 && m.metric == Distance::Euclidean) r.ratio = std::sqrt(r.ratio);
  return r;
}

std::vector<LabeledSample> random_training(std::mt19937_64& rng, std::size_t n, std::size_t dims,
                                           std::size_t families) {
  std::vector<LabeledSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back({"s" + std::to_string(i), FamilyLabel::known("f" + std::to_string(i % families)),
                 testing::random_vector(rng, dims, 0.4)});
  }
  return s;
}

TEST(OsnnRatio, AgreesWithExhaustiveOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    const std::size_t dims = 3 + rng() % 12;
    const auto metric = trial % 2 ? Distance::Euclidean : Distance::Hamming;
    const OSNNModel m(random_training(rng, n, dims, 2 + rng() % 4), metric);
    for (int q = 0; q < 10; ++q) {
      const auto p = testing::random_vector(rng, dims, 0.4);
      const auto got = osnn_ratio(m, p);
      const auto want = oracle(m, p);
      EXPECT_EQ(got.nearest, want.nearest);
      EXPECT_EQ(got.nearest_other, want.nearest_other);
      EXPECT_EQ(got.label, want.label);
      EXPECT_EQ(got.ratio, want.ratio);
      EXPECT_GE(got.ratio, 0.0);
      EXPECT_LE(got.ratio, 1.0);
    }
  }
}

TEST(OsnnRatio, MetricChoiceDoesNotChangeAuc) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dims = 12;
    auto train = random_training(rng, 120, dims, 3);
    const OSNNModel hamming(train, Distance::Hamming);
    const OSNNModel euclidean(train, Distance::Euclidean);
    std::vector<double> rh, re;
    std::vector<bool> novel;
    for (int q = 0; q < 80; ++q) {
      const auto p = testing::random_vector(rng, dims, q % 2 ? 0.4 : 0.7);
      rh.push_back(osnn_ratio(hamming, p).ratio);
      re.push_back(osnn_ratio(euclidean, p).ratio);
      novel.push_back(q % 2 == 0);
    }
    EXPECT_NEAR(novelty_roc(rh, novel).auc, novelty_roc(re, novel).auc, 1e-9);
  }
}

TEST(OsnnCalibrate, ThresholdFromRatios) {
  const std::vector<double> zeros(20, 0.0);
  for (double fpr : {0.0, 0.05, 0.5}) EXPECT_EQ(osnn_threshold_from_ratios(zeros, fpr, UnknownRule::RatioAbove), 0.0);

  std::vector<double> r;
  for (int i = 1; i <= 100; ++i) r.push_back(0.01 * i);
  const double t = osnn_threshold_from_ratios(r, 0.05, UnknownRule::RatioAbove);
  const auto above = std::count_if(r.begin(), r.end(), [&](double v) { return v > t; });
  EXPECT_LE(above, 5);
  // Largest admissible count: no smaller candidate keeps the bound with more flagged.
  for (double candidate : r) {
    const auto flagged = std::count_if(r.begin(), r.end(), [&](double v) { return v > candidate; });
    if (flagged <= 5) {
      EXPECT_GE(candidate, t);
    }
  }

  EXPECT_LE(osnn_threshold_from_ratios(r, 1.0, UnknownRule::RatioAbove), r.front());
}

TEST(OsnnCalibrate, LeaveOneOutOnTrainingSet) {
  // Without leave-one-out every training sample matches itself and R = 0.
  std::mt19937_64 rng(4);
  const OSNNModel m(random_training(rng, 60, 40, 3));
  EXPECT_EQ(osnn_calibrate(m, m.train, 0.0, false), 0.0);
  const double loo = osnn_calibrate(m, m.train, 0.0, true);
  EXPECT_GT(loo, 0.0);
  for (std::size_t i = 0; i < m.train.size(); ++i) EXPECT_LE(osnn_ratio(m, m.train[i].vector, i).ratio, loo);
}

}  // namespace
}  // namespace malkit
