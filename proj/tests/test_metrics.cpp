#include <cmath>

#include "doctest.h"
#include "pemi/error.hpp"
#include "pemi/metrics.hpp"
#include "pemi/rng.hpp"

using namespace pemi;
using Bits = std::vector<std::uint8_t>;

TEST_CASE("induce_classifier uses >= at the threshold") {
  CHECK(induce_classifier(std::vector<double>{0.9, 0.5, 0.1}, 0.5) == Bits{1, 1, 0});
  CHECK(induce_classifier(std::vector<double>{0.0, 0.0}, 0.5) == Bits{0, 0});
  CHECK_THROWS_AS(induce_classifier(std::vector<double>{0.3}, 0.0), Error);
  CHECK_THROWS_AS(induce_classifier(std::vector<double>{0.3}, 1.0), Error);
}

TEST_CASE("confusion_counts examples") {
  CHECK(confusion_counts(Bits{1, 1, 0, 0}, Bits{1, 0, 1, 0}) == ConfusionCounts{1, 1, 1, 1});
  CHECK(confusion_counts(Bits{1, 1}, Bits{1, 1}) == ConfusionCounts{2, 0, 0, 0});
  CHECK(confusion_counts(Bits{1, 0, 1}, Bits{0, 1, 0}) == ConfusionCounts{0, 2, 1, 0});
  CHECK_THROWS_AS(confusion_counts(Bits{1}, Bits{1, 0}), Error);
}

TEST_CASE("metric_value on a three-record scenario") {
  const Bits y{1, 1, 0};
  const std::vector<double> s{0.9, 0.4, 0.8};
  CHECK(*metric_value(MetricKind::kPrecision, y, s) == doctest::Approx(0.5));
  CHECK(*metric_value(MetricKind::kRecall, y, s) == doctest::Approx(0.5));
  CHECK(*metric_value(MetricKind::kAccuracy, y, s) == doctest::Approx(1.0 / 3.0));
  CHECK(*metric_value(MetricKind::kF1, y, s) == doctest::Approx(0.5));
}

TEST_CASE("ROC-AUC examples, ties counted as concordant") {
  CHECK(*roc_auc(Bits{1, 0}, std::vector<double>{0.9, 0.1}) == 1.0);
  CHECK(*roc_auc(Bits{1, 0}, std::vector<double>{0.5, 0.5}) == 1.0);
  CHECK(*roc_auc(Bits{1, 0}, std::vector<double>{0.1, 0.9}) == 0.0);
}

TEST_CASE("zero denominators give UNDEFINED") {
  const Bits y{0, 0, 0};
  const std::vector<double> s{0.9, 0.2, 0.6};
  CHECK_FALSE(metric_value(MetricKind::kRecall, y, s).has_value());
  CHECK_FALSE(metric_value(MetricKind::kRocAuc, y, s).has_value());
  CHECK(metric_value(MetricKind::kAccuracy, y, s).has_value());
  CHECK_FALSE(metric_value(MetricKind::kPrecision, Bits{1, 0}, std::vector<double>{0.1, 0.2}));
}

TEST_CASE("metric names round-trip") {
  for (auto k : kAllMetrics) CHECK(parse_metric(to_string(k)) == k);
  CHECK(parse_metric("ROC_AUC") == MetricKind::kRocAuc);
  CHECK_THROWS_AS(parse_metric("brier"), Error);
}

namespace {
double naive_auc(const Bits& y, const std::vector<double>& s) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double pair = y[i] * (1.0 - y[j]);
      den += pair;
      if (s[i] >= s[j]) num += pair;
    }
  return num / den;
}
}  // namespace

TEST_CASE("consistency properties on random scenarios") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    Bits y(n);
    std::vector<double> s(n);
    const bool grid = rng.bernoulli(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.5);
      s[i] = grid ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
    }
    const auto cm = confusion_counts(y, induce_classifier(s, 0.5));
    CHECK(cm.n() == static_cast<std::int64_t>(n));
    CHECK(*metric_value(MetricKind::kAccuracy, y, s) ==
          doctest::Approx(static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n)));
    const auto p = metric_value(MetricKind::kPrecision, y, s);
    const auto r = metric_value(MetricKind::kRecall, y, s);
    const auto f1 = metric_value(MetricKind::kF1, y, s);
    if (p && r && *p > 0 && *r > 0) CHECK(*f1 == doctest::Approx(2 * *p * *r / (*p + *r)));
    const auto auc = roc_auc(y, s);
    std::size_t pos = 0;
    for (auto v : y) pos += v;
    if (pos > 0 && pos < n) CHECK(*auc == doctest::Approx(naive_auc(y, s)).epsilon(1e-12));
    else CHECK_FALSE(auc.has_value());
    const RankIndex rank(s);
    CHECK(rank.auc(y) == auc);
  }
}

TEST_CASE("perfect and inverted rankings") {
  std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  CHECK(*roc_auc(Bits{0, 0, 0, 1, 1, 1}, s) == 1.0);
  CHECK(*roc_auc(Bits{1, 1, 1, 0, 0, 0}, s) == 0.0);
}

TEST_CASE("accuracy is unbiased for P(Y = psi) = q over many datasets") {
  const double q = 0.7;
  const std::size_t n = 50, datasets = 10000;
  Rng rng(99);
  double sum = 0.0;
  for (std::size_t d = 0; d < datasets; ++d) {
    Bits y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      const int psi = s[i] >= 0.5;
      y[i] = static_cast<std::uint8_t>(rng.bernoulli(q) ? psi : 1 - psi);
    }
    sum += *metric_value(MetricKind::kAccuracy, y, s);
  }
  const double mean = sum / static_cast<double>(datasets);
  CHECK(std::abs(mean - q) < 4.0 * std::sqrt(q * (1 - q) / static_cast<double>(n * datasets)));
}
