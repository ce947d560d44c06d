#include <cmath>

#include "doctest.h"
#include "pemi/error.hpp"
#include "pemi/pemi.hpp"
#include "pemi/scenario_oracle.hpp"
#include "support.hpp"

using namespace pemi;
using Obs = ObservedLabel;

namespace {

PemiOptions opts(std::size_t B, std::uint64_t seed, unsigned threads = 1) {
  PemiOptions o;
  o.replicates = B;
  o.seed = seed;
  o.threads = threads;
  return o;
}

}  // namespace

TEST_CASE("no missing labels gives a unit step") {
  MaskedDataset d({0.9, 0.2, 0.7, 0.4}, {Obs::kPositive, Obs::kNegative, Obs::kNegative, Obs::kPositive});
  const LabelModel none;
  for (MetricKind kind : kAllMetrics) {
    const auto cdf = run_pemi(kind, d, none, opts(50, 3));
    const auto truth = metric_value(kind, std::vector<std::uint8_t>{1, 0, 0, 1}, d.scores());
    REQUIRE(truth);
    CHECK(cdf.samples().size() == 50);
    CHECK(cdf.samples().front() == *truth);
    CHECK(cdf.samples().back() == *truth);
    CHECK(cdf(*truth) == 1.0);
    CHECK(cdf(*truth - 1e-12) == 0.0);
  }
}

TEST_CASE("two missing records under accuracy match the exact law") {
  MaskedDataset d({0.8, 0.6}, {Obs::kMissing, Obs::kMissing});
  const LabelModel m(d.missing_indices(), {0.5, 0.5});
  const std::size_t B = 200000;
  const auto cdf = run_pemi(MetricKind::kAccuracy, d, m, opts(B, 11));
  const double ks = support::ks_discrete({0.0, 0.5, 1.0}, {0.25, 0.5, 0.25},
                                         [&](double t) { return cdf(t); });
  CHECK(ks <= 0.004);
}

TEST_CASE("raising p on a predicted positive shifts TP metrics upward") {
  MaskedDataset d({0.9, 0.8, 0.3, 0.7, 0.2},
                  {Obs::kMissing, Obs::kPositive, Obs::kNegative, Obs::kMissing, Obs::kPositive});
  for (MetricKind kind : {MetricKind::kAccuracy, MetricKind::kPrecision, MetricKind::kRecall,
                          MetricKind::kF1}) {
    const auto hi = run_pemi(kind, d, LabelModel(d.missing_indices(), {0.999, 0.4}), opts(5000, 8));
    const auto lo = run_pemi(kind, d, LabelModel(d.missing_indices(), {0.001, 0.4}), opts(5000, 8));
    for (double t : hi.samples()) CHECK(hi(t) <= lo(t));
    for (double t : lo.samples()) CHECK(hi(t) <= lo(t));
  }
}

TEST_CASE("cdf_eval examples") {
  const EmpiricalCdf c({0.6, 0.2, 0.4}, 0);
  CHECK(cdf_eval(c, 0.4) == doctest::Approx(2.0 / 3.0));
  CHECK(cdf_eval(c, 0.1) == 0.0);
  CHECK(cdf_eval(c, 0.6) == 1.0);
  CHECK(cdf_eval(c, 5.0) == 1.0);
  CHECK(cdf_eval(EmpiricalCdf({0.5}, 0), 0.5) == 1.0);
  CHECK_THROWS_AS(cdf_eval(EmpiricalCdf({}, 4), 0.5), Error);
}

TEST_CASE("errors") {
  MaskedDataset d({0.9, 0.1}, {Obs::kMissing, Obs::kPositive});
  const LabelModel m(d.missing_indices(), {0.5});
  CHECK_THROWS_AS(run_pemi(MetricKind::kAccuracy, d, m, opts(0, 1)), Error);
  CHECK_THROWS_AS(run_pemi(MetricKind::kAccuracy, d, LabelModel(), opts(10, 1)), Error);
  // Both records predicted negative with tau 0.95 and p tiny: TP+FP = 0 always.
  MaskedDataset neg({0.3, 0.1}, {Obs::kMissing, Obs::kNegative});
  PemiOptions o = opts(20, 1);
  try {
    run_pemi(MetricKind::kPrecision, neg, LabelModel(neg.missing_indices(), {0.5}), o);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("20") != std::string::npos);
  }
}

TEST_CASE("undefined replicates are counted and excluded") {
  // Recall is undefined when the only possible positive is absent.
  MaskedDataset d({0.9, 0.1}, {Obs::kMissing, Obs::kNegative});
  const auto cdf = run_pemi(MetricKind::kRecall, d, LabelModel(d.missing_indices(), {0.3}),
                            opts(10000, 5));
  CHECK(cdf.replicates() == 10000);
  CHECK(cdf.undefined_count() > 6700);
  CHECK(cdf.undefined_count() < 7300);
  for (double v : cdf.samples()) CHECK(v == 1.0);
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = support::random_instance(rng);
    for (MetricKind kind : kAllMetrics) {
      try {
        const auto a = run_pemi(kind, inst.data, inst.model, opts(3000, 99, 1));
        const auto b = run_pemi(kind, inst.data, inst.model, opts(3000, 99, 4));
        CHECK(a.samples() == b.samples());
        CHECK(a.undefined_count() == b.undefined_count());
      } catch (const Error&) {
        // Instances where every replicate is UNDEFINED.
      }
    }
  }
}

TEST_CASE("ECDF agrees with the exact law on random instances") {
  Rng rng(22);
  const std::size_t B = 20000;
  const double dkw = std::sqrt(std::log(2.0 / 0.01) / (2.0 * B));
  int instances = 0, dkw_ok = 0, mean_ok = 0;
  while (instances < 50) {
    const auto inst = support::random_instance(rng);
    const MetricKind kind = kAllMetrics[instances % 5];
    const auto exact = enumerate_distribution(inst.data, inst.model, kind);
    if (exact.undefined_mass > 0.0 || exact.values.size() < 2) continue;
    const auto cdf = run_pemi(kind, inst.data, inst.model, opts(B, 1000 + instances));
    CHECK(cdf.undefined_count() == 0);
    // Atoms of these small instances are far apart compared with 1e-9.
    const double ks = support::ks_discrete(exact.values, exact.masses,
                                           [&](double t) { return cdf(t); });
    dkw_ok += ks <= dkw;
    double mean = 0, sq = 0;
    for (std::size_t a = 0; a < exact.values.size(); ++a) mean += exact.masses[a] * exact.values[a];
    for (std::size_t a = 0; a < exact.values.size(); ++a)
      sq += exact.masses[a] * (exact.values[a] - mean) * (exact.values[a] - mean);
    mean_ok += std::abs(cdf.mean() - mean) <= 5.0 * std::sqrt(sq / B);
    CHECK(cdf(cdf.samples().back()) == 1.0);
    ++instances;
  }
  CHECK(dkw_ok >= 49);
  CHECK(mean_ok == 50);
}

TEST_CASE("ECDF is monotone within [0, 1]") {
  MaskedDataset d({0.9, 0.8, 0.3, 0.7, 0.2, 0.55},
                  {Obs::kMissing, Obs::kPositive, Obs::kNegative, Obs::kMissing, Obs::kMissing, Obs::kNegative});
  const auto cdf = run_pemi(MetricKind::kRocAuc, d, LabelModel(d.missing_indices(), {0.3, 0.6, 0.2}),
                            opts(2000, 4));
  double prev = 0;
  for (int i = -10; i <= 110; ++i) {
    const double v = cdf(i / 100.0);
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
  }
  CHECK(prev == 1.0);
  CHECK(cdf.quantile(1.0) == cdf.samples().back());
}

TEST_CASE("ECDF CSV has one value per sample") {
  const EmpiricalCdf c({0.25, 0.5}, 1);
  const auto csv = c.to_csv();
  CHECK(csv.find("0.25") != std::string::npos);
  CHECK(csv.find("0.5") != std::string::npos);
}
