#include <cmath>
#include <map>

#include "doctest.h"
#include "pemi/error.hpp"
#include "pemi/gauss.hpp"
#include "pemi/scenario_oracle.hpp"
#include "support.hpp"

using namespace pemi;
using Obs = ObservedLabel;

namespace {

void check_distribution(const ExactDistribution& d, const std::vector<double>& values,
                        const std::vector<double>& masses) {
  REQUIRE(d.values.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(d.values[i] == doctest::Approx(values[i]).epsilon(1e-12));
    CHECK(d.masses[i] == doctest::Approx(masses[i]).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("two missing predicted positives, accuracy") {
  MaskedDataset d({0.8, 0.9}, {Obs::kMissing, Obs::kMissing});
  LabelModel m(d.missing_indices(), {0.5, 0.5});
  check_distribution(enumerate_distribution(d, m, MetricKind::kAccuracy), {0, 0.5, 1},
                     {0.25, 0.5, 0.25});
  const auto mom = exact_moments(enumerate_distribution(d, m, MetricKind::kAccuracy));
  CHECK(mom.mean == doctest::Approx(0.5));
  CHECK(mom.variance == doctest::Approx(0.125));
}

TEST_CASE("no missing labels gives a point mass") {
  MaskedDataset d({0.8, 0.3, 0.6}, {Obs::kPositive, Obs::kNegative, Obs::kNegative});
  const auto dist = enumerate_distribution(d, LabelModel{}, MetricKind::kAccuracy);
  check_distribution(dist, {2.0 / 3.0}, {1.0});
  const auto mom = exact_moments(dist);
  CHECK(mom.variance == 0.0);
}

TEST_CASE("ROC-AUC with one missing low-scored record") {
  MaskedDataset d({0.9, 0.2, 0.1}, {Obs::kPositive, Obs::kNegative, Obs::kMissing});
  LabelModel m(d.missing_indices(), {0.5});
  const auto dist = enumerate_distribution(d, m, MetricKind::kRocAuc);
  check_distribution(dist, {0.5, 1.0}, {0.5, 0.5});
  const auto mom = exact_moments(dist);
  CHECK(mom.mean == doctest::Approx(0.75));
  CHECK(mom.variance == doctest::Approx(0.0625));
}

TEST_CASE("exact_moments of hand-written distributions") {
  ExactDistribution point{{0.7}, {1.0}, 0.0};
  CHECK(exact_moments(point).mean == doctest::Approx(0.7));
  CHECK(exact_moments(point).variance == doctest::Approx(0.0));
  ExactDistribution all_undefined{{}, {}, 1.0};
  CHECK_THROWS_AS(exact_moments(all_undefined), Error);
}

TEST_CASE("enumeration above the cap is refused") {
  std::vector<double> s(21, 0.5);
  std::vector<Obs> o(21, Obs::kMissing);
  MaskedDataset d(s, o);
  LabelModel m(d.missing_indices(), std::vector<double>(21, 0.5));
  CHECK_THROWS_AS(enumerate_distribution(d, m, MetricKind::kAccuracy), Error);
  CHECK_NOTHROW(enumerate_distribution(d, m, MetricKind::kAccuracy, 0.5, 21));
}

TEST_CASE("UNDEFINED scenarios are separated into undefined_mass") {
  // Recall with no known positives: the all-negative scenario is UNDEFINED.
  MaskedDataset d({0.9, 0.4, 0.7}, {Obs::kNegative, Obs::kMissing, Obs::kMissing});
  LabelModel m(d.missing_indices(), {0.3, 0.6});
  const auto dist = enumerate_distribution(d, m, MetricKind::kRecall);
  CHECK(dist.undefined_mass == doctest::Approx(0.7 * 0.4));
  CHECK(dist.defined_mass() == doctest::Approx(1 - 0.28));
  CHECK(dist.cdf(1.0) == doctest::Approx(1.0));
}

TEST_CASE("substitution bounds examples") {
  MaskedDataset one({0.9, 0.8}, {Obs::kPositive, Obs::kMissing});
  const auto acc = metric_bounds(one, MetricKind::kAccuracy);
  CHECK(acc.pessimistic == doctest::Approx(0.5));
  CHECK(acc.optimistic == doctest::Approx(1.0));

  MaskedDataset none({0.9, 0.2}, {Obs::kPositive, Obs::kPositive});
  const auto b = metric_bounds(none, MetricKind::kAccuracy);
  CHECK(b.pessimistic == b.optimistic);

  MaskedDataset prec({0.9, 0.1, 0.7, 0.6}, {Obs::kPositive, Obs::kNegative, Obs::kMissing, Obs::kMissing});
  const auto pb = metric_bounds(prec, MetricKind::kPrecision);
  CHECK(pb.pessimistic == doctest::Approx(1.0 / 3.0));
  CHECK(pb.optimistic == doctest::Approx(1.0));

  CHECK_THROWS_WITH_AS(metric_bounds(prec, MetricKind::kRocAuc),
                       "bounds via substitution not defined for rank metrics; use "
                       "enumerate_distribution extremes",
                       Error);
}

TEST_CASE("poisson_binomial_pmf matches enumeration") {
  const std::vector<double> p{0.1, 0.5, 0.8, 0.35};
  std::vector<double> brute(p.size() + 1, 0.0);
  for (unsigned mask = 0; mask < 16; ++mask) {
    double w = 1;
    int c = 0;
    for (unsigned j = 0; j < 4; ++j) {
      const bool on = (mask >> j) & 1U;
      w *= on ? p[j] : 1 - p[j];
      c += on;
    }
    brute[static_cast<std::size_t>(c)] += w;
  }
  const auto pmf = poisson_binomial_pmf(p);
  for (std::size_t c = 0; c < brute.size(); ++c) CHECK(pmf[c] == doctest::Approx(brute[c]).epsilon(1e-14));
}

TEST_CASE("random instances: enumeration agrees with an independent brute force") {
  pemi::Rng rng(7);
  for (int trial = 0; trial < 150; ++trial) {
    const auto inst = support::random_instance(rng, {2, 10, 8});
    for (auto kind : kAllMetrics) {
      std::map<double, double> expect;
      double undefined = 0.0;
      support::brute_force(inst, [&](const std::vector<int>& y, double w) {
        const std::vector<std::uint8_t> yb(y.begin(), y.end());
        const auto v = metric_value(kind, yb, inst.data.scores());
        if (v) expect[*v] += w;
        else undefined += w;
      });
      const auto dist = enumerate_distribution(inst.data, inst.model, kind);
      double total = dist.undefined_mass;
      for (double mass : dist.masses) total += mass;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(dist.undefined_mass == doctest::Approx(undefined).epsilon(1e-12));
      for (std::size_t i = 1; i < dist.values.size(); ++i) CHECK(dist.values[i] > dist.values[i - 1]);
      // The map may hold values differing only by rounding; compare CDFs.
      double acc = 0.0;
      for (const auto& [v, w] : expect) {
        acc += w;
        const double mine = dist.cdf(v + 1e-12) * dist.defined_mass();
        CHECK(mine == doctest::Approx(acc).epsilon(1e-9));
      }
      if (is_cm_metric(kind)) {
        const auto conv = convolve_cm_distribution(inst.data, inst.model, kind);
        CHECK(conv.undefined_mass == doctest::Approx(dist.undefined_mass).epsilon(1e-12));
        for (double v : dist.values) CHECK(conv.cdf(v) == doctest::Approx(dist.cdf(v)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("support extremes equal substitution bounds for CM metrics") {
  pemi::Rng rng(8);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = support::random_instance(rng);
    for (auto kind : {MetricKind::kPrecision, MetricKind::kRecall, MetricKind::kAccuracy, MetricKind::kF1}) {
      const auto dist = enumerate_distribution(inst.data, inst.model, kind);
      MetricBounds b{};
      try {
        b = metric_bounds(inst.data, kind);
      } catch (const Error&) {
        CHECK(dist.undefined_mass > 0.0);
        continue;
      }
      const auto ext = support_extremes(dist);
      CHECK(ext.pessimistic == doctest::Approx(b.pessimistic).epsilon(1e-12));
      CHECK(ext.optimistic == doctest::Approx(b.optimistic).epsilon(1e-12));
      CHECK(b.pessimistic <= b.optimistic);
      ++checked;
    }
  }
  CHECK(checked > 600);
}

TEST_CASE("enumerated accuracy mean equals the closed form") {
  pemi::Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = support::random_instance(rng);
    const auto mom = exact_moments(enumerate_distribution(inst.data, inst.model, MetricKind::kAccuracy));
    const auto g = metric_gauss(MetricKind::kAccuracy, inst.data, inst.model);
    CHECK(std::abs(mom.mean - g.mu()) < 1e-10);
  }
}

TEST_CASE("raising p of a missing predicted positive raises TP-monotone means") {
  pemi::Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = support::random_instance(rng, {3, 10, 8});
    const auto psi = induce_classifier(inst.data.scores(), 0.5);
    const auto& miss = inst.data.missing_indices();
    std::vector<double> p(inst.model.p().begin(), inst.model.p().end());
    std::size_t target = miss.size();
    for (std::size_t j = 0; j < miss.size(); ++j)
      if (psi[miss[j]]) target = j;
    if (target == miss.size()) continue;
    std::vector<double> raised = p;
    raised[target] = std::min(0.99, p[target] + 0.3);
    LabelModel hi(miss, raised);
    for (auto kind : {MetricKind::kAccuracy, MetricKind::kPrecision}) {
      const auto lo_d = enumerate_distribution(inst.data, inst.model, kind);
      const auto hi_d = enumerate_distribution(inst.data, hi, kind);
      if (lo_d.undefined_mass > 0 || hi_d.undefined_mass > 0) continue;
      CHECK(exact_moments(hi_d).mean >= exact_moments(lo_d).mean - 1e-12);
    }
  }
}
