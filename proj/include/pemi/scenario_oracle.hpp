#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pemi/dataset.hpp"
#include "pemi/label_models.hpp"
#include "pemi/metrics.hpp"

namespace pemi {

// Discrete law of a metric over all label scenarios. `values` strictly
// increase; masses plus undefined_mass sum to one.
struct ExactDistribution {
  std::vector<double> values;
  std::vector<double> masses;
  double undefined_mass = 0.0;

  double defined_mass() const;
  // P[value <= t] renormalised over the defined mass.
  double cdf(double t) const;
};

inline constexpr std::size_t kDefaultScenarioCap = 20;
inline constexpr double kValueMergeTolerance = 1e-12;

// Visits every scenario consistent with the observed labels, passing the
// full label vector and its probability mass. Scenario order follows the
// binary counter over missing_indices().
void for_each_scenario(const MaskedDataset& data, const LabelModel& model,
                       const std::function<void(std::span<const std::uint8_t>, double)>& visit,
                       std::size_t cap = kDefaultScenarioCap);

ExactDistribution enumerate_distribution(const MaskedDataset& data, const LabelModel& model,
                                         MetricKind kind, double threshold = kDefaultThreshold,
                                         std::size_t cap = kDefaultScenarioCap);

// Exact law of a confusion-matrix metric without enumerating scenarios: the
// metric depends only on how many missing psi=1 and psi=0 records are
// positive, and those two counts are independent Poisson-binomials.
// O(m1 * m0) support points.
ExactDistribution convolve_cm_distribution(const MaskedDataset& data, const LabelModel& model,
                                           MetricKind kind,
                                           double threshold = kDefaultThreshold);

// Pmf of a sum of independent Bernoulli(p_i) by dynamic programming.
std::vector<double> poisson_binomial_pmf(std::span<const double> p);

struct Moments {
  double mean;
  double variance;
};
Moments exact_moments(const ExactDistribution& dist);

struct MetricBounds {
  double pessimistic;
  double optimistic;
};

// Oracle substitution bounds: s_i = psi_i (optimistic), s_i = 1 - psi_i
// (pessimistic) on every missing record. Confusion-matrix metrics only.
MetricBounds metric_bounds(const MaskedDataset& data, MetricKind kind,
                           double threshold = kDefaultThreshold);

// Smallest and largest defined value of an enumerated distribution; the
// substitute for substitution bounds on rank metrics.
MetricBounds support_extremes(const ExactDistribution& dist);

}  // namespace pemi
