#include "pemi/scenario_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pemi/error.hpp"

namespace pemi {

double ExactDistribution::defined_mass() const {
  return std::accumulate(masses.begin(), masses.end(), 0.0);
}

double ExactDistribution::cdf(double t) const {
  const double total = defined_mass();
  if (!(total > 0.0)) throw Error("distribution has no defined mass");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size() && values[i] <= t; ++i) acc += masses[i];
  return std::min(1.0, acc / total);
}

namespace {

struct WeightedValue {
  double value;
  double mass;
};

ExactDistribution merge_values(std::vector<WeightedValue> items, double undefined_mass) {
  std::stable_sort(items.begin(), items.end(),
                   [](const WeightedValue& a, const WeightedValue& b) { return a.value < b.value; });
  ExactDistribution out;
  out.undefined_mass = undefined_mass;
  double group_start = 0.0;
  for (const auto& it : items) {
    if (!out.values.empty() && it.value - group_start <= kValueMergeTolerance) {
      out.masses.back() += it.mass;
    } else {
      group_start = it.value;
      out.values.push_back(it.value);
      out.masses.push_back(it.mass);
    }
  }
  return out;
}

std::vector<std::uint8_t> base_labels(const MaskedDataset& data) {
  std::vector<std::uint8_t> labels(data.n(), 0);
  for (std::size_t i : data.known_indices())
    labels[i] = static_cast<std::uint8_t>(data.known_label(i));
  return labels;
}

ConfusionCounts known_counts(const MaskedDataset& data, std::span<const std::uint8_t> psi) {
  ConfusionCounts cm;
  for (std::size_t i : data.known_indices()) {
    if (data.known_label(i)) (psi[i] ? cm.tp : cm.fn)++;
    else (psi[i] ? cm.fp : cm.tn)++;
  }
  return cm;
}

}  // namespace

void for_each_scenario(const MaskedDataset& data, const LabelModel& model,
                       const std::function<void(std::span<const std::uint8_t>, double)>& visit,
                       std::size_t cap) {
  model.check_domain(data);
  const std::size_t m = data.num_missing();
  if (m > cap)
    throw Error("scenario enumeration over " + std::to_string(m) +
                " missing labels exceeds the cap of " + std::to_string(cap) +
                " (cost grows as 2^m)");
  auto labels = base_labels(data);
  const auto& missing = data.missing_indices();
  const auto p = model.p();
  const std::uint64_t count = std::uint64_t{1} << m;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    double mass = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool bit = (mask >> j) & 1U;
      labels[missing[j]] = bit ? 1 : 0;
      mass *= bit ? p[j] : 1.0 - p[j];
    }
    visit(labels, mass);
  }
}

ExactDistribution enumerate_distribution(const MaskedDataset& data, const LabelModel& model,
                                         MetricKind kind, double threshold, std::size_t cap) {
  std::vector<WeightedValue> items;
  double undefined = 0.0;
  if (kind == MetricKind::kRocAuc) {
    const RankIndex rank(data.scores());
    for_each_scenario(
        data, model,
        [&](std::span<const std::uint8_t> labels, double mass) {
          const auto v = rank.auc(labels);
          if (v) items.push_back({*v, mass});
          else undefined += mass;
        },
        cap);
  } else {
    const auto psi = induce_classifier(data.scores(), threshold);
    for_each_scenario(
        data, model,
        [&](std::span<const std::uint8_t> labels, double mass) {
          const auto v = metric_from_counts(kind, confusion_counts(labels, psi));
          if (v) items.push_back({*v, mass});
          else undefined += mass;
        },
        cap);
  }
  return merge_values(std::move(items), undefined);
}

std::vector<double> poisson_binomial_pmf(std::span<const double> p) {
  std::vector<double> pmf{1.0};
  pmf.reserve(p.size() + 1);
  for (double q : p) {
    pmf.push_back(0.0);
    for (std::size_t t = pmf.size() - 1; t > 0; --t) pmf[t] = pmf[t] * (1.0 - q) + pmf[t - 1] * q;
    pmf[0] *= 1.0 - q;
  }
  return pmf;
}

ExactDistribution convolve_cm_distribution(const MaskedDataset& data, const LabelModel& model,
                                           MetricKind kind, double threshold) {
  if (!is_cm_metric(kind)) throw Error("convolution oracle covers confusion-matrix metrics only");
  model.check_domain(data);
  const auto psi = induce_classifier(data.scores(), threshold);
  const ConfusionCounts base = known_counts(data, psi);
  std::vector<double> p_pred_pos, p_pred_neg;
  const auto& missing = data.missing_indices();
  for (std::size_t j = 0; j < missing.size(); ++j)
    (psi[missing[j]] ? p_pred_pos : p_pred_neg).push_back(model.p()[j]);
  const auto pmf1 = poisson_binomial_pmf(p_pred_pos);
  const auto pmf0 = poisson_binomial_pmf(p_pred_neg);
  const auto m1 = static_cast<std::int64_t>(p_pred_pos.size());
  const auto m0 = static_cast<std::int64_t>(p_pred_neg.size());

  std::vector<WeightedValue> items;
  items.reserve(pmf1.size() * pmf0.size());
  double undefined = 0.0;
  for (std::int64_t t1 = 0; t1 <= m1; ++t1) {
    for (std::int64_t t0 = 0; t0 <= m0; ++t0) {
      const double mass = pmf1[t1] * pmf0[t0];
      ConfusionCounts cm{base.tp + t1, base.fn + t0, base.fp + (m1 - t1), base.tn + (m0 - t0)};
      const auto v = metric_from_counts(kind, cm);
      if (v) items.push_back({*v, mass});
      else undefined += mass;
    }
  }
  return merge_values(std::move(items), undefined);
}

Moments exact_moments(const ExactDistribution& dist) {
  const double total = dist.defined_mass();
  if (!(total > 0.0)) throw Error("every scenario is UNDEFINED; moments do not exist");
  double mean = 0.0;
  for (std::size_t i = 0; i < dist.values.size(); ++i) mean += dist.masses[i] * dist.values[i];
  mean /= total;
  double var = 0.0;
  for (std::size_t i = 0; i < dist.values.size(); ++i) {
    const double d = dist.values[i] - mean;
    var += dist.masses[i] * d * d;
  }
  return {mean, var / total};
}

MetricBounds metric_bounds(const MaskedDataset& data, MetricKind kind, double threshold) {
  if (!is_cm_metric(kind))
    throw Error(
        "bounds via substitution not defined for rank metrics; use enumerate_distribution "
        "extremes");
  const auto psi = induce_classifier(data.scores(), threshold);
  auto optimistic = base_labels(data);
  auto pessimistic = optimistic;
  for (std::size_t i : data.missing_indices()) {
    optimistic[i] = psi[i];
    pessimistic[i] = psi[i] ? 0 : 1;
  }
  const auto hi = metric_from_counts(kind, confusion_counts(optimistic, psi));
  const auto lo = metric_from_counts(kind, confusion_counts(pessimistic, psi));
  if (!hi || !lo) throw Error("metric is UNDEFINED on a bounding scenario");
  return {*lo, *hi};
}

MetricBounds support_extremes(const ExactDistribution& dist) {
  if (dist.values.empty()) throw Error("distribution has no defined values");
  return {dist.values.front(), dist.values.back()};
}

}  // namespace pemi
