#pragma once

// Random instances and brute-force oracles shared by the unit and
// acceptance tests. The oracles loop over label bitmasks and count pairs
// directly; they call nothing from the library beyond the data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pemi/dataset.hpp"
#include "pemi/label_models.hpp"
#include "pemi/rng.hpp"

namespace support {

struct Instance {
  pemi::MaskedDataset data;
  pemi::LabelModel model;
};

struct InstanceShape {
  std::size_t n_min = 2;
  std::size_t n_max = 14;
  std::size_t m_max = 12;
  double p_lo = 0.05;
  double p_hi = 0.95;
};

// Scores are drawn on a coarse grid half of the time so that ties occur.
inline Instance random_instance(pemi::Rng& rng, const InstanceShape& shape = {}) {
  const std::size_t n = shape.n_min + rng.below(shape.n_max - shape.n_min + 1);
  const std::size_t m = rng.below(std::min(n, shape.m_max) + 1);
  const bool grid = rng.bernoulli(0.5);
  std::vector<double> scores(n);
  for (auto& s : scores) s = grid ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  pemi::shuffle(order, rng);
  std::vector<pemi::ObservedLabel> observed(n);
  for (std::size_t i = 0; i < n; ++i) observed[i] = pemi::observed_from_bit(rng.bernoulli(0.5));
  for (std::size_t t = 0; t < m; ++t) observed[order[t]] = pemi::ObservedLabel::kMissing;
  pemi::MaskedDataset data(scores, observed);
  std::vector<double> p(data.num_missing());
  for (auto& v : p) v = shape.p_lo + (shape.p_hi - shape.p_lo) * rng.uniform();
  pemi::LabelModel model(data.missing_indices(), p);
  return {std::move(data), std::move(model)};
}

// Calls visit(labels, mass) for every scenario.
template <typename Visit>
void brute_force(const Instance& inst, Visit&& visit) {
  const auto& d = inst.data;
  const auto& miss = d.missing_indices();
  const auto p = inst.model.p();
  std::vector<int> labels(d.n(), 0);
  for (std::size_t i : d.known_indices()) labels[i] = d.known_label(i);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << miss.size()); ++mask) {
    double mass = 1.0;
    for (std::size_t j = 0; j < miss.size(); ++j) {
      const int y = static_cast<int>((mask >> j) & 1U);
      labels[miss[j]] = y;
      mass *= y ? p[j] : 1.0 - p[j];
    }
    visit(labels, mass);
  }
}

// Weighted first and second moments of a vector-valued scenario statistic.
template <std::size_t K>
struct MomentAccumulator {
  std::array<double, K> mean{};
  std::array<std::array<double, K>, K> second{};

  void add(const std::array<double, K>& x, double w) {
    for (std::size_t a = 0; a < K; ++a) {
      mean[a] += w * x[a];
      for (std::size_t b = 0; b < K; ++b) second[a][b] += w * x[a] * x[b];
    }
  }
  double cov(std::size_t a, std::size_t b) const { return second[a][b] - mean[a] * mean[b]; }
};

// (TP, FN, FP, TN) moments.
inline MomentAccumulator<4> brute_cm_moments(const Instance& inst, double tau) {
  MomentAccumulator<4> acc;
  const auto scores = inst.data.scores();
  brute_force(inst, [&](const std::vector<int>& y, double w) {
    std::array<double, 4> c{};
    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool pred = scores[i] >= tau;
      if (y[i]) c[pred ? 0 : 1] += 1;
      else c[pred ? 2 : 3] += 1;
    }
    acc.add(c, w);
  });
  return acc;
}

// (numerator, denominator) moments of the ROC-AUC estimator.
inline MomentAccumulator<2> brute_auc_moments(const Instance& inst) {
  MomentAccumulator<2> acc;
  const auto s = inst.data.scores();
  brute_force(inst, [&](const std::vector<int>& y, double w) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double pair = y[i] * (1 - y[j]);
        den += pair;
        if (s[i] >= s[j]) num += pair;
      }
    acc.add({num, den}, w);
  });
  return acc;
}

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// sup_t |F(t) - G(t)| for a discrete law (values ascending, masses over the
// defined part) against any CDF G, checked just below and just above every
// atom. Atom spacing must exceed `eps`.
template <typename Cdf>
double ks_discrete(const std::vector<double>& values, const std::vector<double>& masses, Cdf&& g,
                   double eps = 1e-9) {
  double total = 0;
  for (double m : masses) total += m;
  double below = 0, worst = 0;
  for (std::size_t a = 0; a < values.size(); ++a) {
    const double above = below + masses[a] / total;
    worst = std::max(worst, std::abs(below - g(values[a] - eps)));
    worst = std::max(worst, std::abs(above - g(values[a] + eps)));
    below = above;
  }
  return worst;
}

inline double normal_cdf_reference(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace support
