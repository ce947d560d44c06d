#include "pemi/pemi.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "pemi/error.hpp"
#include "pemi/parallel.hpp"
#include "pemi/rng.hpp"

namespace pemi {

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples, std::size_t undefined_count)
    : samples_(std::move(samples)), undefined_count_(undefined_count) {
  std::sort(samples_.begin(), samples_.end());
}

double EmpiricalCdf::operator()(double t) const {
  if (samples_.empty()) throw Error("empirical CDF has no samples");
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), t);
  return static_cast<double>(it - samples_.begin()) / static_cast<double>(samples_.size());
}

double EmpiricalCdf::quantile(double q) const {
  if (samples_.empty()) throw Error("empirical CDF has no samples");
  if (!(q > 0.0 && q <= 1.0)) throw Error("quantile level must lie in (0,1]");
  const double m = static_cast<double>(samples_.size());
  auto idx = static_cast<std::size_t>(std::ceil(q * m - 1e-9));
  idx = std::clamp<std::size_t>(idx, 1, samples_.size());
  return samples_[idx - 1];
}

double EmpiricalCdf::mean() const {
  if (samples_.empty()) throw Error("empirical CDF has no samples");
  double s = 0.0;
  for (double v : samples_) s += v;
  return s / static_cast<double>(samples_.size());
}

double EmpiricalCdf::variance() const {
  const double mu = mean();
  double s = 0.0;
  for (double v : samples_) s += (v - mu) * (v - mu);
  return s / static_cast<double>(samples_.size());
}

std::string EmpiricalCdf::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "value\n";
  for (double v : samples_) os << v << '\n';
  return os.str();
}

double cdf_eval(const EmpiricalCdf& cdf, double t) { return cdf(t); }

EmpiricalCdf run_pemi(MetricKind kind, const MaskedDataset& data, const LabelModel& model,
                      const PemiOptions& options) {
  if (options.replicates == 0) throw Error("PEMI needs at least one replicate");
  model.check_domain(data);
  const std::size_t B = options.replicates;
  const auto& missing = data.missing_indices();
  const auto p = model.p();
  std::vector<double> values(B, 0.0);
  std::vector<std::uint8_t> defined(B, 0);

  if (kind == MetricKind::kRocAuc) {
    const RankIndex rank(data.scores());
    std::vector<std::uint8_t> base(data.n(), 0);
    for (std::size_t i : data.known_indices()) base[i] = static_cast<std::uint8_t>(data.known_label(i));
    parallel_for(B, options.threads, [&](std::size_t begin, std::size_t end) {
      auto labels = base;
      for (std::size_t b = begin; b < end; ++b) {
        Rng rng(derive_seed(options.seed, b));
        for (std::size_t j = 0; j < missing.size(); ++j) labels[missing[j]] = rng.bernoulli(p[j]);
        if (const auto v = rank.auc(labels)) {
          values[b] = *v;
          defined[b] = 1;
        }
      }
    });
  } else {
    const auto psi = induce_classifier(data.scores(), options.threshold);
    ConfusionCounts base;
    for (std::size_t i : data.known_indices()) {
      if (data.known_label(i)) (psi[i] ? base.tp : base.fn)++;
      else (psi[i] ? base.fp : base.tn)++;
    }
    std::vector<std::uint8_t> missing_psi(missing.size());
    for (std::size_t j = 0; j < missing.size(); ++j) missing_psi[j] = psi[missing[j]];
    parallel_for(B, options.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        Rng rng(derive_seed(options.seed, b));
        ConfusionCounts cm = base;
        for (std::size_t j = 0; j < missing.size(); ++j) {
          const bool y = rng.bernoulli(p[j]);
          if (y) (missing_psi[j] ? cm.tp : cm.fn)++;
          else (missing_psi[j] ? cm.fp : cm.tn)++;
        }
        if (const auto v = metric_from_counts(kind, cm)) {
          values[b] = *v;
          defined[b] = 1;
        }
      }
    });
  }

  std::vector<double> samples;
  samples.reserve(B);
  for (std::size_t b = 0; b < B; ++b)
    if (defined[b]) samples.push_back(values[b]);
  const std::size_t undefined = B - samples.size();
  if (samples.empty())
    throw Error("all " + std::to_string(B) + " PEMI replicates were UNDEFINED");
  return EmpiricalCdf(std::move(samples), undefined);
}

}  // namespace pemi
