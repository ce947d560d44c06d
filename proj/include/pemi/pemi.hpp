#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pemi/dataset.hpp"
#include "pemi/label_models.hpp"
#include "pemi/metrics.hpp"

namespace pemi {

// Step CDF over the defined replicate values. samples.size() +
// undefined_count == replicates.
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  EmpiricalCdf(std::vector<double> samples, std::size_t undefined_count);

  const std::vector<double>& samples() const { return samples_; }
  std::size_t undefined_count() const { return undefined_count_; }
  std::size_t replicates() const { return samples_.size() + undefined_count_; }

  // Right-continuous: #{samples <= t} / #samples.
  double operator()(double t) const;
  // Smallest sample x with F(x) >= q, q in (0, 1].
  double quantile(double q) const;
  double mean() const;
  double variance() const;

  std::string to_csv() const;

 private:
  std::vector<double> samples_;
  std::size_t undefined_count_ = 0;
};

double cdf_eval(const EmpiricalCdf& cdf, double t);

struct PemiOptions {
  std::size_t replicates = 1000;
  double threshold = kDefaultThreshold;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Monte-Carlo multiple imputation: each replicate draws every missing label
// from its Bernoulli parameter, keeps observed labels, and evaluates the
// metric. Replicate b uses its own stream derive_seed(seed, b), so results
// do not depend on the thread count.
EmpiricalCdf run_pemi(MetricKind kind, const MaskedDataset& data, const LabelModel& model,
                      const PemiOptions& options);

}  // namespace pemi
