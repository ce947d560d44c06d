#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pemi/dataset.hpp"
#include "pemi/gauss.hpp"
#include "pemi/metrics.hpp"
#include "pemi/pemi.hpp"

namespace pemi {

// Fully labeled scores. `q` holds the generating probabilities for
// synthetic data and is empty otherwise.
struct LabeledSample {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<double> q;

  std::size_t size() const { return scores.size(); }
  LabeledSample subset(std::span<const std::size_t> idx) const;
};

enum class Mechanism { kMcar, kMnar };

struct MaskingSpec {
  Mechanism mechanism = Mechanism::kMcar;
  double p_m = 0.3;
  std::optional<double> mnar_positive_fraction;
  std::uint64_t seed = 0;

  void validate() const;
};

// Estimator view plus the held-out labels of the masked records.
struct MaskedSample {
  MaskedDataset data;
  GroundTruth truth;
};

MaskedSample mask_mcar(const LabeledSample& records, double p_m, std::uint64_t seed);
MaskedSample mask_mnar(const LabeledSample& records, double p_m, double positive_fraction,
                       std::uint64_t seed);
MaskedSample apply_masking(const LabeledSample& records, const MaskingSpec& spec);

// Masks only the records listed in `pool` (a sub-fold), with counts taken
// relative to the pool size. Other records keep their labels.
MaskedSample mask_within(const LabeledSample& records, std::span<const std::size_t> pool,
                         const MaskingSpec& spec);

LabeledSample synth_generate(std::size_t n, double coef, double intercept, double miscalibration,
                             std::uint64_t seed);

double pit_value(const EmpiricalCdf& cdf, double truth);
double pit_value(const GaussianCdf& cdf, double truth);

enum class Uniformity { kKs, kW1 };
double pit_uniformity(std::span<const double> pits, Uniformity measure);
double ks_vs_uniform(std::span<const double> pits);
double w1_vs_uniform(std::span<const double> pits);

enum class CenterMeasure { kMae, kRmse };
double center_error(std::span<const double> centers, std::span<const double> truths,
                    CenterMeasure measure);

// Metric distribution over resamples (with replacement) of the k
// nonmissing records.
EmpiricalCdf bootstrap_baseline(const MaskedDataset& data, MetricKind kind,
                                double threshold = kDefaultThreshold,
                                std::size_t replicates = 10000, std::uint64_t seed = 0,
                                unsigned threads = 1);

struct SynthSource {
  std::size_t n = 2000;
  double coef = 4.0;
  double intercept = -2.0;
  double miscalibration = 1.0;
  // Draw a fresh dataset for every round instead of re-folding one dataset,
  // so PIT values from different rounds share no labels.
  bool resample_per_round = false;
};

struct CsvSource {
  std::string path;
  CsvSchema schema;
};

struct ExperimentConfig {
  std::optional<SynthSource> synth;
  std::optional<CsvSource> csv;

  std::size_t folds = 10;
  std::size_t rounds = 1;
  std::uint64_t seed = 0;

  Mechanism mechanism = Mechanism::kMcar;
  double p_m = 0.3;
  std::vector<double> mnar_positive_fractions;

  std::vector<std::string> policies{"half", "prevalence", "calibrated"};
  std::vector<std::string> methods{"bootstrap", "pemi-B5", "pemi-B10", "pemi-B100",
                                   "pemi-gauss"};
  std::vector<MetricKind> metrics{std::begin(kAllMetrics), std::end(kAllMetrics)};

  double threshold = kDefaultThreshold;
  std::size_t calibration_bins = 10;
  double calibration_fraction = 0.1;
  std::size_t bootstrap_replicates = 10000;
  double beta_noise_variance = 0.0;

  double ci_level = 0.9;
  std::size_t ci_resamples = 1000;
  unsigned threads = 1;

  // Throws on unknown policies or methods, on policies that would read the
  // truth channel, and on inconsistent masking settings.
  void validate() const;
  std::size_t replications() const { return rounds * folds * 2; }
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct Interval {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct FidelityEntry {
  std::string method;
  std::string policy;
  MetricKind metric = MetricKind::kAccuracy;
  std::optional<double> mnar_positive_fraction;
  std::size_t replications = 0;  // PIT values collected
  std::size_t skipped = 0;       // replications with an UNDEFINED truth or prediction
  Interval ks;
  Interval w1;
  Interval mae;
  Interval rmse;
  std::vector<double> pits;
};

struct FidelityReport {
  std::vector<FidelityEntry> entries;

  const FidelityEntry& find(const std::string& method, const std::string& policy,
                            MetricKind metric,
                            std::optional<double> positive_fraction = std::nullopt) const;
};

FidelityReport run_experiment(const ExperimentConfig& config);

// Measures with percentile-bootstrap intervals over replications.
void summarize_fidelity(FidelityEntry& entry, std::span<const double> centers,
                        std::span<const double> truths, double ci_level, std::size_t resamples,
                        std::uint64_t seed);

}  // namespace pemi
