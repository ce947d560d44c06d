#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pemi/dataset.hpp"

namespace pemi {

// Bernoulli parameter for each missing record. `indices` mirrors
// MaskedDataset::missing_indices() and `p[j]` belongs to `indices[j]`.
// Every p lies strictly inside (0, 1).
class LabelModel {
 public:
  LabelModel() = default;
  LabelModel(std::vector<std::size_t> indices, std::vector<double> p);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::span<const double> p() const { return p_; }
  std::size_t size() const { return p_.size(); }
  bool empty() const { return p_.empty(); }

  // min_i p_i (1 - p_i); 0.25 for an empty model.
  double min_variance() const;

  // Throws unless the domain equals data.missing_indices().
  void check_domain(const MaskedDataset& data) const;

  std::string to_csv() const;
  static LabelModel from_csv(const std::string& text);

 private:
  std::vector<std::size_t> indices_;
  std::vector<double> p_;
};

inline constexpr double kProbabilityClamp = 1e-6;

LabelModel assign_maxent_half(const MaskedDataset& data);
LabelModel assign_maxent_prevalence(const MaskedDataset& data, std::size_t n_pos,
                                    std::size_t n_total);
LabelModel assign_constant(const MaskedDataset& data, double p);
// Takes one probability per missing record, in missing_indices() order.
LabelModel assign_explicit(const MaskedDataset& data, std::span<const double> p);

// Logistic recalibration in logit space followed by equal-mass binning of the
// recalibrated calibration scores.
class ScalingBinningCalibrator {
 public:
  ScalingBinningCalibrator() = default;
  ScalingBinningCalibrator(double slope, double intercept, std::vector<double> bin_edges,
                           std::vector<double> bin_values);

  // sigmoid(slope * logit(clip(s)) + intercept). Monotone non-decreasing.
  double scale(double score) const;
  // Bin value of the scaled score.
  double operator()(double score) const;
  // Index of the bin holding an already scaled value.
  std::size_t bin_of(double scaled) const;

  double slope() const { return slope_; }
  double intercept() const { return intercept_; }
  std::size_t bins() const { return bin_values_.size(); }
  const std::vector<double>& bin_edges() const { return bin_edges_; }
  const std::vector<double>& bin_values() const { return bin_values_; }

  std::string to_json() const;
  static ScalingBinningCalibrator from_json(const std::string& text);

 private:

  double slope_ = 1.0;
  double intercept_ = 0.0;
  std::vector<double> bin_edges_{0.0, 1.0};
  std::vector<double> bin_values_{0.5};
};

inline constexpr double kScoreClip = 1e-6;

ScalingBinningCalibrator fit_scaling_binning(std::span<const double> scores,
                                             std::span<const int> labels,
                                             std::size_t bins = 10);

LabelModel calibrate_labels(const ScalingBinningCalibrator& cal, const MaskedDataset& data);

// Alpha and beta of the Beta distribution with the given mean and variance.
struct BetaParams {
  double alpha;
  double beta;
};
BetaParams beta_from_moments(double mean, double variance);

// Replaces each p_i by a Beta draw with mean p_i and the given variance.
// Requires variance < min_i p_i (1 - p_i).
LabelModel beta_noise(const LabelModel& model, double variance, std::uint64_t seed);

}  // namespace pemi
