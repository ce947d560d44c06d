#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pemi {

enum class MetricKind { kPrecision, kRecall, kAccuracy, kF1, kRocAuc };

inline constexpr MetricKind kAllMetrics[] = {MetricKind::kPrecision, MetricKind::kRecall,
                                             MetricKind::kAccuracy, MetricKind::kF1,
                                             MetricKind::kRocAuc};

std::string to_string(MetricKind kind);
// Accepts "precision", "recall", "accuracy", "f1", "roc-auc" (also "roc_auc", "auc").
MetricKind parse_metric(const std::string& name);

inline bool is_cm_metric(MetricKind kind) { return kind != MetricKind::kRocAuc; }

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;

  std::int64_t n() const { return tp + fn + fp + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// A full label assignment (one 0/1 per record).
using ScenarioLabels = std::vector<std::uint8_t>;

// psi_i = 1 iff score_i >= threshold; threshold must lie in (0, 1).
std::vector<std::uint8_t> induce_classifier(std::span<const double> scores, double threshold);

ConfusionCounts confusion_counts(std::span<const std::uint8_t> labels,
                                 std::span<const std::uint8_t> preds);

// Empty optional means the metric's denominator is zero (UNDEFINED).
std::optional<double> metric_from_counts(MetricKind kind, const ConfusionCounts& cm);

// Concordant pairs over ordered (positive, negative) pairs, ties counted as
// concordant: sum_ij 1{s_i >= s_j} y_i (1 - y_j) / sum_ij y_i (1 - y_j).
std::optional<double> roc_auc(std::span<const std::uint8_t> labels,
                              std::span<const double> scores);

std::optional<double> metric_value(MetricKind kind, std::span<const std::uint8_t> labels,
                                   std::span<const double> scores,
                                   double threshold = kDefaultThreshold);

// Precomputed score order for repeated ROC-AUC evaluation on the same scores
// with varying labels; each call is O(n).
class RankIndex {
 public:
  RankIndex() = default;
  explicit RankIndex(std::span<const double> scores);

  // Numerator and denominator of the ROC-AUC estimator for given labels.
  struct PairCounts {
    double concordant = 0.0;
    double pairs = 0.0;
  };
  PairCounts pair_counts(std::span<const std::uint8_t> labels) const;
  std::optional<double> auc(std::span<const std::uint8_t> labels) const;

 private:
  std::vector<std::size_t> order_;        // indices by ascending score
  std::vector<std::size_t> group_end_;    // exclusive end of each tie group in order_
};

}  // namespace pemi
