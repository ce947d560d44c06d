#include "pemi/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "pemi/error.hpp"

namespace pemi {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kPrecision: return "precision";
    case MetricKind::kRecall: return "recall";
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kF1: return "f1";
    case MetricKind::kRocAuc: return "roc-auc";
  }
  return "unknown";
}

MetricKind parse_metric(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "precision") return MetricKind::kPrecision;
  if (s == "recall") return MetricKind::kRecall;
  if (s == "accuracy") return MetricKind::kAccuracy;
  if (s == "f1") return MetricKind::kF1;
  if (s == "roc-auc" || s == "roc_auc" || s == "rocauc" || s == "auc") return MetricKind::kRocAuc;
  throw Error("unknown metric '" + name + "'");
}

std::vector<std::uint8_t> induce_classifier(std::span<const double> scores, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error("threshold must lie in the open interval (0, 1)");
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

ConfusionCounts confusion_counts(std::span<const std::uint8_t> labels,
                                 std::span<const std::uint8_t> preds) {
  if (labels.size() != preds.size()) throw Error("labels and predictions differ in length");
  ConfusionCounts cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (preds[i] ? cm.tp : cm.fn)++;
    else (preds[i] ? cm.fp : cm.tn)++;
  }
  return cm;
}

std::optional<double> metric_from_counts(MetricKind kind, const ConfusionCounts& cm) {
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  switch (kind) {
    case MetricKind::kPrecision: return ratio(cm.tp, cm.tp + cm.fp);
    case MetricKind::kRecall: return ratio(cm.tp, cm.tp + cm.fn);
    case MetricKind::kAccuracy: return ratio(cm.tp + cm.tn, cm.n());
    case MetricKind::kF1: return ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    case MetricKind::kRocAuc: break;
  }
  throw Error("ROC-AUC is not a confusion-matrix metric");
}

RankIndex::RankIndex(std::span<const double> scores) : order_(scores.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (i + 1 == order_.size() || scores[order_[i + 1]] != scores[order_[i]])
      group_end_.push_back(i + 1);
  }
}

RankIndex::PairCounts RankIndex::pair_counts(std::span<const std::uint8_t> labels) const {
  if (labels.size() != order_.size()) throw Error("labels and scores differ in length");
  // Sweep tie groups in ascending score; a positive is concordant with every
  // negative at or below its score, its own tie group included.
  double negatives_at_or_below = 0.0;
  double positives = 0.0, negatives = 0.0;
  double concordant = 0.0;
  std::size_t begin = 0;
  for (std::size_t end : group_end_) {
    double pos_in_group = 0.0, neg_in_group = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      if (labels[order_[r]]) pos_in_group += 1.0;
      else neg_in_group += 1.0;
    }
    negatives_at_or_below += neg_in_group;
    concordant += pos_in_group * negatives_at_or_below;
    positives += pos_in_group;
    negatives += neg_in_group;
    begin = end;
  }
  return {concordant, positives * negatives};
}

std::optional<double> RankIndex::auc(std::span<const std::uint8_t> labels) const {
  const auto pc = pair_counts(labels);
  if (pc.pairs == 0.0) return std::nullopt;
  return pc.concordant / pc.pairs;
}

std::optional<double> roc_auc(std::span<const std::uint8_t> labels,
                              std::span<const double> scores) {
  return RankIndex(scores).auc(labels);
}

std::optional<double> metric_value(MetricKind kind, std::span<const std::uint8_t> labels,
                                   std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) throw Error("labels and scores differ in length");
  if (kind == MetricKind::kRocAuc) return roc_auc(labels, scores);
  const auto preds = induce_classifier(scores, threshold);
  return metric_from_counts(kind, confusion_counts(labels, preds));
}

}  // namespace pemi
