#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pemi {

enum class ObservedLabel : std::int8_t { kNegative = 0, kPositive = 1, kMissing = -1 };

inline ObservedLabel observed_from_bit(int y) {
  return y ? ObservedLabel::kPositive : ObservedLabel::kNegative;
}

// One evaluation row as it appears on disk, truth channel included.
// Estimators never see this type; they receive a MaskedDataset.
struct EvalRecord {
  double score = 0.0;
  ObservedLabel observed = ObservedLabel::kMissing;
  std::optional<int> truth;
  std::string id;
};

// Scores and observed labels with explicit known / missing index sets.
// Carries no truth labels. Immutable after construction.
class MaskedDataset {
 public:
  MaskedDataset() = default;
  MaskedDataset(std::vector<double> scores, std::vector<ObservedLabel> observed,
                std::vector<std::string> ids = {});

  std::size_t n() const { return scores_.size(); }
  std::size_t k() const { return known_.size(); }
  std::size_t num_missing() const { return missing_.size(); }

  std::span<const double> scores() const { return scores_; }
  std::span<const ObservedLabel> observed() const { return observed_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::size_t>& known_indices() const { return known_; }
  const std::vector<std::size_t>& missing_indices() const { return missing_; }

  bool is_missing(std::size_t i) const {
    return observed_[i] == ObservedLabel::kMissing;
  }
  // Observed label of a known record as 0/1.
  int known_label(std::size_t i) const;

 private:
  std::vector<double> scores_;
  std::vector<ObservedLabel> observed_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> known_;
  std::vector<std::size_t> missing_;
};

// Truth labels held apart from the estimator view; only the experiment
// harness reads them.
struct GroundTruth {
  std::vector<std::optional<int>> labels;
  bool complete() const;
};

struct CsvSchema {
  std::string score = "score";
  std::string label = "label";
  std::string truth = "truth";
  std::string id = "id";
};

struct LoadedDataset {
  MaskedDataset data;
  GroundTruth truth;
  bool has_truth_column = false;
  bool has_id_column = false;
};

LoadedDataset load_dataset(const std::string& path, const CsvSchema& schema = {});
LoadedDataset parse_dataset(const std::string& csv_text, const CsvSchema& schema = {});

// Writes score,label[,truth][,id]; missing labels become "NA".
std::string serialize_dataset(const LoadedDataset& loaded, const CsvSchema& schema = {});

// Stratified partition of fully labeled records into `folds` groups of
// indices. Class members are shuffled per seed and dealt round-robin, the
// negative class continuing where the positive class stopped.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels,
                                                       std::size_t folds,
                                                       std::uint64_t seed);

}  // namespace pemi
