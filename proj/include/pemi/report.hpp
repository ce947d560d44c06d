#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "pemi/gauss.hpp"
#include "pemi/harness.hpp"
#include "pemi/pemi.hpp"
#include "pemi/scenario_oracle.hpp"

namespace pemi {

// Rows of JSON scalars under fixed columns. Every subcommand writes through
// this type so CSV and JSON layouts stay aligned.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void add(std::vector<nlohmann::json> row);
};

// Shortest round-trip decimal; "NA" for non-finite values.
std::string format_number(double v);

std::string table_to_csv(const Table& t);
// {"command": ..., "config": ..., "rows": [{column: value}, ...]}
std::string table_to_json(const Table& t, const std::string& command, const nlohmann::json& config);

inline constexpr double kSummaryQuantiles[] = {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};

// Columns shared by every predictive-distribution row.
std::vector<std::string> distribution_columns();

struct DistributionRow {
  std::string metric;
  std::string method;
  std::string policy;
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> quantiles;
  std::size_t replicates = 0;
  std::size_t undefined_count = 0;
  std::string method_tag;
  std::optional<KsBound> bound;
  std::vector<std::string> warnings;

  std::vector<nlohmann::json> cells() const;
};

DistributionRow summarize(const EmpiricalCdf& cdf);
DistributionRow summarize(const GaussianCdf& cdf);
DistributionRow summarize(const ExactDistribution& dist);

// Long format: [eta,] method, policy, metric, measure, value, ci_lo, ci_hi.
Table fidelity_table(const FidelityReport& report);
std::string fidelity_to_json(const FidelityReport& report, const nlohmann::json& config);
// Fixed-width console summary with one row per (method, policy, metric).
std::string fidelity_summary(const FidelityReport& report);

}  // namespace pemi
