#include "pemi/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pemi/error.hpp"

namespace pemi {

using nlohmann::json;

void Table::add(std::vector<json> row) {
  if (row.size() != columns.size()) throw Error("report row width does not match its columns");
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_cell(const json& v) {
  if (v.is_null()) return "NA";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number()) return format_number(v.get<double>());
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + '"';
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ',';
    out += t.columns[c];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += csv_cell(row[c]);
    }
    out += '\n';
  }
  return out;
}

std::string table_to_json(const Table& t, const std::string& command, const json& config) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json obj = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) obj[t.columns[c]] = row[c];
    rows.push_back(std::move(obj));
  }
  json doc = {{"command", command}, {"config", config}, {"rows", rows}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> distribution_columns() {
  std::vector<std::string> cols{"metric", "method", "policy", "mean", "variance"};
  for (double q : kSummaryQuantiles) {
    char name[16];
    std::snprintf(name, sizeof name, "q%02d", static_cast<int>(std::lround(q * 100)));
    cols.emplace_back(name);
  }
  for (const char* c : {"replicates", "undefined_count", "method_tag", "bound_kind", "bound",
                        "bound_vacuous", "warnings"})
    cols.emplace_back(c);
  return cols;
}

std::vector<json> DistributionRow::cells() const {
  std::vector<json> row{metric, method, policy, number_or_null(mean), number_or_null(variance)};
  for (double q : quantiles) row.push_back(number_or_null(q));
  row.push_back(replicates);
  row.push_back(undefined_count);
  row.push_back(method_tag);
  if (bound) {
    row.push_back(bound->kind);
    row.push_back(number_or_null(bound->value));
    row.push_back(bound->vacuous());
  } else {
    row.insert(row.end(), {nullptr, nullptr, nullptr});
  }
  row.push_back(join(warnings, "; "));
  return row;
}

DistributionRow summarize(const EmpiricalCdf& cdf) {
  DistributionRow r;
  r.mean = cdf.mean();
  r.variance = cdf.variance();
  for (double q : kSummaryQuantiles) r.quantiles.push_back(cdf.quantile(q));
  r.replicates = cdf.replicates();
  r.undefined_count = cdf.undefined_count();
  r.method_tag = "monte-carlo";
  return r;
}

DistributionRow summarize(const GaussianCdf& cdf) {
  DistributionRow r;
  r.mean = cdf.mu();
  r.variance = cdf.sigma2();
  for (double q : kSummaryQuantiles) r.quantiles.push_back(cdf.quantile(q));
  r.method_tag = cdf.method_tag();
  return r;
}

DistributionRow summarize(const ExactDistribution& dist) {
  DistributionRow r;
  const auto m = exact_moments(dist);
  r.mean = m.mean;
  r.variance = m.variance;
  const double total = dist.defined_mass();
  for (double q : kSummaryQuantiles) {
    double acc = 0.0;
    std::size_t i = 0;
    while (i + 1 < dist.values.size() && (acc + dist.masses[i]) / total < q - 1e-12)
      acc += dist.masses[i++];
    r.quantiles.push_back(dist.values[i]);
  }
  r.method_tag = "enumeration";
  if (dist.undefined_mass > 0.0)
    r.warnings.push_back("undefined scenario mass " + format_number(dist.undefined_mass));
  return r;
}

Table fidelity_table(const FidelityReport& report) {
  const bool series = !report.entries.empty() && report.entries.front().mnar_positive_fraction;
  Table t;
  if (series) t.columns.push_back("eta");
  for (const char* c : {"method", "policy", "metric", "measure", "value", "ci_lo", "ci_hi"})
    t.columns.emplace_back(c);
  for (const auto& e : report.entries) {
    const std::pair<const char*, const Interval*> measures[] = {
        {"ks", &e.ks}, {"w1", &e.w1}, {"mae", &e.mae}, {"rmse", &e.rmse}};
    for (const auto& [name, iv] : measures) {
      std::vector<json> row;
      if (series) row.push_back(*e.mnar_positive_fraction);
      row.insert(row.end(), {e.method, e.policy, to_string(e.metric), name,
                             number_or_null(iv->value), number_or_null(iv->lo),
                             number_or_null(iv->hi)});
      t.add(std::move(row));
    }
  }
  return t;
}

std::string fidelity_to_json(const FidelityReport& report, const json& config) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    auto iv = [](const Interval& i) {
      return json{{"value", number_or_null(i.value)},
                  {"ci_lo", number_or_null(i.lo)},
                  {"ci_hi", number_or_null(i.hi)}};
    };
    json obj = {{"method", e.method},
                {"policy", e.policy},
                {"metric", to_string(e.metric)},
                {"replications", e.replications},
                {"skipped", e.skipped},
                {"ks", iv(e.ks)},
                {"w1", iv(e.w1)},
                {"mae", iv(e.mae)},
                {"rmse", iv(e.rmse)}};
    if (e.mnar_positive_fraction) obj["eta"] = *e.mnar_positive_fraction;
    entries.push_back(std::move(obj));
  }
  json doc = {{"command", "experiment"}, {"config", config}, {"entries", entries}};
  return doc.dump(2) + "\n";
}

std::string fidelity_summary(const FidelityReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-12s %-11s %-10s %5s %9s %9s %9s %9s\n", "eta",
                "method", "policy", "metric", "reps", "ks", "w1", "mae", "rmse");
  os << line;
  for (const auto& e : report.entries) {
    const std::string eta = e.mnar_positive_fraction ? format_number(*e.mnar_positive_fraction) : "-";
    std::snprintf(line, sizeof line, "%-6s %-12s %-11s %-10s %5zu %9.4f %9.4f %9.4f %9.4f\n",
                  eta.c_str(), e.method.c_str(), e.policy.c_str(), to_string(e.metric).c_str(),
                  e.replications, e.ks.value, e.w1.value, e.mae.value, e.rmse.value);
    os << line;
  }
  return os.str();
}

}  // namespace pemi
