#include "pemi/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pemi/error.hpp"
#include "pemi/rng.hpp"

namespace pemi {

MaskedDataset::MaskedDataset(std::vector<double> scores,
                             std::vector<ObservedLabel> observed,
                             std::vector<std::string> ids)
    : scores_(std::move(scores)), observed_(std::move(observed)), ids_(std::move(ids)) {
  if (scores_.size() != observed_.size())
    throw Error("scores and observed labels differ in length");
  if (!ids_.empty() && ids_.size() != scores_.size())
    throw Error("ids and scores differ in length");
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!(scores_[i] >= 0.0 && scores_[i] <= 1.0))
      throw Error("score of record " + std::to_string(i) + " outside [0,1]");
    (observed_[i] == ObservedLabel::kMissing ? missing_ : known_).push_back(i);
  }
}

int MaskedDataset::known_label(std::size_t i) const {
  return observed_[i] == ObservedLabel::kPositive ? 1 : 0;
}

bool GroundTruth::complete() const {
  return std::all_of(labels.begin(), labels.end(),
                     [](const std::optional<int>& y) { return y.has_value(); });
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing_marker(const std::string& s) {
  if (s.empty()) return true;
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return lower == "na";
}

double parse_real(const std::string& s, bool& ok) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = res.ec == std::errc() && res.ptr == s.data() + s.size();
  return v;
}

std::optional<int> parse_bit(const std::string& s, bool& ok) {
  ok = true;
  if (is_missing_marker(s)) return std::nullopt;
  bool real_ok = false;
  const double v = parse_real(s, real_ok);
  if (real_ok && (v == 0.0 || v == 1.0)) return static_cast<int>(v);
  ok = false;
  return std::nullopt;
}

std::string row_error(std::size_t row, const std::string& column, const std::string& what) {
  return "row " + std::to_string(row) + ", column '" + column + "': " + what;
}

std::string format_score(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

LoadedDataset parse_dataset(const std::string& csv_text, const CsvSchema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw Error("no records");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto score_col = column(schema.score);
  const auto label_col = column(schema.label);
  if (!score_col) throw Error("missing required column '" + schema.score + "'");
  if (!label_col) throw Error("missing required column '" + schema.label + "'");
  const auto truth_col = column(schema.truth);
  const auto id_col = column(schema.id);

  std::vector<double> scores;
  std::vector<ObservedLabel> observed;
  std::vector<std::string> ids;
  LoadedDataset out;
  out.has_truth_column = truth_col.has_value();
  out.has_id_column = id_col.has_value();

  // Row numbers count data rows from 1, matching spreadsheet-style reporting
  // with the header excluded.
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error("row " + std::to_string(row) + ": expected " +
                  std::to_string(header.size()) + " fields, got " +
                  std::to_string(fields.size()));
    bool ok = false;
    const double s = parse_real(fields[*score_col], ok);
    if (!ok) throw Error(row_error(row, schema.score, "not a number"));
    if (!(s >= 0.0 && s <= 1.0))
      throw Error(row_error(row, schema.score, "score outside [0,1]"));
    const auto y = parse_bit(fields[*label_col], ok);
    if (!ok) throw Error(row_error(row, schema.label, "label must be 0, 1, empty or NA"));
    scores.push_back(s);
    observed.push_back(y ? observed_from_bit(*y) : ObservedLabel::kMissing);
    if (truth_col) {
      const auto t = parse_bit(fields[*truth_col], ok);
      if (!ok) throw Error(row_error(row, schema.truth, "truth must be 0, 1, empty or NA"));
      if (t && y && *t != *y)
        throw Error(row_error(row, schema.truth, "truth contradicts observed label"));
      out.truth.labels.push_back(t ? t : y);
    } else {
      out.truth.labels.push_back(y);
    }
    ids.push_back(id_col ? fields[*id_col] : std::to_string(row));
  }
  if (scores.empty()) throw Error("no records");
  out.data = MaskedDataset(std::move(scores), std::move(observed), std::move(ids));
  return out;
}

LoadedDataset load_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_dataset(buf.str(), schema);
}

std::string serialize_dataset(const LoadedDataset& loaded, const CsvSchema& schema) {
  const auto& d = loaded.data;
  std::ostringstream os;
  os << schema.score << ',' << schema.label;
  if (loaded.has_truth_column) os << ',' << schema.truth;
  if (loaded.has_id_column) os << ',' << schema.id;
  os << '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    os << format_score(d.scores()[i]) << ',';
    if (d.is_missing(i)) os << "NA";
    else os << d.known_label(i);
    if (loaded.has_truth_column) {
      const auto& t = loaded.truth.labels[i];
      os << ',';
      if (t) os << *t;
      else os << "NA";
    }
    if (loaded.has_id_column) os << ',' << d.ids()[i];
    os << '\n';
  }
  return os.str();
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels,
                                                       std::size_t folds,
                                                       std::uint64_t seed) {
  if (folds < 2) throw Error("stratified_folds needs at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw Error("stratified_folds requires fully labeled records");
    (labels[i] ? pos : neg).push_back(i);
  }
  if (pos.size() < folds || neg.size() < folds)
    throw Error("cannot stratify: a class has fewer members (" +
                std::to_string(std::min(pos.size(), neg.size())) + ") than folds (" +
                std::to_string(folds) + ")");
  Rng rng(seed);
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t slot = 0;
  for (const auto* cls : {&pos, &neg})
    for (std::size_t idx : *cls) out[slot++ % folds].push_back(idx);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

}  // namespace pemi
