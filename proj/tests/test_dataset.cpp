#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pemi/dataset.hpp"
#include "pemi/error.hpp"
#include "pemi/rng.hpp"

using namespace pemi;

TEST_CASE("three-row CSV with one NA label") {
  const auto loaded = parse_dataset("score,label\n0.9,1\n0.4,NA\n0.2,0\n");
  const auto& d = loaded.data;
  CHECK(d.n() == 3);
  CHECK(d.k() == 2);
  REQUIRE(d.missing_indices().size() == 1);
  CHECK(d.missing_indices()[0] == 1);
  CHECK(d.known_indices() == std::vector<std::size_t>{0, 2});
  CHECK(d.known_label(0) == 1);
  CHECK(d.known_label(2) == 0);
  CHECK_FALSE(loaded.has_truth_column);
}

TEST_CASE("missing marker: empty cell or NA in any case") {
  const auto d = parse_dataset("score,label\n0.1,\n0.2,na\n0.3,Na\n0.4,1\n").data;
  CHECK(d.num_missing() == 3);
  CHECK(d.k() == 1);
}

TEST_CASE("empty input is rejected with 'no records'") {
  CHECK_THROWS_WITH_AS(parse_dataset(""), "no records", Error);
  CHECK_THROWS_WITH_AS(parse_dataset("score,label\n"), "no records", Error);
}

TEST_CASE("score outside [0,1] names its row") {
  CHECK_THROWS_WITH_AS(parse_dataset("score,label\n0.5,1\n1.7,0\n"),
                       "row 2, column 'score': score outside [0,1]", Error);
}

TEST_CASE("malformed rows name row and column") {
  CHECK_THROWS_WITH_AS(parse_dataset("score,label\nabc,1\n"),
                       "row 1, column 'score': not a number", Error);
  CHECK_THROWS_WITH_AS(parse_dataset("score,label\n0.5,2\n"),
                       "row 1, column 'label': label must be 0, 1, empty or NA", Error);
  CHECK_THROWS_AS(parse_dataset("score,label\n0.5,1,3\n"), Error);
  CHECK_THROWS_AS(parse_dataset("label\n1\n"), Error);
}

TEST_CASE("truth column is read separately and must agree with observed labels") {
  const auto loaded = parse_dataset("score,label,truth,id\n0.9,1,1,a\n0.4,NA,0,b\n");
  CHECK(loaded.has_truth_column);
  CHECK(loaded.truth.complete());
  CHECK(*loaded.truth.labels[1] == 0);
  CHECK(loaded.data.is_missing(1));
  CHECK(loaded.data.ids() == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(parse_dataset("score,label,truth\n0.9,1,0\n"), Error);
}

TEST_CASE("custom column names and quoted fields") {
  CsvSchema schema;
  schema.score = "p_hat";
  schema.label = "y";
  const auto d = parse_dataset("\"p_hat\",y,note\n0.25,0,\"a, b\"\n0.75,,x\n", schema).data;
  CHECK(d.n() == 2);
  CHECK(d.scores()[0] == 0.25);
  CHECK(d.is_missing(1));
}

TEST_CASE("round trip through serialize_dataset") {
  const std::string text = "score,label,truth,id\n0.5,1,1,r1\n0.125,NA,0,r2\n1,0,0,r3\n";
  const auto loaded = parse_dataset(text);
  const std::string out = serialize_dataset(loaded);
  CHECK(out == text);
  const auto again = parse_dataset(out);
  CHECK(serialize_dataset(again) == out);

  Rng rng(5);
  std::string random_text = "score,label\n";
  for (int i = 0; i < 50; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g,%s\n", rng.uniform(),
                  rng.bernoulli(0.3) ? "NA" : (rng.bernoulli(0.5) ? "1" : "0"));
    random_text += buf;
  }
  const auto r = parse_dataset(random_text);
  const auto r2 = parse_dataset(serialize_dataset(r));
  CHECK(std::vector<double>(r.data.scores().begin(), r.data.scores().end()) ==
        std::vector<double>(r2.data.scores().begin(), r2.data.scores().end()));
  CHECK(r.data.missing_indices() == r2.data.missing_indices());
}

TEST_CASE("load_dataset reads a file and reports unreadable paths") {
  const std::string path = "pemi_test_dataset.csv";
  {
    std::ofstream f(path);
    f << "score,label\n0.3,1\n0.6,NA\n";
  }
  const auto d = load_dataset(path).data;
  CHECK(d.n() == 2);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), Error);
}

TEST_CASE("MaskedDataset index sets partition the records") {
  MaskedDataset d({0.1, 0.2, 0.3, 0.4},
                  {ObservedLabel::kMissing, ObservedLabel::kPositive, ObservedLabel::kMissing,
                   ObservedLabel::kNegative});
  std::set<std::size_t> all(d.known_indices().begin(), d.known_indices().end());
  for (std::size_t i : d.missing_indices()) CHECK(all.insert(i).second);
  CHECK(all.size() == d.n());
  for (std::size_t i : d.missing_indices()) CHECK(d.is_missing(i));
  CHECK_THROWS_AS(MaskedDataset({1.5}, {ObservedLabel::kPositive}), Error);
}

TEST_CASE("stratified folds: exact divisibility") {
  std::vector<int> labels(100, 0);
  for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i) * 2] = 1;
  const auto folds = stratified_folds(labels, 10, 3);
  REQUIRE(folds.size() == 10);
  for (const auto& f : folds) {
    int pos = 0;
    for (std::size_t i : f) pos += labels[i];
    CHECK(f.size() == 10);
    CHECK(pos == 4);
  }
}

TEST_CASE("stratified folds: errors") {
  std::vector<int> labels(10, 0);
  labels[0] = 1;
  CHECK_THROWS_AS(stratified_folds(labels, 10, 0), Error);
  CHECK_THROWS_AS(stratified_folds(std::vector<int>{0, 1, 0, 1}, 1, 0), Error);
}

TEST_CASE("stratified folds: deterministic per seed") {
  std::vector<int> labels;
  for (int i = 0; i < 57; ++i) labels.push_back(i % 3 == 0);
  CHECK(stratified_folds(labels, 5, 11) == stratified_folds(labels, 5, 11));
  CHECK(stratified_folds(labels, 5, 11) != stratified_folds(labels, 5, 12));
}

TEST_CASE("stratified folds: partition and stratification properties") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t folds = 2 + rng.below(9);
    const std::size_t n = folds * 2 + rng.below(300);
    std::vector<int> labels(n);
    for (auto& y : labels) y = rng.bernoulli(0.05 + 0.9 * rng.uniform()) ? 1 : 0;
    std::size_t pos = 0;
    for (int y : labels) pos += y;
    if (pos < folds || n - pos < folds) continue;
    const auto parts = stratified_folds(labels, folds, trial);
    std::vector<int> seen(n, 0);
    const double rate = static_cast<double>(pos) / static_cast<double>(n);
    for (const auto& f : parts) {
      long fold_pos = 0;
      for (std::size_t i : f) {
        ++seen[i];
        fold_pos += labels[i];
      }
      const auto expected = static_cast<long>(std::floor(static_cast<double>(f.size()) * rate));
      CHECK(std::abs(fold_pos - expected) <= 1);
    }
    for (int s : seen) REQUIRE(s == 1);
  }
}
