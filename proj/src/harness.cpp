#include "pemi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "pemi/error.hpp"
#include "pemi/label_models.hpp"
#include "pemi/parallel.hpp"
#include "pemi/rng.hpp"

namespace pemi {

using nlohmann::json;

LabeledSample LabeledSample::subset(std::span<const std::size_t> idx) const {
  LabeledSample out;
  out.scores.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    out.scores.push_back(scores.at(i));
    out.labels.push_back(labels.at(i));
    if (!q.empty()) out.q.push_back(q.at(i));
  }
  return out;
}

void MaskingSpec::validate() const {
  if (!(p_m > 0.0 && p_m < 1.0)) throw Error("p_m must lie in (0, 1)");
  if ((mechanism == Mechanism::kMnar) != mnar_positive_fraction.has_value())
    throw Error("mnar_positive_fraction is required for MNAR and forbidden for MCAR");
  if (mnar_positive_fraction &&
      !(*mnar_positive_fraction > 0.0 && *mnar_positive_fraction < 1.0))
    throw Error("mnar_positive_fraction must lie in (0, 1)");
}

namespace {

std::size_t mask_count(double p_m, std::size_t n) {
  const auto count = static_cast<std::size_t>(std::llround(p_m * static_cast<double>(n)));
  if (count == 0) throw Error("p_m * n rounds to zero records; nothing to mask");
  if (count >= n) throw Error("p_m * n rounds to every record; at least one label must stay known");
  return count;
}

// Positions (into `labels`) to mask.
std::vector<std::size_t> choose_masked(std::span<const int> labels, const MaskingSpec& spec) {
  spec.validate();
  const std::size_t n = labels.size();
  const std::size_t count = mask_count(spec.p_m, n);
  Rng rng(spec.seed);
  if (spec.mechanism == Mechanism::kMcar) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx, rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (labels[i] ? pos : neg).push_back(i);
  const auto need_pos = static_cast<std::size_t>(
      std::ceil(*spec.mnar_positive_fraction * static_cast<double>(count) - 1e-9));
  const std::size_t need_neg = count - need_pos;
  if (need_pos > pos.size())
    throw Error("MNAR masking needs " + std::to_string(need_pos) + " positives but only " +
                std::to_string(pos.size()) + " are available");
  if (need_neg > neg.size())
    throw Error("MNAR masking needs " + std::to_string(need_neg) + " negatives but only " +
                std::to_string(neg.size()) + " are available");
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::size_t> idx(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(need_pos));
  idx.insert(idx.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(need_neg));
  std::sort(idx.begin(), idx.end());
  return idx;
}

MaskedSample build_masked(const LabeledSample& records, std::span<const std::size_t> masked) {
  const std::size_t n = records.size();
  std::vector<ObservedLabel> observed(n);
  GroundTruth truth;
  truth.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    observed[i] = observed_from_bit(records.labels[i]);
    truth.labels[i] = records.labels[i];
  }
  for (std::size_t i : masked) observed[i] = ObservedLabel::kMissing;
  return {MaskedDataset(records.scores, std::move(observed)), std::move(truth)};
}

}  // namespace

MaskedSample apply_masking(const LabeledSample& records, const MaskingSpec& spec) {
  if (records.labels.size() != records.scores.size()) throw Error("scores and labels differ in length");
  return build_masked(records, choose_masked(records.labels, spec));
}

MaskedSample mask_mcar(const LabeledSample& records, double p_m, std::uint64_t seed) {
  return apply_masking(records, MaskingSpec{Mechanism::kMcar, p_m, std::nullopt, seed});
}

MaskedSample mask_mnar(const LabeledSample& records, double p_m, double positive_fraction,
                       std::uint64_t seed) {
  return apply_masking(records, MaskingSpec{Mechanism::kMnar, p_m, positive_fraction, seed});
}

MaskedSample mask_within(const LabeledSample& records, std::span<const std::size_t> pool,
                         const MaskingSpec& spec) {
  std::vector<int> pool_labels;
  pool_labels.reserve(pool.size());
  for (std::size_t i : pool) pool_labels.push_back(records.labels.at(i));
  std::vector<std::size_t> masked;
  for (std::size_t j : choose_masked(pool_labels, spec)) masked.push_back(pool[j]);
  std::sort(masked.begin(), masked.end());
  return build_masked(records, masked);
}

LabeledSample synth_generate(std::size_t n, double coef, double intercept, double miscalibration,
                             std::uint64_t seed) {
  if (n < 10) throw Error("synthetic data needs n >= 10");
  if (!(miscalibration > 0.0)) throw Error("miscalibration exponent must be positive");
  LabeledSample out;
  out.scores.resize(n);
  out.labels.resize(n);
  out.q.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double q = 1.0 / (1.0 + std::exp(-(coef * u + intercept)));
    out.q[i] = q;
    out.labels[i] = rng.bernoulli(q) ? 1 : 0;
    out.scores[i] = std::pow(q, miscalibration);
  }
  return out;
}

double pit_value(const EmpiricalCdf& cdf, double truth) { return cdf(truth); }
double pit_value(const GaussianCdf& cdf, double truth) { return cdf(truth); }

namespace {

std::vector<double> sorted_pits(std::span<const double> pits) {
  if (pits.empty()) throw Error("need at least one PIT value");
  std::vector<double> u(pits.begin(), pits.end());
  for (double v : u)
    if (!(v >= 0.0 && v <= 1.0)) throw Error("PIT values must lie in [0, 1]");
  std::sort(u.begin(), u.end());
  return u;
}

// Integral of |c - t| over [a, b].
double abs_gap_integral(double c, double a, double b) {
  if (b <= a) return 0.0;
  if (c <= a) return 0.5 * ((b - c) * (b - c) - (a - c) * (a - c));
  if (c >= b) return 0.5 * ((c - a) * (c - a) - (c - b) * (c - b));
  return 0.5 * ((c - a) * (c - a) + (b - c) * (b - c));
}

}  // namespace

double ks_vs_uniform(std::span<const double> pits) {
  const auto u = sorted_pits(pits);
  const double m = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double above = static_cast<double>(i + 1) / m - u[i];
    const double below = u[i] - static_cast<double>(i) / m;
    d = std::max({d, above, below});
  }
  return d;
}

double w1_vs_uniform(std::span<const double> pits) {
  const auto u = sorted_pits(pits);
  const double m = static_cast<double>(u.size());
  double total = abs_gap_integral(0.0, 0.0, u.front());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double right = i + 1 < u.size() ? u[i + 1] : 1.0;
    total += abs_gap_integral(static_cast<double>(i + 1) / m, u[i], right);
  }
  return total;
}

double pit_uniformity(std::span<const double> pits, Uniformity measure) {
  return measure == Uniformity::kKs ? ks_vs_uniform(pits) : w1_vs_uniform(pits);
}

double center_error(std::span<const double> centers, std::span<const double> truths,
                    CenterMeasure measure) {
  if (centers.empty()) throw Error("center error needs at least one prediction");
  if (centers.size() != truths.size()) throw Error("centers and truths differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double e = centers[i] - truths[i];
    acc += measure == CenterMeasure::kMae ? std::abs(e) : e * e;
  }
  acc /= static_cast<double>(centers.size());
  return measure == CenterMeasure::kMae ? acc : std::sqrt(acc);
}

EmpiricalCdf bootstrap_baseline(const MaskedDataset& data, MetricKind kind, double threshold,
                                std::size_t replicates, std::uint64_t seed, unsigned threads) {
  const std::size_t k = data.k();
  if (k < 2) throw Error("bootstrap needs at least two labeled records");
  if (replicates == 0) throw Error("bootstrap needs at least one replicate");
  const auto psi = induce_classifier(data.scores(), threshold);

  // Known records sorted by score with tie-group boundaries, for the
  // weighted ROC-AUC sweep.
  std::vector<std::size_t> known = data.known_indices();
  std::stable_sort(known.begin(), known.end(),
                   [&](std::size_t a, std::size_t b) { return data.scores()[a] < data.scores()[b]; });
  std::vector<std::size_t> group_end;
  for (std::size_t j = 1; j <= k; ++j)
    if (j == k || data.scores()[known[j]] != data.scores()[known[j - 1]]) group_end.push_back(j);
  std::vector<int> y(k);
  std::vector<std::uint8_t> pred(k);
  for (std::size_t j = 0; j < k; ++j) {
    y[j] = data.known_label(known[j]);
    pred[j] = psi[known[j]];
  }

  std::vector<double> values(replicates, 0.0);
  std::vector<std::uint8_t> defined(replicates, 0);
  parallel_for(replicates, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> weight(k);
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng(derive_seed(seed, b));
      std::fill(weight.begin(), weight.end(), 0);
      for (std::size_t t = 0; t < k; ++t) ++weight[rng.below(k)];
      std::optional<double> v;
      if (kind == MetricKind::kRocAuc) {
        double neg_below = 0.0, concordant = 0.0, pos_total = 0.0;
        std::size_t start = 0;
        for (std::size_t g_end : group_end) {
          double pos_w = 0.0, neg_w = 0.0;
          for (std::size_t j = start; j < g_end; ++j) (y[j] ? pos_w : neg_w) += weight[j];
          concordant += pos_w * (neg_below + neg_w);
          neg_below += neg_w;
          pos_total += pos_w;
          start = g_end;
        }
        const double pairs = pos_total * neg_below;
        if (pairs > 0.0) v = concordant / pairs;
      } else {
        ConfusionCounts cm;
        for (std::size_t j = 0; j < k; ++j) {
          const std::int64_t w = weight[j];
          if (y[j]) (pred[j] ? cm.tp : cm.fn) += w;
          else (pred[j] ? cm.fp : cm.tn) += w;
        }
        v = metric_from_counts(kind, cm);
      }
      if (v) {
        values[b] = *v;
        defined[b] = 1;
      }
    }
  });
  std::vector<double> samples;
  samples.reserve(replicates);
  for (std::size_t b = 0; b < replicates; ++b)
    if (defined[b]) samples.push_back(values[b]);
  if (samples.empty())
    throw Error("all " + std::to_string(replicates) + " bootstrap resamples were UNDEFINED");
  const std::size_t undefined = replicates - samples.size();
  return EmpiricalCdf(std::move(samples), undefined);
}

// ---------------------------------------------------------------------------
// Experiment configuration

namespace {

bool is_truth_reference(const std::string& name) {
  return name == "truth" || name == "true_labels" || name == "ground_truth" || name == "labels";
}

std::optional<std::size_t> pemi_replicates(const std::string& method) {
  if (method.rfind("pemi-B", 0) != 0) return std::nullopt;
  const std::string digits = method.substr(6);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    return std::nullopt;
  const auto b = std::stoull(digits);
  if (b == 0) return std::nullopt;
  return static_cast<std::size_t>(b);
}

std::string mechanism_name(Mechanism m) { return m == Mechanism::kMcar ? "mcar" : "mnar"; }

}  // namespace

void ExperimentConfig::validate() const {
  if (synth.has_value() == csv.has_value())
    throw Error("experiment needs exactly one data source (synth or csv)");
  if (folds < 2) throw Error("folds must be at least 2");
  if (rounds < 1) throw Error("rounds must be at least 1");
  if (!(p_m > 0.0 && p_m < 1.0)) throw Error("p_m must lie in (0, 1)");
  if (mechanism == Mechanism::kMnar && mnar_positive_fractions.empty())
    throw Error("MNAR masking needs a non-empty mnar_positive_fraction list");
  if (mechanism == Mechanism::kMcar && !mnar_positive_fractions.empty())
    throw Error("mnar_positive_fraction is only valid with MNAR masking");
  for (double eta : mnar_positive_fractions)
    if (!(eta > 0.0 && eta < 1.0)) throw Error("mnar_positive_fraction values must lie in (0, 1)");
  if (policies.empty()) throw Error("at least one label policy is required");
  for (const auto& p : policies) {
    if (is_truth_reference(p))
      throw Error("policy '" + p + "' would read held-out truth labels during estimation");
    if (p != "half" && p != "prevalence" && p != "calibrated" && p != "oracle")
      throw Error("unknown label policy '" + p + "'");
    if (p == "oracle" && !synth)
      throw Error("the oracle policy needs generating probabilities (synth source)");
  }
  if (methods.empty()) throw Error("at least one method is required");
  for (const auto& m : methods)
    if (m != "bootstrap" && m != "pemi-gauss" && !pemi_replicates(m))
      throw Error("unknown method '" + m + "' (expected bootstrap, pemi-gauss or pemi-B<count>)");
  if (metrics.empty()) throw Error("at least one metric is required");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error("threshold must lie in (0, 1)");
  if (calibration_bins < 1) throw Error("calibration_bins must be at least 1");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw Error("calibration_fraction must lie in (0, 1)");
  if (bootstrap_replicates < 1) throw Error("bootstrap_replicates must be at least 1");
  if (beta_noise_variance < 0.0) throw Error("beta_noise_variance must be non-negative");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw Error("ci_level must lie in (0, 1)");
  if (ci_resamples < 1) throw Error("ci_resamples must be at least 1");
  if (synth && synth->n < 10) throw Error("synth.n must be at least 10");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("experiment config must be a JSON object");
  static const std::vector<std::string> known_keys{
      "source", "folds", "rounds", "seed", "masking", "policies", "methods", "metrics",
      "threshold", "calibration_bins", "calibration_fraction", "bootstrap_replicates",
      "beta_noise_variance", "ci_level", "ci_resamples", "threads"};
  for (const auto& [key, _] : j.items())
    if (std::find(known_keys.begin(), known_keys.end(), key) == known_keys.end())
      throw Error("unknown experiment config key '" + key + "'");

  ExperimentConfig c;
  try {
    if (!j.contains("source")) throw Error("experiment config needs a 'source'");
    const auto& s = j.at("source");
    const std::string type = s.value("type", "");
    if (type == "synth") {
      SynthSource syn;
      syn.n = s.value("n", syn.n);
      syn.coef = s.value("coef", syn.coef);
      syn.intercept = s.value("intercept", syn.intercept);
      syn.miscalibration = s.value("miscalibration", syn.miscalibration);
      syn.resample_per_round = s.value("resample_per_round", syn.resample_per_round);
      c.synth = syn;
    } else if (type == "csv") {
      CsvSource src;
      src.path = s.at("path").get<std::string>();
      src.schema.score = s.value("score_column", src.schema.score);
      src.schema.label = s.value("label_column", src.schema.label);
      src.schema.truth = s.value("truth_column", src.schema.truth);
      src.schema.id = s.value("id_column", src.schema.id);
      c.csv = src;
    } else {
      throw Error("source.type must be 'synth' or 'csv'");
    }
    c.folds = j.value("folds", c.folds);
    c.rounds = j.value("rounds", c.rounds);
    c.seed = j.value("seed", c.seed);
    if (j.contains("masking")) {
      const auto& m = j.at("masking");
      const std::string mech = m.value("mechanism", "mcar");
      if (mech == "mcar") c.mechanism = Mechanism::kMcar;
      else if (mech == "mnar") c.mechanism = Mechanism::kMnar;
      else throw Error("masking.mechanism must be 'mcar' or 'mnar'");
      c.p_m = m.value("p_m", c.p_m);
      if (m.contains("mnar_positive_fraction")) {
        const auto& f = m.at("mnar_positive_fraction");
        if (f.is_array()) c.mnar_positive_fractions = f.get<std::vector<double>>();
        else c.mnar_positive_fractions = {f.get<double>()};
      }
    }
    if (j.contains("policies")) c.policies = j.at("policies").get<std::vector<std::string>>();
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& name : j.at("metrics").get<std::vector<std::string>>())
        c.metrics.push_back(parse_metric(name));
    }
    c.threshold = j.value("threshold", c.threshold);
    c.calibration_bins = j.value("calibration_bins", c.calibration_bins);
    c.calibration_fraction = j.value("calibration_fraction", c.calibration_fraction);
    c.bootstrap_replicates = j.value("bootstrap_replicates", c.bootstrap_replicates);
    c.beta_noise_variance = j.value("beta_noise_variance", c.beta_noise_variance);
    c.ci_level = j.value("ci_level", c.ci_level);
    c.ci_resamples = j.value("ci_resamples", c.ci_resamples);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw Error(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  if (c.synth) {
    j["source"] = {{"type", "synth"},
                   {"n", c.synth->n},
                   {"coef", c.synth->coef},
                   {"intercept", c.synth->intercept},
                   {"miscalibration", c.synth->miscalibration},
                   {"resample_per_round", c.synth->resample_per_round}};
  } else if (c.csv) {
    j["source"] = {{"type", "csv"},
                   {"path", c.csv->path},
                   {"score_column", c.csv->schema.score},
                   {"label_column", c.csv->schema.label},
                   {"truth_column", c.csv->schema.truth},
                   {"id_column", c.csv->schema.id}};
  }
  j["folds"] = c.folds;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["masking"] = {{"mechanism", mechanism_name(c.mechanism)}, {"p_m", c.p_m}};
  if (!c.mnar_positive_fractions.empty())
    j["masking"]["mnar_positive_fraction"] = c.mnar_positive_fractions;
  j["policies"] = c.policies;
  j["methods"] = c.methods;
  std::vector<std::string> metric_names;
  for (auto m : c.metrics) metric_names.push_back(to_string(m));
  j["metrics"] = metric_names;
  j["threshold"] = c.threshold;
  j["calibration_bins"] = c.calibration_bins;
  j["calibration_fraction"] = c.calibration_fraction;
  j["bootstrap_replicates"] = c.bootstrap_replicates;
  j["beta_noise_variance"] = c.beta_noise_variance;
  j["ci_level"] = c.ci_level;
  j["ci_resamples"] = c.ci_resamples;
  j["threads"] = c.threads;
  return j.dump(2);
}

const FidelityEntry& FidelityReport::find(const std::string& method, const std::string& policy,
                                          MetricKind metric,
                                          std::optional<double> positive_fraction) const {
  for (const auto& e : entries)
    if (e.method == method && e.policy == policy && e.metric == metric &&
        e.mnar_positive_fraction == positive_fraction)
      return e;
  throw Error("no fidelity entry for " + method + "/" + policy + "/" + to_string(metric));
}

// ---------------------------------------------------------------------------
// Experiment driver

namespace {

double percentile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

LabeledSample load_source(const ExperimentConfig& c, std::size_t round) {
  if (c.synth) {
    const std::uint64_t index = c.synth->resample_per_round ? round : 0;
    return synth_generate(c.synth->n, c.synth->coef, c.synth->intercept,
                          c.synth->miscalibration, derive_seed(c.seed, index));
  }
  const auto loaded = load_dataset(c.csv->path, c.csv->schema);
  LabeledSample s;
  const auto scores = loaded.data.scores();
  s.scores.assign(scores.begin(), scores.end());
  for (std::size_t i = 0; i < loaded.truth.labels.size(); ++i) {
    if (!loaded.truth.labels[i])
      throw Error("experiment CSV must be fully labeled; row " + std::to_string(i + 1) +
                  " has no label");
    s.labels.push_back(*loaded.truth.labels[i]);
  }
  return s;
}

struct Observation {
  double pit;
  double center;
  double truth;
};

// Per-fold state shared by both sub-fold replications.
struct FoldContext {
  const LabeledSample* source = nullptr;
  std::vector<std::size_t> test;
  std::optional<ScalingBinningCalibrator> calibrator;
  std::string calibrator_error;
  std::size_t train_pos = 0;
  std::size_t train_total = 0;
};

FoldContext make_fold(const LabeledSample& all, const std::vector<std::size_t>& test,
                      const ExperimentConfig& c, std::uint64_t seed, bool fit_calibrator) {
  FoldContext f;
  f.source = &all;
  f.test = test;
  std::vector<std::uint8_t> in_test(all.size(), 0);
  for (std::size_t i : test) in_test[i] = 1;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (!in_test[i]) train.push_back(i);
  f.train_total = train.size();
  for (std::size_t i : train) f.train_pos += all.labels[i];
  if (!fit_calibrator) return f;
  Rng rng(seed);
  shuffle(train, rng);
  const auto n_cal = std::max<std::size_t>(
      c.calibration_bins,
      static_cast<std::size_t>(std::llround(c.calibration_fraction * static_cast<double>(train.size()))));
  std::vector<double> cal_scores;
  std::vector<int> cal_labels;
  for (std::size_t t = 0; t < std::min(n_cal, train.size()); ++t) {
    cal_scores.push_back(all.scores[train[t]]);
    cal_labels.push_back(all.labels[train[t]]);
  }
  try {
    f.calibrator = fit_scaling_binning(cal_scores, cal_labels, c.calibration_bins);
  } catch (const Error& e) {
    f.calibrator_error = e.what();
  }
  return f;
}

LabelModel policy_model(const std::string& policy, const MaskedDataset& data,
                        const LabeledSample& fold, const FoldContext& ctx) {
  if (policy == "half") return assign_maxent_half(data);
  if (policy == "prevalence") return assign_maxent_prevalence(data, ctx.train_pos, ctx.train_total);
  if (policy == "calibrated") {
    if (!ctx.calibrator) throw Error("calibrator unavailable: " + ctx.calibrator_error);
    return calibrate_labels(*ctx.calibrator, data);
  }
  std::vector<double> p;
  for (std::size_t i : data.missing_indices())
    p.push_back(std::clamp(fold.q.at(i), kProbabilityClamp, 1.0 - kProbabilityClamp));
  return assign_explicit(data, p);
}

}  // namespace

void summarize_fidelity(FidelityEntry& e, std::span<const double> centers,
                        std::span<const double> truths, double ci_level, std::size_t resamples,
                        std::uint64_t seed) {
  const std::size_t m = e.pits.size();
  e.replications = m;
  if (m == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    e.ks = e.w1 = e.mae = e.rmse = Interval{nan, nan, nan};
    return;
  }
  e.ks.value = ks_vs_uniform(e.pits);
  e.w1.value = w1_vs_uniform(e.pits);
  e.mae.value = center_error(centers, truths, CenterMeasure::kMae);
  e.rmse.value = center_error(centers, truths, CenterMeasure::kRmse);

  std::vector<double> ks(resamples), w1(resamples), mae(resamples), rmse(resamples);
  std::vector<double> p(m), c(m), t(m);
  for (std::size_t r = 0; r < resamples; ++r) {
    Rng rng(derive_seed(seed, r));
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = rng.below(m);
      p[i] = e.pits[j];
      c[i] = centers[j];
      t[i] = truths[j];
    }
    ks[r] = ks_vs_uniform(p);
    w1[r] = w1_vs_uniform(p);
    mae[r] = center_error(c, t, CenterMeasure::kMae);
    rmse[r] = center_error(c, t, CenterMeasure::kRmse);
  }
  const double lo = 0.5 * (1.0 - ci_level), hi = 0.5 * (1.0 + ci_level);
  auto fill = [&](Interval& iv, std::vector<double>& v) {
    iv.lo = percentile(v, lo);
    iv.hi = percentile(v, hi);
  };
  fill(e.ks, ks);
  fill(e.w1, w1);
  fill(e.mae, mae);
  fill(e.rmse, rmse);
}

FidelityReport run_experiment(const ExperimentConfig& c) {
  c.validate();
  std::vector<LabeledSample> sources;
  if (c.synth && c.synth->resample_per_round) {
    for (std::size_t round = 0; round < c.rounds; ++round) sources.push_back(load_source(c, round));
  } else {
    sources.push_back(load_source(c, 0));
  }
  const bool needs_calibrator =
      std::find(c.policies.begin(), c.policies.end(), "calibrated") != c.policies.end();

  std::vector<std::optional<double>> etas;
  if (c.mechanism == Mechanism::kMcar) etas.push_back(std::nullopt);
  for (double eta : c.mnar_positive_fractions) etas.emplace_back(eta);

  // Slot layout: metric-major within each replication.
  const std::size_t n_methods = c.methods.size(), n_policies = c.policies.size(),
                    n_metrics = c.metrics.size();
  auto slot = [&](std::size_t method, std::size_t policy, std::size_t metric) {
    return (method * n_policies + policy) * n_metrics + metric;
  };
  const std::size_t n_slots = n_methods * n_policies * n_metrics;

  // Folds per round, then per-fold calibration, all seeded from the base.
  std::vector<FoldContext> folds;
  for (std::size_t round = 0; round < c.rounds; ++round) {
    const LabeledSample& all = sources[sources.size() == 1 ? 0 : round];
    const auto parts = stratified_folds(all.labels, c.folds, derive_seed(c.seed, 1000 + round));
    for (std::size_t f = 0; f < c.folds; ++f)
      folds.push_back(make_fold(all, parts[f], c,
                                derive_seed(c.seed, 2000000 + round * c.folds + f),
                                needs_calibrator));
  }

  FidelityReport report;
  for (const auto& eta : etas) {
    const std::size_t R = c.replications();
    std::vector<std::vector<std::optional<Observation>>> obs(
        R, std::vector<std::optional<Observation>>(n_slots));
    parallel_for(R, c.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        const std::uint64_t rseed = c.seed + r;
        const FoldContext& ctx = folds[r / 2];
        const LabeledSample fold = ctx.source->subset(ctx.test);
        // Non-stratified halves of the test fold; replication r masks half r % 2.
        std::vector<std::size_t> order(fold.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng split_rng(derive_seed(c.seed, 3000000 + r / 2));
        shuffle(order, split_rng);
        const std::size_t half = order.size() / 2;
        std::vector<std::size_t> pool(r % 2 == 0 ? order.begin() : order.begin() + half,
                                      r % 2 == 0 ? order.begin() + half : order.end());
        std::sort(pool.begin(), pool.end());
        MaskingSpec spec{c.mechanism, c.p_m, eta, derive_seed(rseed, 1)};
        MaskedSample masked;
        try {
          masked = mask_within(fold, pool, spec);
        } catch (const Error&) {
          continue;  // every slot of this replication counts as skipped
        }
        const MaskedDataset& data = masked.data;
        std::vector<std::uint8_t> labels(fold.labels.begin(), fold.labels.end());

        std::vector<std::optional<LabelModel>> models(n_policies);
        for (std::size_t p = 0; p < n_policies; ++p) {
          try {
            auto model = policy_model(c.policies[p], data, fold, ctx);
            if (c.beta_noise_variance > 0.0)
              model = beta_noise(model, c.beta_noise_variance, derive_seed(rseed, 2 + p));
            models[p] = std::move(model);
          } catch (const Error&) {
          }
        }

        for (std::size_t mk = 0; mk < n_metrics; ++mk) {
          const MetricKind kind = c.metrics[mk];
          const auto truth = metric_value(kind, labels, fold.scores, c.threshold);
          if (!truth) continue;
          for (std::size_t me = 0; me < n_methods; ++me) {
            const std::string& method = c.methods[me];
            const std::uint64_t mseed = derive_seed(rseed, 100 + me * n_metrics + mk);
            if (method == "bootstrap") {
              try {
                const auto cdf = bootstrap_baseline(data, kind, c.threshold,
                                                    c.bootstrap_replicates, mseed);
                const Observation o{pit_value(cdf, *truth), cdf.mean(), *truth};
                for (std::size_t p = 0; p < n_policies; ++p) obs[r][slot(me, p, mk)] = o;
              } catch (const Error&) {
              }
              continue;
            }
            for (std::size_t p = 0; p < n_policies; ++p) {
              if (!models[p]) continue;
              try {
                if (method == "pemi-gauss") {
                  GaussOptions go;
                  go.threshold = c.threshold;
                  go.roc.seed = mseed;
                  const auto pred = predict_gauss(kind, data, *models[p], go);
                  obs[r][slot(me, p, mk)] =
                      Observation{pit_value(pred.cdf, *truth), pred.cdf.mu(), *truth};
                } else {
                  PemiOptions po;
                  po.replicates = *pemi_replicates(method);
                  po.threshold = c.threshold;
                  po.seed = derive_seed(mseed, p);
                  const auto cdf = run_pemi(kind, data, *models[p], po);
                  obs[r][slot(me, p, mk)] = Observation{pit_value(cdf, *truth), cdf.mean(), *truth};
                }
              } catch (const Error&) {
              }
            }
          }
        }
      }
    });

    for (std::size_t me = 0; me < n_methods; ++me)
      for (std::size_t p = 0; p < n_policies; ++p)
        for (std::size_t mk = 0; mk < n_metrics; ++mk) {
          FidelityEntry e;
          e.method = c.methods[me];
          e.policy = c.policies[p];
          e.metric = c.metrics[mk];
          e.mnar_positive_fraction = eta;
          std::vector<double> centers, truths;
          for (std::size_t r = 0; r < R; ++r) {
            const auto& o = obs[r][slot(me, p, mk)];
            if (!o) {
              ++e.skipped;
              continue;
            }
            e.pits.push_back(o->pit);
            centers.push_back(o->center);
            truths.push_back(o->truth);
          }
          summarize_fidelity(e, centers, truths, c.ci_level, c.ci_resamples,
                             derive_seed(c.seed, 4000000 + report.entries.size()));
          report.entries.push_back(std::move(e));
        }
  }
  return report;
}

}  // namespace pemi
