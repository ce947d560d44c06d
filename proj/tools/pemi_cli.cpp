// Command-line front end: evaluate, bounds, calibrate, experiment, synth.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pemi/dataset.hpp"
#include "pemi/error.hpp"
#include "pemi/gauss.hpp"
#include "pemi/harness.hpp"
#include "pemi/label_models.hpp"
#include "pemi/metrics.hpp"
#include "pemi/pemi.hpp"
#include "pemi/report.hpp"
#include "pemi/rng.hpp"
#include "pemi/scenario_oracle.hpp"

namespace {

using nlohmann::json;
using namespace pemi;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

void log_config(const std::string& command, const json& config) {
  std::cerr << "pemi " << command << " effective config: " << config.dump() << "\n";
}

std::vector<MetricKind> parse_metrics(const std::vector<std::string>& names) {
  std::vector<MetricKind> out;
  if (names.empty()) return {std::begin(kAllMetrics), std::end(kAllMetrics)};
  for (const auto& n : names) {
    try {
      out.push_back(parse_metric(n));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::string render(const Table& t, const std::string& format, const std::string& command,
                   const json& config) {
  return format == "csv" ? table_to_csv(t) : table_to_json(t, command, config);
}

struct CommonOptions {
  std::string input;
  std::vector<std::string> metrics;
  double tau = kDefaultThreshold;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output;
  std::string format = "json";
  CsvSchema schema;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_input) {
  auto* in = cmd->add_option("-i,--input", o.input, "Evaluation CSV (score,label[,truth][,id])");
  if (needs_input) in->required()->check(CLI::ExistingFile);
  cmd->add_option("--metric", o.metrics,
                  "Metrics: precision, recall, accuracy, f1, roc-auc (default: all)")
      ->delimiter(',');
  cmd->add_option("--tau", o.tau, "Classification threshold in (0,1)")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  cmd->add_option("-o,--output", o.output, "Output path (default: stdout)");
  cmd->add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  cmd->add_option("--score-column", o.schema.score, "Score column name")->capture_default_str();
  cmd->add_option("--label-column", o.schema.label, "Label column name")->capture_default_str();
}

json common_json(const CommonOptions& o, const std::vector<MetricKind>& metrics) {
  std::vector<std::string> names;
  for (auto m : metrics) names.push_back(to_string(m));
  return {{"input", o.input}, {"metrics", names}, {"tau", o.tau},
          {"seed", o.seed},   {"threads", o.threads}, {"format", o.format}};
}

struct PolicyOptions {
  std::string policy = "half";
  std::string calibrator;
  std::string calibration_csv;
  std::size_t bins = 10;
  std::string probabilities;
  double prevalence = -1.0;
  double beta_noise = 0.0;
};

void add_policy(CLI::App* cmd, PolicyOptions& o) {
  cmd->add_option("--policy", o.policy, "Label policy for missing records")
      ->check(CLI::IsMember({"half", "prevalence", "calibrated", "explicit"}))
      ->capture_default_str();
  cmd->add_option("--calibrator", o.calibrator, "Calibrator JSON (calibrated policy)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--calibration-csv", o.calibration_csv,
                  "Labeled CSV to fit a calibrator on (calibrated policy)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--bins", o.bins, "Calibrator bins")->capture_default_str();
  cmd->add_option("--probabilities", o.probabilities,
                  "index,p CSV for the explicit policy")
      ->check(CLI::ExistingFile);
  cmd->add_option("--prevalence", o.prevalence,
                  "Positive rate for the prevalence policy (default: known labels)");
  cmd->add_option("--beta-noise", o.beta_noise,
                  "Perturb each p with Beta noise of this variance");
}

void validate_policy(const PolicyOptions& o) {
  if (o.policy == "calibrated" && o.calibrator.empty() && o.calibration_csv.empty())
    throw UsageError("--policy calibrated needs --calibrator or --calibration-csv");
  if (o.policy == "explicit" && o.probabilities.empty())
    throw UsageError("--policy explicit needs --probabilities");
  if (o.prevalence != -1.0 && !(o.prevalence > 0.0 && o.prevalence < 1.0))
    throw UsageError("--prevalence must lie in (0,1)");
  if (o.beta_noise < 0.0) throw UsageError("--beta-noise must be non-negative");
}

json policy_json(const PolicyOptions& o) {
  json j = {{"policy", o.policy}, {"bins", o.bins}, {"beta_noise", o.beta_noise}};
  if (!o.calibrator.empty()) j["calibrator"] = o.calibrator;
  if (!o.calibration_csv.empty()) j["calibration_csv"] = o.calibration_csv;
  if (!o.probabilities.empty()) j["probabilities"] = o.probabilities;
  if (o.prevalence != -1.0) j["prevalence"] = o.prevalence;
  return j;
}

ScalingBinningCalibrator fit_from_csv(const std::string& path, std::size_t bins,
                                      const CsvSchema& schema) {
  const auto loaded = load_dataset(path, schema);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i : loaded.data.known_indices()) {
    scores.push_back(loaded.data.scores()[i]);
    labels.push_back(loaded.data.known_label(i));
  }
  return fit_scaling_binning(scores, labels, bins);
}

LabelModel build_model(const PolicyOptions& o, const MaskedDataset& data, const CsvSchema& schema,
                       std::uint64_t seed) {
  LabelModel model;
  if (o.policy == "half") {
    model = assign_maxent_half(data);
  } else if (o.policy == "prevalence") {
    if (o.prevalence != -1.0) {
      model = assign_constant(data, o.prevalence);
    } else {
      std::size_t pos = 0;
      for (std::size_t i : data.known_indices()) pos += data.known_label(i);
      model = assign_maxent_prevalence(data, pos, data.k());
    }
  } else if (o.policy == "calibrated") {
    const auto cal = o.calibrator.empty() ? fit_from_csv(o.calibration_csv, o.bins, schema)
                                          : ScalingBinningCalibrator::from_json(read_file(o.calibrator));
    model = calibrate_labels(cal, data);
  } else {
    model = LabelModel::from_csv(read_file(o.probabilities));
  }
  if (o.beta_noise > 0.0) model = beta_noise(model, o.beta_noise, derive_seed(seed, 0xbe7a));
  return model;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateOptions {
  CommonOptions common;
  PolicyOptions policy;
  std::string method = "pemi-gauss";
  long long B = 1000;
};

int cmd_evaluate(const EvaluateOptions& o) {
  if (o.method == "pemi" && o.B <= 0) throw UsageError("--B must be a positive replicate count");
  if (o.method == "bootstrap" && o.B <= 0) throw UsageError("--B must be a positive replicate count");
  validate_policy(o.policy);
  const auto metrics = parse_metrics(o.common.metrics);
  json config = common_json(o.common, metrics);
  config["method"] = o.method;
  config["B"] = o.B;
  config.update(policy_json(o.policy));
  config["derived_seeds"] = {{"beta_noise", derive_seed(o.common.seed, 0xbe7a)}};
  log_config("evaluate", config);

  const auto loaded = load_dataset(o.common.input, o.common.schema);
  const auto& data = loaded.data;
  const bool uses_policy = o.method != "bootstrap";
  const LabelModel model =
      uses_policy ? build_model(o.policy, data, o.common.schema, o.common.seed) : LabelModel{};

  Table t{distribution_columns(), {}};
  for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
    const MetricKind kind = metrics[mi];
    DistributionRow row;
    if (o.method == "pemi") {
      PemiOptions po;
      po.replicates = static_cast<std::size_t>(o.B);
      po.threshold = o.common.tau;
      po.seed = o.common.seed;
      po.threads = o.common.threads;
      row = summarize(run_pemi(kind, data, model, po));
    } else if (o.method == "bootstrap") {
      row = summarize(bootstrap_baseline(data, kind, o.common.tau, static_cast<std::size_t>(o.B),
                                         o.common.seed, o.common.threads));
      row.method_tag = "bootstrap";
    } else if (o.method == "exact") {
      row = summarize(enumerate_distribution(data, model, kind, o.common.tau));
    } else {
      GaussOptions go;
      go.threshold = o.common.tau;
      go.roc.seed = o.common.seed;
      go.roc.threads = o.common.threads;
      const auto pred = predict_gauss(kind, data, model, go);
      row = summarize(pred.cdf);
      row.bound = pred.bound;
      row.warnings = pred.warnings;
    }
    row.metric = to_string(kind);
    row.method = o.method == "pemi" ? "pemi-B" + std::to_string(o.B) : o.method;
    row.policy = uses_policy ? o.policy.policy : "none";
    t.add(row.cells());
  }
  write_output(o.common.output, render(t, o.common.format, "evaluate", config));
  return 0;
}

// --- bounds -----------------------------------------------------------------

struct BoundsOptions {
  CommonOptions common;
  PolicyOptions policy;
};

int cmd_bounds(const BoundsOptions& o) {
  validate_policy(o.policy);
  const auto metrics = parse_metrics(o.common.metrics);
  json config = common_json(o.common, metrics);
  config.update(policy_json(o.policy));
  log_config("bounds", config);

  const auto loaded = load_dataset(o.common.input, o.common.schema);
  const auto& data = loaded.data;
  const LabelModel model = build_model(o.policy, data, o.common.schema, o.common.seed);
  Table t{{"metric", "pessimistic", "optimistic", "source", "ks_bound_kind", "ks_bound",
           "ks_bound_vacuous", "warnings"},
          {}};
  for (auto kind : metrics) {
    json pess = nullptr, opt = nullptr;
    std::string source;
    std::vector<std::string> warnings;
    try {
      if (is_cm_metric(kind)) {
        const auto b = metric_bounds(data, kind, o.common.tau);
        pess = b.pessimistic;
        opt = b.optimistic;
        source = "substitution";
      } else {
        const auto b = support_extremes(enumerate_distribution(data, model, kind, o.common.tau));
        pess = b.pessimistic;
        opt = b.optimistic;
        source = "enumeration";
      }
    } catch (const Error& e) {
      warnings.emplace_back(e.what());
    }
    json bound_kind = nullptr, bound = nullptr, vacuous = nullptr;
    try {
      GaussOptions go;
      go.threshold = o.common.tau;
      go.roc.seed = o.common.seed;
      go.roc.threads = o.common.threads;
      const auto pred = predict_gauss(kind, data, model, go);
      if (pred.bound) {
        bound_kind = pred.bound->kind;
        bound = pred.bound->value;
        vacuous = pred.bound->vacuous();
      }
      warnings.insert(warnings.end(), pred.warnings.begin(), pred.warnings.end());
    } catch (const Error& e) {
      warnings.emplace_back(e.what());
    }
    std::string w;
    for (std::size_t i = 0; i < warnings.size(); ++i) w += (i ? "; " : "") + warnings[i];
    t.add({to_string(kind), pess, opt, source.empty() ? json(nullptr) : json(source), bound_kind,
           bound, vacuous, w});
  }
  write_output(o.common.output, render(t, o.common.format, "bounds", config));
  return 0;
}

// --- calibrate --------------------------------------------------------------

struct CalibrateOptions {
  CommonOptions common;
  std::size_t bins = 10;
  std::string apply;
};

int cmd_calibrate(const CalibrateOptions& o) {
  json config = {{"input", o.common.input}, {"bins", o.bins}, {"format", o.common.format}};
  if (!o.apply.empty()) config["apply"] = o.apply;
  log_config("calibrate", config);
  const auto cal = fit_from_csv(o.common.input, o.bins, o.common.schema);
  if (!o.apply.empty()) {
    const auto target = load_dataset(o.apply, o.common.schema);
    const auto model = calibrate_labels(cal, target.data);
    if (o.common.format == "csv") {
      write_output(o.common.output, model.to_csv());
    } else {
      Table t{{"index", "p"}, {}};
      for (std::size_t j = 0; j < model.size(); ++j) t.add({model.indices()[j], model.p()[j]});
      write_output(o.common.output, table_to_json(t, "calibrate", config));
    }
    return 0;
  }
  if (o.common.format == "csv") {
    Table t{{"bin", "edge_lo", "edge_hi", "value"}, {}};
    for (std::size_t b = 0; b < cal.bins(); ++b)
      t.add({b, cal.bin_edges()[b], cal.bin_edges()[b + 1], cal.bin_values()[b]});
    write_output(o.common.output, table_to_csv(t));
  } else {
    write_output(o.common.output, cal.to_json() + "\n");
  }
  return 0;
}

// --- experiment -------------------------------------------------------------

struct ExperimentOptions {
  std::string config;
  std::string output;
  int threads = -1;
};

int cmd_experiment(const ExperimentOptions& o) {
  if (!std::filesystem::exists(o.config))
    throw UsageError("config file '" + o.config + "' does not exist");
  ExperimentConfig cfg = parse_experiment_config(read_file(o.config));
  if (o.threads >= 0) cfg.threads = static_cast<unsigned>(o.threads);
  const json config = json::parse(experiment_config_to_json(cfg));
  log_config("experiment", config);
  std::cerr << "pemi experiment: " << cfg.replications()
            << " replications; replication r uses seed " << cfg.seed << " + r\n";

  const auto report = run_experiment(cfg);
  const Table long_table = fidelity_table(report);
  if (o.output.empty()) {
    std::cout << table_to_csv(long_table);
    std::cerr << fidelity_summary(report);
    return 0;
  }
  write_output(o.output + ".csv", table_to_csv(long_table));
  write_output(o.output + ".json", fidelity_to_json(report, config));
  if (cfg.mechanism == Mechanism::kMnar) {
    Table series = long_table;
    // Group rows into one line per (method, policy, metric, measure) over eta.
    std::stable_sort(series.rows.begin(), series.rows.end(), [](const auto& a, const auto& b) {
      for (std::size_t c = 1; c <= 4; ++c)
        if (a[c] != b[c]) return a[c].template get<std::string>() < b[c].template get<std::string>();
      return a[0].template get<double>() < b[0].template get<double>();
    });
    write_output(o.output + "_series.csv", table_to_csv(series));
  }
  std::cout << fidelity_summary(report);
  return 0;
}

// --- synth ------------------------------------------------------------------

struct SynthOptions {
  std::size_t n = 1000;
  double coef = 4.0;
  double intercept = -2.0;
  double miscalibration = 1.0;
  std::uint64_t seed = 0;
  double p_m = 0.0;
  std::string mechanism = "mcar";
  double eta = -1.0;
  std::string output;
};

int cmd_synth(const SynthOptions& o) {
  json config = {{"n", o.n},       {"coef", o.coef}, {"intercept", o.intercept},
                 {"miscalibration", o.miscalibration}, {"seed", o.seed},
                 {"p_m", o.p_m},   {"mechanism", o.mechanism}};
  if (o.eta != -1.0) config["eta"] = o.eta;
  if (o.p_m != 0.0 && !(o.p_m > 0.0 && o.p_m < 1.0)) throw UsageError("--p-m must lie in (0,1)");
  if (o.mechanism == "mnar" && o.p_m != 0.0 && o.eta == -1.0)
    throw UsageError("--mechanism mnar needs --eta");
  config["derived_seeds"] = {{"generate", o.seed}, {"mask", derive_seed(o.seed, 1)}};
  log_config("synth", config);

  const auto sample = synth_generate(o.n, o.coef, o.intercept, o.miscalibration, o.seed);
  LoadedDataset out;
  out.has_truth_column = true;
  if (o.p_m > 0.0) {
    MaskingSpec spec;
    spec.mechanism = o.mechanism == "mnar" ? Mechanism::kMnar : Mechanism::kMcar;
    spec.p_m = o.p_m;
    if (spec.mechanism == Mechanism::kMnar) spec.mnar_positive_fraction = o.eta;
    spec.seed = derive_seed(o.seed, 1);
    auto masked = apply_masking(sample, spec);
    out.data = std::move(masked.data);
    out.truth = std::move(masked.truth);
  } else {
    std::vector<ObservedLabel> observed;
    for (int y : sample.labels) observed.push_back(observed_from_bit(y));
    out.data = MaskedDataset(sample.scores, observed);
    for (int y : sample.labels) out.truth.labels.emplace_back(y);
  }
  write_output(o.output, serialize_dataset(out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive distributions of classifier metrics under missing labels"};
  app.require_subcommand(1);

  EvaluateOptions eval;
  auto* evaluate = app.add_subcommand("evaluate", "Predictive distribution of each metric");
  add_common(evaluate, eval.common, true);
  add_policy(evaluate, eval.policy);
  evaluate->add_option("--method", eval.method, "Estimation method")
      ->check(CLI::IsMember({"pemi", "pemi-gauss", "bootstrap", "exact"}))
      ->capture_default_str();
  evaluate->add_option("--B", eval.B, "Replicates for pemi and bootstrap")->capture_default_str();

  BoundsOptions bnd;
  auto* bounds = app.add_subcommand("bounds", "Substitution bounds and KS approximation bounds");
  add_common(bounds, bnd.common, true);
  add_policy(bounds, bnd.policy);

  CalibrateOptions cal;
  auto* calibrate = app.add_subcommand("calibrate", "Fit a scaling-binning calibrator");
  add_common(calibrate, cal.common, true);
  calibrate->add_option("--bins", cal.bins, "Number of equal-mass bins")->capture_default_str();
  calibrate->add_option("--apply", cal.apply, "Emit p for the missing records of this CSV")
      ->check(CLI::ExistingFile);

  ExperimentOptions exp;
  auto* experiment = app.add_subcommand("experiment", "Run a fidelity experiment from a JSON config");
  experiment->add_option("-c,--config", exp.config, "Experiment config JSON")->required();
  experiment->add_option("-o,--output", exp.output,
                         "Output prefix for .csv/.json (default: CSV on stdout)");
  experiment->add_option("--threads", exp.threads, "Override the config's thread count");

  SynthOptions syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scored dataset");
  synth->add_option("--n", syn.n, "Records")->capture_default_str();
  synth->add_option("--coef", syn.coef, "Logistic slope")->capture_default_str();
  synth->add_option("--intercept", syn.intercept, "Logistic intercept")->capture_default_str();
  synth->add_option("--miscalibration", syn.miscalibration, "Score exponent")->capture_default_str();
  synth->add_option("--seed", syn.seed, "Seed")->capture_default_str();
  synth->add_option("--p-m", syn.p_m, "Fraction of labels to mask (0: none)")->capture_default_str();
  synth->add_option("--mechanism", syn.mechanism, "Masking mechanism")
      ->check(CLI::IsMember({"mcar", "mnar"}))
      ->capture_default_str();
  synth->add_option("--eta", syn.eta, "Positive fraction of the masked set (mnar)");
  synth->add_option("-o,--output", syn.output, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*evaluate) return cmd_evaluate(eval);
    if (*bounds) return cmd_bounds(bnd);
    if (*calibrate) return cmd_calibrate(cal);
    if (*experiment) return cmd_experiment(exp);
    if (*synth) return cmd_synth(syn);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
