#include "pemi/label_models.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include "json.hpp"
#include "pemi/error.hpp"
#include "pemi/rng.hpp"

namespace pemi {

LabelModel::LabelModel(std::vector<std::size_t> indices, std::vector<double> p)
    : indices_(std::move(indices)), p_(std::move(p)) {
  if (indices_.size() != p_.size()) throw Error("label model indices and p differ in length");
  for (double v : p_)
    if (!(v > 0.0 && v < 1.0)) throw Error("label model probability outside (0,1)");
}

double LabelModel::min_variance() const {
  double v = 0.25;
  for (double p : p_) v = std::min(v, p * (1.0 - p));
  return v;
}

void LabelModel::check_domain(const MaskedDataset& data) const {
  if (indices_ != data.missing_indices())
    throw Error("label model domain does not match the dataset's missing records");
}

std::string LabelModel::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "index,p\n";
  for (std::size_t j = 0; j < p_.size(); ++j) os << indices_[j] << ',' << p_[j] << '\n';
  return os.str();
}

LabelModel LabelModel::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::size_t> idx;
  std::vector<double> p;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("label model row without comma: " + line);
    idx.push_back(std::stoull(line.substr(0, comma)));
    p.push_back(std::stod(line.substr(comma + 1)));
  }
  return LabelModel(std::move(idx), std::move(p));
}

LabelModel assign_constant(const MaskedDataset& data, double p) {
  return LabelModel(data.missing_indices(), std::vector<double>(data.num_missing(), p));
}

LabelModel assign_maxent_half(const MaskedDataset& data) { return assign_constant(data, 0.5); }

LabelModel assign_maxent_prevalence(const MaskedDataset& data, std::size_t n_pos,
                                    std::size_t n_total) {
  if (n_total == 0 || n_pos == 0 || n_pos >= n_total)
    throw Error("prevalence N+/N must lie strictly inside (0,1)");
  return assign_constant(data, static_cast<double>(n_pos) / static_cast<double>(n_total));
}

LabelModel assign_explicit(const MaskedDataset& data, std::span<const double> p) {
  if (p.size() != data.num_missing())
    throw Error("expected one probability per missing record");
  return LabelModel(data.missing_indices(), std::vector<double>(p.begin(), p.end()));
}

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double clipped_logit(double s) {
  const double c = std::clamp(s, kScoreClip, 1.0 - kScoreClip);
  return std::log(c / (1.0 - c));
}

struct LogisticFit {
  double slope;
  double intercept;
};

double log_likelihood(std::span<const double> x, std::span<const int> y, double a, double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = a * x[i] + b;
    // log sigmoid(z) = -log1p(exp(-z)), stable in both tails.
    const double log_p = z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
    const double log_q = log_p - z;
    ll += y[i] ? log_p : log_q;
  }
  return ll;
}

// Newton-Raphson with step halving on the two-parameter logistic likelihood.
// `fix_slope` pins the slope at zero and fits the intercept alone.
LogisticFit fit_logistic(std::span<const double> x, std::span<const int> y, bool fix_slope) {
  constexpr double kRidge = 1e-9;
  double a = fix_slope ? 0.0 : 1.0, b = 0.0;
  double ll = log_likelihood(x, y, a, b) - 0.5 * kRidge * a * a;
  for (int iter = 0; iter < 200; ++iter) {
    double ga = -kRidge * a, gb = 0.0, haa = kRidge, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = sigmoid(a * x[i] + b);
      const double r = y[i] - p;
      const double w = p * (1.0 - p);
      ga += r * x[i];
      gb += r;
      haa += w * x[i] * x[i];
      hab += w * x[i];
      hbb += w;
    }
    double da = 0.0, db = 0.0;
    if (fix_slope) {
      if (hbb <= 0.0) break;
      db = gb / hbb;
    } else {
      const double det = haa * hbb - hab * hab;
      if (!(det > 0.0)) break;
      da = (hbb * ga - hab * gb) / det;
      db = (haa * gb - hab * ga) / det;
    }
    double step = 1.0, next_ll = ll;
    for (int h = 0; h < 40; ++h) {
      const double na = a + step * da, nb = b + step * db;
      next_ll = log_likelihood(x, y, na, nb) - 0.5 * kRidge * na * na;
      if (next_ll >= ll) break;
      step *= 0.5;
    }
    if (next_ll < ll) break;
    a += step * da;
    b += step * db;
    const bool converged = std::abs(step * da) < 1e-12 && std::abs(step * db) < 1e-12;
    ll = next_ll;
    if (converged) break;
  }
  return {a, b};
}

}  // namespace

ScalingBinningCalibrator::ScalingBinningCalibrator(double slope, double intercept,
                                                   std::vector<double> bin_edges,
                                                   std::vector<double> bin_values)
    : slope_(slope),
      intercept_(intercept),
      bin_edges_(std::move(bin_edges)),
      bin_values_(std::move(bin_values)) {
  if (slope_ < 0.0) throw Error("calibrator slope must be non-negative");
  if (bin_values_.empty() || bin_edges_.size() != bin_values_.size() + 1)
    throw Error("calibrator needs B values and B+1 edges");
  if (bin_edges_.front() != 0.0 || bin_edges_.back() != 1.0)
    throw Error("calibrator edges must span [0,1]");
  if (!std::is_sorted(bin_edges_.begin(), bin_edges_.end()))
    throw Error("calibrator edges must be non-decreasing");
  for (double v : bin_values_)
    if (!(v >= 0.0 && v <= 1.0)) throw Error("calibrator bin value outside [0,1]");
}

double ScalingBinningCalibrator::scale(double score) const {
  return sigmoid(slope_ * clipped_logit(score) + intercept_);
}

std::size_t ScalingBinningCalibrator::bin_of(double scaled) const {
  // Interior edges are bin_edges_[1..B-1]; a value equal to an edge belongs
  // to the bin starting there.
  const auto first = bin_edges_.begin() + 1;
  const auto last = bin_edges_.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(first, last, scaled) - first);
}

double ScalingBinningCalibrator::operator()(double score) const {
  return bin_values_[bin_of(scale(score))];
}

std::string ScalingBinningCalibrator::to_json() const {
  nlohmann::json j;
  j["scaler"] = {{"family", "logistic-logit"},
                 {"slope", slope_},
                 {"intercept", intercept_},
                 {"score_clip", kScoreClip}};
  j["bin_edges"] = bin_edges_;
  j["bin_values"] = bin_values_;
  return j.dump(2);
}

ScalingBinningCalibrator ScalingBinningCalibrator::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return ScalingBinningCalibrator(j.at("scaler").at("slope").get<double>(),
                                    j.at("scaler").at("intercept").get<double>(),
                                    j.at("bin_edges").get<std::vector<double>>(),
                                    j.at("bin_values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed calibrator JSON: ") + e.what());
  }
}

ScalingBinningCalibrator fit_scaling_binning(std::span<const double> scores,
                                             std::span<const int> labels, std::size_t bins) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  if (bins == 0) throw Error("calibrator needs at least one bin");
  if (scores.size() < bins) throw Error("fewer calibration samples than bins");
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw Error("calibration labels contain a single class");

  std::vector<double> x(scores.size());
  std::transform(scores.begin(), scores.end(), x.begin(), clipped_logit);
  auto fit = fit_logistic(x, labels, false);
  // A decreasing fit would break monotonicity of the scaler; fall back to the
  // intercept-only model.
  if (fit.slope < 0.0) fit = fit_logistic(x, labels, true);

  std::vector<double> scaled(scores.size());
  for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = sigmoid(fit.slope * x[i] + fit.intercept);
  std::vector<double> sorted = scaled;
  std::sort(sorted.begin(), sorted.end());

  const std::size_t m = sorted.size();
  std::vector<double> edges(bins + 1);
  edges.front() = 0.0;
  edges.back() = 1.0;
  for (std::size_t j = 1; j < bins; ++j) edges[j] = sorted[(j * m) / bins];

  ScalingBinningCalibrator draft(fit.slope, fit.intercept, edges,
                                 std::vector<double>(bins, 0.5));
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (double v : sorted) {
    const std::size_t b = draft.bin_of(v);
    sum[b] += v;
    ++count[b];
  }
  // Empty bins (from tied edges) inherit the nearest non-empty bin value to
  // their left, or to their right for leading empties.
  std::vector<double> values(bins, 0.0);
  std::optional<double> last;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b]) last = sum[b] / static_cast<double>(count[b]);
    if (last) values[b] = *last;
  }
  const auto first_nonempty =
      static_cast<std::size_t>(std::find_if(count.begin(), count.end(),
                                            [](std::size_t c) { return c > 0; }) -
                               count.begin());
  for (std::size_t b = 0; b < first_nonempty; ++b)
    values[b] = sum[first_nonempty] / static_cast<double>(count[first_nonempty]);
  return ScalingBinningCalibrator(fit.slope, fit.intercept, std::move(edges), std::move(values));
}

LabelModel calibrate_labels(const ScalingBinningCalibrator& cal, const MaskedDataset& data) {
  std::vector<double> p;
  p.reserve(data.num_missing());
  for (std::size_t i : data.missing_indices())
    p.push_back(std::clamp(cal(data.scores()[i]), kProbabilityClamp, 1.0 - kProbabilityClamp));
  return LabelModel(data.missing_indices(), std::move(p));
}

BetaParams beta_from_moments(double mean, double variance) {
  if (!(mean > 0.0 && mean < 1.0)) throw Error("Beta mean must lie in (0,1)");
  if (!(variance > 0.0)) throw Error("Beta variance must be positive");
  const double common = mean * (1.0 - mean) / variance - 1.0;
  if (!(common > 0.0))
    throw Error("Beta variance must be below mean*(1-mean)");
  return {common * mean, common * (1.0 - mean)};
}

LabelModel beta_noise(const LabelModel& model, double variance, std::uint64_t seed) {
  if (model.empty()) return model;
  const double v_star = model.min_variance();
  if (!(variance > 0.0) || !(variance < v_star)) {
    std::ostringstream os;
    os << "Beta noise requires 0 < variance < v* = min p_i(1-p_i) = " << v_star
       << "; got variance " << variance;
    throw Error(os.str());
  }
  std::vector<double> out(model.size());
  for (std::size_t j = 0; j < model.size(); ++j) {
    const auto bp = beta_from_moments(model.p()[j], variance);
    Rng rng(derive_seed(seed, j));
    std::gamma_distribution<double> ga(bp.alpha, 1.0), gb(bp.beta, 1.0);
    const double x = ga(rng), y = gb(rng);
    const double draw = x + y > 0.0 ? x / (x + y) : model.p()[j];
    out[j] = std::clamp(draw, kProbabilityClamp, 1.0 - kProbabilityClamp);
  }
  return LabelModel(model.indices(), std::move(out));
}

}  // namespace pemi
