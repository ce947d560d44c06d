#include "pemi/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pemi/error.hpp"
#include "pemi/parallel.hpp"
#include "pemi/pemi.hpp"

namespace pemi {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// Inverse of normal_cdf by bisection refined with Newton steps; only used for
// reporting quantiles.
double normal_quantile(double q) {
  if (q <= 0.0) return -INFINITY;
  if (q >= 1.0) return INFINITY;
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct KnownCounts {
  double tp = 0, fn = 0, fp = 0, tn = 0;
};

KnownCounts known_counts(const MaskedDataset& data, std::span<const std::uint8_t> psi) {
  KnownCounts c;
  for (std::size_t i : data.known_indices()) {
    if (data.known_label(i)) (psi[i] ? c.tp : c.fn) += 1.0;
    else (psi[i] ? c.fp : c.tn) += 1.0;
  }
  return c;
}

}  // namespace

CmMoments cm_moments(const MaskedDataset& data, const LabelModel& model, double threshold) {
  model.check_domain(data);
  const auto psi = induce_classifier(data.scores(), threshold);
  const auto known = known_counts(data, psi);
  CmMoments m;
  m.mean = {known.tp, known.fn, known.fp, known.tn};
  double var_pos = 0.0, var_neg = 0.0;  // sum p(1-p) over missing psi=1 / psi=0
  const auto& missing = data.missing_indices();
  for (std::size_t j = 0; j < missing.size(); ++j) {
    const double p = model.p()[j];
    if (psi[missing[j]]) {
      m.mean[kTP] += p;
      m.mean[kFP] += 1.0 - p;
      var_pos += p * (1.0 - p);
    } else {
      m.mean[kFN] += p;
      m.mean[kTN] += 1.0 - p;
      var_neg += p * (1.0 - p);
    }
  }
  m.cov[kTP][kTP] = m.cov[kFP][kFP] = var_pos;
  m.cov[kTP][kFP] = m.cov[kFP][kTP] = -var_pos;
  m.cov[kFN][kFN] = m.cov[kTN][kTN] = var_neg;
  m.cov[kFN][kTN] = m.cov[kTN][kFN] = -var_neg;
  return m;
}

GaussianCdf::GaussianCdf(double mu, double sigma2, std::string method_tag)
    : mu_(mu), sigma2_(sigma2), method_tag_(std::move(method_tag)) {
  if (!(sigma2_ >= 0.0)) throw Error("Gaussian variance must be non-negative");
}

double GaussianCdf::operator()(double t) const {
  if (degenerate()) return t >= mu_ ? 1.0 : 0.0;
  return normal_cdf((t - mu_) / std::sqrt(sigma2_));
}

double GaussianCdf::quantile(double q) const {
  if (degenerate()) return mu_;
  return mu_ + std::sqrt(sigma2_) * normal_quantile(q);
}

RatioGauss ratio_gauss_moments_cov(double mu_z, double sigma_z2, double mu_w, double sigma_w2,
                                   double cov_zw) {
  if (!(mu_w > 0.0)) throw Error("ratio approximation requires a positive denominator mean");
  if (sigma_z2 < 0.0 || sigma_w2 < 0.0) throw Error("variances must be non-negative");
  const double mu_w2 = mu_w * mu_w;
  const double num = mu_z * mu_z * sigma_w2 + mu_w2 * sigma_z2 - 2.0 * cov_zw * mu_z * mu_w;
  // Rounding can leave a tiny negative value where the exact numerator is 0.
  const double scale = mu_z * mu_z * sigma_w2 + mu_w2 * sigma_z2;
  const double sigma2 = num < 0.0 && -num <= 1e-12 * scale ? 0.0 : num / (mu_w2 * mu_w2);
  if (sigma2 < 0.0) throw Error("ratio variance is negative; inputs are not a valid covariance");
  return {mu_z / mu_w, sigma2};
}

RatioGauss ratio_gauss_moments(double mu_z, double sigma_z2, double mu_w, double sigma_w2,
                               double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw Error("correlation must lie in [-1, 1]");
  if (sigma_z2 < 0.0 || sigma_w2 < 0.0) throw Error("variances must be non-negative");
  return ratio_gauss_moments_cov(mu_z, sigma_z2, mu_w, sigma_w2,
                                 rho * std::sqrt(sigma_z2) * std::sqrt(sigma_w2));
}

AffineBernoulliRatio ratio_decomposition(MetricKind kind, const MaskedDataset& data,
                                         const LabelModel& model, double threshold) {
  model.check_domain(data);
  const auto psi = induce_classifier(data.scores(), threshold);
  const auto known = known_counts(data, psi);
  AffineBernoulliRatio r;
  const auto& missing = data.missing_indices();
  r.p.assign(model.p().begin(), model.p().end());
  r.a.resize(missing.size());
  r.b.resize(missing.size());
  double missing_pred_pos = 0.0;
  for (std::size_t i : missing) missing_pred_pos += psi[i];
  switch (kind) {
    case MetricKind::kPrecision:
      // TP / (TP + FP); the denominator counts predicted positives, fixed.
      r.alpha = known.tp;
      r.beta = known.tp + known.fp + missing_pred_pos;
      for (std::size_t j = 0; j < missing.size(); ++j) {
        r.a[j] = psi[missing[j]];
        r.b[j] = 0.0;
      }
      break;
    case MetricKind::kRecall:
      r.alpha = known.tp;
      r.beta = known.tp + known.fn;
      for (std::size_t j = 0; j < missing.size(); ++j) {
        r.a[j] = psi[missing[j]];
        r.b[j] = 1.0;
      }
      break;
    case MetricKind::kF1:
      // 2TP / (2TP + FP + FN). A missing psi=1 record adds 2Y to the
      // numerator and 2Y + (1 - Y) = 1 + Y to the denominator; a missing psi=0
      // record adds Y (a false negative) to the denominator only.
      r.alpha = 2.0 * known.tp;
      r.beta = 2.0 * known.tp + known.fp + known.fn + missing_pred_pos;
      for (std::size_t j = 0; j < missing.size(); ++j) {
        r.a[j] = 2.0 * psi[missing[j]];
        r.b[j] = 1.0;
      }
      break;
    default:
      throw Error("ratio decomposition applies to precision, recall and F1");
  }
  return r;
}

RatioMoments ratio_moments(const AffineBernoulliRatio& r) {
  RatioMoments m;
  m.mu_z = r.alpha;
  m.mu_w = r.beta;
  for (std::size_t i = 0; i < r.p.size(); ++i) {
    const double v = r.p[i] * (1.0 - r.p[i]);
    m.mu_z += r.a[i] * r.p[i];
    m.mu_w += r.b[i] * r.p[i];
    m.sigma_z2 += r.a[i] * r.a[i] * v;
    m.sigma_w2 += r.b[i] * r.b[i] * v;
    m.cov_zw += r.a[i] * r.b[i] * v;
  }
  if (m.sigma_z2 > 0.0 && m.sigma_w2 > 0.0)
    m.rho = std::clamp(m.cov_zw / std::sqrt(m.sigma_z2 * m.sigma_w2), -1.0, 1.0);
  const auto g = ratio_gauss_moments_cov(m.mu_z, m.sigma_z2, m.mu_w, m.sigma_w2, m.cov_zw);
  m.mu = g.mu;
  m.sigma2 = g.sigma2;
  return m;
}

RatioBoundPreconditions check_ratio_preconditions(const AffineBernoulliRatio& r) {
  RatioBoundPreconditions c;
  auto fail = [&](std::string why) {
    c.holds = false;
    c.reason = std::move(why);
    return c;
  };
  if (!(r.alpha > 0.0)) return fail("alpha must be positive");
  if (!(r.alpha <= r.beta)) return fail("alpha must not exceed beta");
  c.v_star = 0.25;
  c.a_star = INFINITY;
  for (std::size_t i = 0; i < r.p.size(); ++i) {
    if (!(r.p[i] > 0.0 && r.p[i] < 1.0)) return fail("p_i must lie in (0,1)");
    if (r.a[i] < 0.0) return fail("a_i must be non-negative");
    if (!(r.b[i] > 0.0)) return fail("b_i must be positive");
    if (r.b[i] < r.a[i]) return fail("b_i must be at least a_i");
    c.v_star = std::min(c.v_star, r.p[i] * (1.0 - r.p[i]));
    c.b_sup = std::max(c.b_sup, std::abs(r.b[i]));
    if (r.a[i] > 0.0) {
      ++c.n_a;
      c.a_star = std::min(c.a_star, r.a[i]);
    }
  }
  if (c.n_a == 0) return fail("no positive numerator coefficient");
  c.holds = true;
  return c;
}

double ks_bound_bernoulli_sum(std::size_t n, double v_star, double a_star, double a_sup) {
  if (n == 0) throw Error("Bernoulli-sum bound needs n >= 1");
  if (!(v_star > 0.0 && v_star <= 0.25)) throw Error("v* must lie in (0, 0.25]");
  if (!(a_star > 0.0 && a_star <= a_sup)) throw Error("need 0 < a_* <= a^*");
  return kBerryEsseenC0 / std::sqrt(static_cast<double>(n) * v_star) * (1.0 + a_sup) /
         (2.0 * a_star);
}

double ks_bound_ratio(const RatioMoments& m, std::size_t n_a, double v_star, double a_star,
                      double b_sup) {
  if (!(m.mu_w > 0.0)) throw Error("ratio bound requires mu_w > 0");
  if (n_a == 0) throw Error("ratio bound needs n_a >= 1");
  if (!(v_star > 0.0 && v_star <= 0.25)) throw Error("v* must lie in (0, 0.25]");
  if (!(a_star > 0.0)) throw Error("a_* must be positive");
  const double sigma = std::sqrt(m.sigma2);
  if (!(sigma > 0.0)) throw Error("ratio bound undefined for sigma = 0");
  const double first =
      kBerryEsseenC0 / std::sqrt(static_cast<double>(n_a) * v_star) * (1.0 + b_sup) / a_star;
  const double second = std::sqrt(2.0 / std::numbers::pi) *
                        (m.sigma_w2 * (std::abs(m.mu_z) + m.sigma_z2) + m.mu_w * m.mu_w) /
                        (sigma * m.mu_w * m.mu_w * m.mu_w);
  return first + second;
}

namespace {

// Tensor entries for Y_i, i in [n]: known records are constants y_i, missing
// records Bernoulli(p_i). `missing_p[i]` is p_i or negative for known i.
class PairTensors {
 public:
  PairTensors(const MaskedDataset& data, const LabelModel& model) : y_(data.n(), 0.0), p_(data.n(), -1.0) {
    for (std::size_t i : data.known_indices()) y_[i] = data.known_label(i);
    const auto& missing = data.missing_indices();
    for (std::size_t j = 0; j < missing.size(); ++j) p_[missing[j]] = model.p()[j];
  }

  bool unknown(std::size_t i) const { return p_[i] >= 0.0; }

  // E[Y_i (1 - Y_j)]
  double omega(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    const double ei = unknown(i) ? p_[i] : y_[i];
    const double ej = unknown(j) ? p_[j] : y_[j];
    return ei * (1.0 - ej);
  }

  // Cov(Y_i, Y_j)
  double nu(std::size_t i, std::size_t j) const {
    if (i == j && unknown(i)) return p_[i] * (1.0 - p_[i]);
    return 0.0;
  }

  // E[Y_i Y_j Y_k] - E[Y_i Y_j] E[Y_k]
  double gamma(std::size_t i, std::size_t j, std::size_t k) const {
    const bool ui = unknown(i), uj = unknown(j), uk = unknown(k);
    if (ui && uj && uk) {
      if (i == j && j == k) return p_[i] * (1.0 - p_[i]);
      if (i == k && k != j) return p_[i] * p_[j] * (1.0 - p_[i]);
      if (k == j && j != i) return p_[i] * p_[j] * (1.0 - p_[j]);
      return 0.0;
    }
    if (j == k && k != i && !ui && uj && uk) return y_[i] * p_[k] * (1.0 - p_[k]);
    if (i == k && k != j && !uj && ui && uk) return y_[j] * p_[k] * (1.0 - p_[k]);
    return 0.0;
  }

  // E[Y_i Y_j Y_k Y_l] - E[Y_i Y_j] E[Y_k Y_l]
  double eta(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    if (!unknown(i)) return y_[i] * gamma(k, l, j);
    if (!unknown(j)) return y_[j] * gamma(k, l, i);
    if (!unknown(k)) return y_[k] * gamma(i, j, l);
    if (!unknown(l)) return y_[l] * gamma(i, j, k);
    const double pi = p_[i], pj = p_[j], pk = p_[k], pl = p_[l];
    const bool ij = i == j, ik = i == k, il = i == l, jk = j == k, jl = j == l, kl = k == l;
    if (ij && jk && kl) return pi * (1.0 - pi);
    if (ij && jk && !kl) return pi * pl * (1.0 - pi);
    if (ij && jl && !jk) return pi * pk * (1.0 - pi);
    if (ik && kl && !ij) return pi * pj * (1.0 - pi);
    if (jk && kl && !ij) return pi * pj * (1.0 - pj);
    if (ik && jl && !ij) return pi * pj * (1.0 - pi * pj);
    if (il && jk && !ij) return pi * pj * (1.0 - pi * pj);
    if (ik && !ij && !jl && !il) return pi * pj * pl * (1.0 - pi);
    if (jl && !ij && !ik && !jk) return pi * pj * pk * (1.0 - pj);
    if (il && !ij && !jk && !ik) return pi * pj * pk * (1.0 - pi);
    if (jk && !ij && !il && !jl) return pi * pj * pl * (1.0 - pj);
    return 0.0;
  }

  // Covariance kernel of Y_i (1 - Y_j) with Y_k (1 - Y_l).
  double kernel(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return nu(i, k) - gamma(i, j, k) - gamma(k, l, i) + eta(i, j, k, l);
  }

 private:
  std::vector<double> y_;
  std::vector<double> p_;
};

}  // namespace

RocAucMoments roc_auc_tensor_moments(const MaskedDataset& data, const LabelModel& model,
                                     unsigned threads) {
  model.check_domain(data);
  const std::size_t n = data.n();
  const auto scores = data.scores();
  const PairTensors t(data, model);
  auto xi = [&](std::size_t i, std::size_t j) { return scores[i] >= scores[j] ? 1.0 : 0.0; };

  struct Partial {
    double mean_num = 0, mean_den = 0, var_num = 0, var_den = 0, cov = 0;
  };
  std::vector<Partial> partial(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Partial acc;
      for (std::size_t j = 0; j < n; ++j) {
        const double x_ij = xi(i, j);
        const double w = t.omega(i, j);
        acc.mean_num += x_ij * w;
        acc.mean_den += w;
        // Every tensor in the kernel vanishes unless {k, l} meets {i, j}.
        auto add = [&](std::size_t k, std::size_t l) {
          const double kern = t.kernel(i, j, k, l);
          if (kern == 0.0) return;
          const double x_kl = xi(k, l);
          acc.var_num += x_ij * x_kl * kern;
          acc.var_den += kern;
          acc.cov += x_ij * kern;
        };
        for (std::size_t k = 0; k < n; ++k) {
          if (k == i || k == j) {
            for (std::size_t l = 0; l < n; ++l) add(k, l);
          } else {
            add(k, i);
            if (j != i) add(k, j);
          }
        }
      }
      partial[i] = acc;
    }
  });
  RocAucMoments m;
  for (const auto& p : partial) {
    m.mean_num += p.mean_num;
    m.mean_den += p.mean_den;
    m.var_num += p.var_num;
    m.var_den += p.var_den;
    m.cov_num_den += p.cov;
  }
  if (!(m.mean_den > 0.0))
    throw Error("ROC-AUC denominator has zero expectation (no positive/negative pair possible)");
  const auto g = ratio_gauss_moments_cov(m.mean_num, std::max(0.0, m.var_num), m.mean_den,
                                         std::max(0.0, m.var_den), m.cov_num_den);
  m.mu = g.mu;
  m.sigma2 = g.sigma2;
  m.method_tag = "exact";
  return m;
}

RocAucMoments roc_auc_moments(const MaskedDataset& data, const LabelModel& model,
                              const RocAucOptions& options) {
  if (data.n() <= options.n_threshold)
    return roc_auc_tensor_moments(data, model, options.threads);
  PemiOptions po;
  po.replicates = options.fallback_replicates;
  po.seed = options.seed;
  po.threads = options.threads;
  const auto ecdf = run_pemi(MetricKind::kRocAuc, data, model, po);
  RocAucMoments m;
  m.mu = ecdf.mean();
  m.sigma2 = ecdf.variance();
  m.method_tag = "pemi-fallback";
  return m;
}

GaussPrediction predict_gauss(MetricKind kind, const MaskedDataset& data,
                              const LabelModel& model, const GaussOptions& options) {
  model.check_domain(data);
  GaussPrediction out;
  if (kind == MetricKind::kRocAuc) {
    const auto m = roc_auc_moments(data, model, options.roc);
    out.cdf = GaussianCdf(m.mu, m.sigma2, m.method_tag);
    return out;
  }
  if (kind == MetricKind::kAccuracy) {
    const auto cm = cm_moments(data, model, options.threshold);
    const double n = static_cast<double>(data.n());
    if (data.n() == 0) throw Error("accuracy of an empty dataset is undefined");
    const double mu = (cm.mean[kTP] + cm.mean[kTN]) / n;
    const double sigma2 = (cm.cov[kTP][kTP] + cm.cov[kTN][kTN]) / (n * n);
    out.cdf = GaussianCdf(mu, sigma2);
    if (sigma2 > 0.0)
      out.bound = KsBound{"bernoulli-sum",
                          ks_bound_bernoulli_sum(model.size(), model.min_variance(), 1.0, 1.0)};
    return out;
  }

  const auto r = ratio_decomposition(kind, data, model, options.threshold);
  double fixed_den = r.beta;
  for (std::size_t i = 0; i < r.b.size(); ++i) fixed_den += r.p[i] * r.b[i];
  if (!(fixed_den > 0.0))
    throw Error(to_string(kind) + ": expected denominator is zero; the metric is UNDEFINED");
  const auto m = ratio_moments(r);
  out.cdf = GaussianCdf(m.mu, m.sigma2);
  if (!(r.alpha > 0.0))
    out.warnings.push_back("alpha = 0: no known-label contribution to the numerator; "
                           "no bound is claimed");
  if (m.sigma2 == 0.0) return out;

  if (kind == MetricKind::kPrecision) {
    // Fixed denominator: an affine image of a Bernoulli sum over missing
    // predicted positives.
    std::size_t count = 0;
    double v_star = 0.25;
    for (std::size_t i = 0; i < r.a.size(); ++i)
      if (r.a[i] > 0.0) {
        ++count;
        v_star = std::min(v_star, r.p[i] * (1.0 - r.p[i]));
      }
    out.bound = KsBound{"bernoulli-sum", ks_bound_bernoulli_sum(count, v_star, 1.0, 1.0)};
    return out;
  }
  const auto pre = check_ratio_preconditions(r);
  if (pre.holds) {
    out.bound = KsBound{"ratio", ks_bound_ratio(m, pre.n_a, pre.v_star, pre.a_star, pre.b_sup)};
  } else if (r.alpha > 0.0) {
    out.warnings.push_back("ratio bound preconditions fail: " + pre.reason);
  }
  return out;
}

GaussianCdf metric_gauss(MetricKind kind, const MaskedDataset& data, const LabelModel& model,
                         double threshold) {
  GaussOptions o;
  o.threshold = threshold;
  return predict_gauss(kind, data, model, o).cdf;
}

}  // namespace pemi
