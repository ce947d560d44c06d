#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pemi/dataset.hpp"
#include "pemi/label_models.hpp"
#include "pemi/metrics.hpp"

namespace pemi {

// Standard normal CDF via erfc.
double normal_cdf(double x);

enum CmCell : std::size_t { kTP = 0, kFN = 1, kFP = 2, kTN = 3 };

// Mean vector and covariance of (TP, FN, FP, TN) when missing labels are
// independent Bernoulli draws.
struct CmMoments {
  std::array<double, 4> mean{};
  std::array<std::array<double, 4>, 4> cov{};
};

CmMoments cm_moments(const MaskedDataset& data, const LabelModel& model,
                     double threshold = kDefaultThreshold);

class GaussianCdf {
 public:
  GaussianCdf() = default;
  GaussianCdf(double mu, double sigma2, std::string method_tag = "closed-form");

  double mu() const { return mu_; }
  double sigma2() const { return sigma2_; }
  bool degenerate() const { return sigma2_ == 0.0; }
  const std::string& method_tag() const { return method_tag_; }

  // Phi((t - mu) / sigma); a unit step at mu when degenerate.
  double operator()(double t) const;
  double quantile(double q) const;

 private:
  double mu_ = 0.0;
  double sigma2_ = 0.0;
  std::string method_tag_ = "closed-form";
};

struct RatioGauss {
  double mu;
  double sigma2;
};

// Mean and variance of the normal approximation to Z/W for jointly normal
// (Z, W). Requires mu_w > 0 and rho in [-1, 1].
RatioGauss ratio_gauss_moments(double mu_z, double sigma_z2, double mu_w, double sigma_w2,
                               double rho);
// Same, parameterised by Cov(Z, W) so that zero-variance sides need no rho.
RatioGauss ratio_gauss_moments_cov(double mu_z, double sigma_z2, double mu_w, double sigma_w2,
                                   double cov_zw);

// Z = alpha + sum a_i Y_i and W = beta + sum b_i Y_i over the missing
// records, with Y_i ~ Bernoulli(p_i) independent.
struct AffineBernoulliRatio {
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> p;
};

// Numerator/denominator bookkeeping for precision, recall and F1 from the
// confusion-matrix estimators.
AffineBernoulliRatio ratio_decomposition(MetricKind kind, const MaskedDataset& data,
                                         const LabelModel& model,
                                         double threshold = kDefaultThreshold);

struct RatioMoments {
  double mu_z = 0.0;
  double sigma_z2 = 0.0;
  double mu_w = 0.0;
  double sigma_w2 = 0.0;
  double cov_zw = 0.0;
  double rho = 0.0;  // 0 when either side has zero variance
  double mu = 0.0;
  double sigma2 = 0.0;
};

RatioMoments ratio_moments(const AffineBernoulliRatio& r);

// Conditions under which the ratio bound is claimed: 0 < alpha <= beta,
// a_i >= 0, b_i > 0, b_i >= a_i, p_i in (0, 1), and at least one a_i > 0.
struct RatioBoundPreconditions {
  bool holds = false;
  std::string reason;
  std::size_t n_a = 0;
  double v_star = 0.0;
  double a_star = 0.0;
  double b_sup = 0.0;
};
RatioBoundPreconditions check_ratio_preconditions(const AffineBernoulliRatio& r);

inline constexpr double kBerryEsseenC0 = 0.5600;

// C0 / sqrt(n v*) * (1 + a^*) / (2 a_*).
double ks_bound_bernoulli_sum(std::size_t n, double v_star, double a_star, double a_sup);

// C0 / sqrt(n_a v*) * (1 + b^*) / a_* + sqrt(2/pi) (sigma_w^2 (|mu_z| + sigma_z^2)
// + mu_w^2) / (sigma mu_w^3).
double ks_bound_ratio(const RatioMoments& moments, std::size_t n_a, double v_star, double a_star,
                      double b_sup);

struct KsBound {
  std::string kind;  // "bernoulli-sum" or "ratio"
  double value = 0.0;
  bool vacuous() const { return value > 1.0; }
};

struct RocAucOptions {
  std::size_t fallback_replicates = 10000;
  std::size_t n_threshold = 120;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RocAucMoments {
  double mean_num = 0.0;
  double mean_den = 0.0;
  double var_num = 0.0;
  double var_den = 0.0;
  double cov_num_den = 0.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  std::string method_tag;  // "exact" or "pemi-fallback"
};

// Exact moments of the ROC-AUC numerator and denominator from the pair
// tensors omega, nu, Gamma, eta. O(n^3) after skipping index patterns where
// every tensor vanishes.
RocAucMoments roc_auc_tensor_moments(const MaskedDataset& data, const LabelModel& model,
                                     unsigned threads = 1);

// Exact path for n <= n_threshold; otherwise mean and variance of a PEMI run.
RocAucMoments roc_auc_moments(const MaskedDataset& data, const LabelModel& model,
                              const RocAucOptions& options = {});

struct GaussOptions {
  double threshold = kDefaultThreshold;
  RocAucOptions roc;
};

struct GaussPrediction {
  GaussianCdf cdf;
  std::optional<KsBound> bound;
  std::vector<std::string> warnings;
};

GaussPrediction predict_gauss(MetricKind kind, const MaskedDataset& data,
                              const LabelModel& model, const GaussOptions& options = {});

GaussianCdf metric_gauss(MetricKind kind, const MaskedDataset& data, const LabelModel& model,
                         double threshold = kDefaultThreshold);

}  // namespace pemi
