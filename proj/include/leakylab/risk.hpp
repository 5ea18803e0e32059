#pragma once

#include <cstdint>

#include "json.hpp"
#include "leakylab/mixture.hpp"

namespace leakylab {

// kappa(t) = P(xi >= t) for standard normal xi; asymptotic tail expansion
// past t = 8 so deep-tail sweeps do not flush to zero prematurely.
double kappa(double t);
// log kappa(t), finite far beyond the double underflow point of kappa.
double log_kappa(double t);

// kappa(<w, mu> / ||Sigma^{1/2} w||). When <w, mu> <= 0 the direction is
// misaligned and the returned value is >= 1/2.
double exact_gaussian_error(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                            const SigmaSpec& sigma, int p, bool* misaligned = nullptr);
double log_exact_gaussian_error(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                                const SigmaSpec& sigma, int p);

// lower = kappa(beta_min^{-1/2} <w,mu>/||w||), upper = kappa(beta_max^{-1/2} ...);
// lower <= exact <= upper as probabilities (kappa is decreasing).
struct GaussianBracket {
  double lower;
  double upper;
};
GaussianBracket gaussian_bracket(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                                 const SigmaSpec& sigma, int p);

struct McResult {
  double estimate;
  double stderr_;
  long tie_count;
  long n_samples;
};

// Fresh draws from the mixture; error when <w, y x> <= 0 (ties counted as
// errors, reported separately). The sample budget is split across workers
// with derived seeds and reduced in a fixed order.
McResult mc_error(const Eigen::VectorXd& w, const MixtureSpec& spec, long n_samples,
                  std::uint64_t seed, int workers = 1);

enum class SignalRegime { weak, strong };

struct PhaseSummary {
  SignalRegime regime;  // weak if n||mu||^2 <= R
  double exponent;      // n ||mu||^4 / (psi2^2 (n||mu||^2 + R))
};
PhaseSummary phase_summary(double n, double norm_mu_sq, double R, double psi2_norm);

// kappa(||Sigma^{-1/2} mu||)
double bayes_error(const Eigen::VectorXd& mu, const SigmaSpec& sigma, int p);

// Polynomial-mixture bound shape ||Sigma|| (1/||mu||^2 + R/(n ||mu||^4)),
// reported with unit constant.
double pm_bound_shape(double op_sigma, double norm_mu_sq, double R, double n);

struct ErrorReport {
  double exact_gaussian;      // NaN unless the noise is gaussian
  bool misaligned = false;
  double mc_estimate;
  double mc_stderr;
  long mc_samples;
  long mc_ties;
  double margin_ratio;        // <w, mu> / ||w||
  double sigma_margin_ratio;  // <w, mu> / ||Sigma^{1/2} w||
  double bound_exponent;      // n ||mu||^4 / (n||mu||^2 + R)
  double kappa_lower;
  double kappa_upper;
  double psi2;                // NaN for poly_tail
  double pm_bound;            // NaN unless poly_tail
  double bayes;

  nlohmann::json to_json() const;
  std::vector<std::string> csv_header() const;
  std::vector<std::string> csv_row() const;
};

ErrorReport error_report(const Eigen::VectorXd& w, const MixtureSpec& spec,
                         long mc_samples, std::uint64_t seed, int workers = 1);

}  // namespace leakylab
