#include "leakylab/risk.hpp"

#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "leakylab/csvio.hpp"
#include "leakylab/rng.hpp"

namespace leakylab {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double tail_series(double t) {
  const double t2 = t * t;
  return 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
}
}  // namespace

double kappa(double t) {
  if (t < 0.0) return 1.0 - kappa(-t);
  if (t <= 8.0) return 0.5 * std::erfc(t / kSqrt2);
  // phi(t)/t (1 - 1/t^2 + 3/t^4 - 15/t^6)
  return std::exp(-0.5 * t * t - kLogSqrt2Pi) / t * tail_series(t);
}

double log_kappa(double t) {
  if (t <= 8.0) {
    const double v = kappa(t);
    return std::log(v);
  }
  return -0.5 * t * t - kLogSqrt2Pi - std::log(t) + std::log(tail_series(t));
}

double exact_gaussian_error(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                            const SigmaSpec& sigma, int p, bool* misaligned) {
  const double dot = w.dot(mu);
  const double denom = std::sqrt(sigma.quad_form(w));
  if (!(denom > 0.0))
    throw ContractViolation("exact_gaussian_error: Sigma degenerate on span(w)");
  if (misaligned) *misaligned = dot <= 0.0;
  (void)p;
  return kappa(dot / denom);
}

double log_exact_gaussian_error(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                                const SigmaSpec& sigma, int p) {
  const double denom = std::sqrt(sigma.quad_form(w));
  if (!(denom > 0.0))
    throw ContractViolation("log_exact_gaussian_error: Sigma degenerate on span(w)");
  (void)p;
  return log_kappa(w.dot(mu) / denom);
}

GaussianBracket gaussian_bracket(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                                 const SigmaSpec& sigma, int p) {
  const double norm = w.norm();
  if (!(norm > 0.0)) throw ContractViolation("gaussian_bracket: w must be nonzero");
  const double ratio = w.dot(mu) / norm;
  GaussianBracket b;
  b.lower = kappa(ratio / std::sqrt(sigma.beta_min(p)));
  b.upper = kappa(ratio / std::sqrt(sigma.op(p)));
  return b;
}

namespace {

double draw_noise_entry(CounterRng& rng, const NoiseLaw& law) {
  switch (law.kind) {
    case NoiseLaw::Kind::gaussian: return rng.next_gaussian();
    case NoiseLaw::Kind::rademacher_subgauss: return rng.next_rademacher();
    case NoiseLaw::Kind::poly_tail: return rng.next_student_t_standardized(law.base_df);
  }
  return 0.0;
}

}  // namespace

McResult mc_error(const Eigen::VectorXd& w, const MixtureSpec& spec, long n_samples,
                  std::uint64_t seed, int workers) {
  if (n_samples < 1000) throw ContractViolation("mc_error: n_samples must be >= 1000");
  if (w.size() != spec.p) throw ContractViolation("mc_error: dimension mismatch");
  if (workers < 1) workers = 1;

  // <w, yx> = <w, mu> + y <Sigma^{1/2} w, xi>; draw the full xi vector so the
  // estimate is an independent check of any projected formula.
  const double w_mu = w.dot(spec.mu);
  const Eigen::VectorXd v = spec.sigma_spec.half_apply(w);

  std::vector<long> errors(static_cast<std::size_t>(workers), 0);
  std::vector<long> ties(static_cast<std::size_t>(workers), 0);
  std::vector<long> counts(static_cast<std::size_t>(workers), 0);

  auto run_worker = [&](int widx) {
    const long base = n_samples / workers;
    const long extra = widx < static_cast<int>(n_samples % workers) ? 1 : 0;
    const long my_count = base + extra;
    auto rng = CounterRng::stream(seed, stream_purpose::mc,
                                  static_cast<std::uint64_t>(widx));
    long err = 0, tie = 0;
    const int p = spec.p;
    for (long s = 0; s < my_count; ++s) {
      const double y = rng.next_rademacher();
      double dot = 0.0;
      for (int j = 0; j < p; ++j)
        dot += v[j] * draw_noise_entry(rng, spec.noise_law);
      const double score = w_mu + y * dot;
      if (score <= 0.0) {
        ++err;
        if (score == 0.0) ++tie;
      }
    }
    errors[static_cast<std::size_t>(widx)] = err;
    ties[static_cast<std::size_t>(widx)] = tie;
    counts[static_cast<std::size_t>(widx)] = my_count;
  };

  if (workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int widx = 0; widx < workers; ++widx) pool.emplace_back(run_worker, widx);
    for (auto& t : pool) t.join();
  }

  long err = 0, tie = 0, total = 0;
  for (int widx = 0; widx < workers; ++widx) {
    err += errors[static_cast<std::size_t>(widx)];
    tie += ties[static_cast<std::size_t>(widx)];
    total += counts[static_cast<std::size_t>(widx)];
  }

  McResult r;
  r.n_samples = total;
  r.tie_count = tie;
  r.estimate = static_cast<double>(err) / total;
  r.stderr_ = std::sqrt(r.estimate * (1.0 - r.estimate) / total);
  return r;
}

PhaseSummary phase_summary(double n, double norm_mu_sq, double R, double psi2_norm) {
  if (!(n > 0.0) || !(R > 0.0) || !(psi2_norm > 0.0) || norm_mu_sq < 0.0)
    throw ContractViolation("phase_summary: invalid inputs");
  PhaseSummary s;
  s.regime = n * norm_mu_sq <= R ? SignalRegime::weak : SignalRegime::strong;
  s.exponent = n * norm_mu_sq * norm_mu_sq /
               (psi2_norm * psi2_norm * (n * norm_mu_sq + R));
  return s;
}

double bayes_error(const Eigen::VectorXd& mu, const SigmaSpec& sigma, int p) {
  const double q = sigma.inv_quad_form(mu);
  if (!std::isfinite(q)) throw ConfigError("bayes_error: singular covariance");
  return kappa(std::sqrt(q));
}

double pm_bound_shape(double op_sigma, double norm_mu_sq, double R, double n) {
  if (!(norm_mu_sq > 0.0)) return std::numeric_limits<double>::infinity();
  return op_sigma * (1.0 / norm_mu_sq + R / (n * norm_mu_sq * norm_mu_sq));
}

nlohmann::json ErrorReport::to_json() const {
  return {{"exact_gaussian", exact_gaussian},
          {"misaligned", misaligned},
          {"mc_estimate", mc_estimate},
          {"mc_stderr", mc_stderr},
          {"mc_samples", mc_samples},
          {"mc_ties", mc_ties},
          {"margin_ratio", margin_ratio},
          {"sigma_margin_ratio", sigma_margin_ratio},
          {"bound_exponent", bound_exponent},
          {"kappa_lower", kappa_lower},
          {"kappa_upper", kappa_upper},
          {"psi2", psi2},
          {"pm_bound", pm_bound},
          {"bayes", bayes}};
}

std::vector<std::string> ErrorReport::csv_header() const {
  return {"exact_gaussian", "mc_estimate", "mc_stderr", "mc_samples", "mc_ties",
          "margin_ratio", "sigma_margin_ratio", "bound_exponent", "kappa_lower",
          "kappa_upper", "psi2", "pm_bound", "bayes"};
}

std::vector<std::string> ErrorReport::csv_row() const {
  using csv::format_double;
  return {format_double(exact_gaussian), format_double(mc_estimate),
          format_double(mc_stderr), std::to_string(mc_samples),
          std::to_string(mc_ties), format_double(margin_ratio),
          format_double(sigma_margin_ratio), format_double(bound_exponent),
          format_double(kappa_lower), format_double(kappa_upper),
          format_double(psi2), format_double(pm_bound), format_double(bayes)};
}

ErrorReport error_report(const Eigen::VectorXd& w, const MixtureSpec& spec,
                         long mc_samples, std::uint64_t seed, int workers) {
  ErrorReport rep;
  const auto f = data_functionals(spec);
  const double R = f.trace_sigma;

  rep.margin_ratio = w.norm() > 0.0 ? w.dot(spec.mu) / w.norm() : kNan;
  const double sig_norm = std::sqrt(spec.sigma_spec.quad_form(w));
  rep.sigma_margin_ratio = sig_norm > 0.0 ? w.dot(spec.mu) / sig_norm : kNan;
  rep.bound_exponent = f.norm_mu_sq > 0.0
                           ? spec.n * f.norm_mu_sq * f.norm_mu_sq /
                                 (spec.n * f.norm_mu_sq + R)
                           : 0.0;

  rep.exact_gaussian = kNan;
  rep.misaligned = false;
  if (spec.noise_law.kind == NoiseLaw::Kind::gaussian)
    rep.exact_gaussian = exact_gaussian_error(w, spec.mu, spec.sigma_spec, spec.p,
                                              &rep.misaligned);

  const auto bracket = gaussian_bracket(w, spec.mu, spec.sigma_spec, spec.p);
  rep.kappa_lower = bracket.lower;
  rep.kappa_upper = bracket.upper;

  const auto mc = mc_error(w, spec, mc_samples, seed, workers);
  rep.mc_estimate = mc.estimate;
  rep.mc_stderr = mc.stderr_;
  rep.mc_samples = mc.n_samples;
  rep.mc_ties = mc.tie_count;

  rep.psi2 = spec.noise_law.psi2();
  rep.pm_bound = spec.noise_law.kind == NoiseLaw::Kind::poly_tail
                     ? pm_bound_shape(f.op_sigma, f.norm_mu_sq, R, spec.n)
                     : kNan;
  rep.bayes = bayes_error(spec.mu, spec.sigma_spec, spec.p);
  return rep;
}

}  // namespace leakylab
