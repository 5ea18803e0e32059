#include "leakylab/regime.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace leakylab {

namespace {
constexpr double kE = 2.718281828459045235;

double spectral_norm_sym(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
}

AssumptionFlag make_flag(std::string name, double lhs, double rhs, bool ge,
                         bool strict) {
  // ge: inequality reads lhs >= rhs (or > when strict); otherwise lhs <= rhs.
  AssumptionFlag f;
  f.name = std::move(name);
  f.lhs = lhs;
  f.rhs = rhs;
  f.strict = strict;
  f.slack = ge ? lhs - rhs : rhs - lhs;
  f.pass = strict ? f.slack > 0.0 : f.slack >= 0.0;
  if (std::isnan(f.slack)) f.pass = false;
  return f;
}

}  // namespace

ThetaPair measure_event_E(const Dataset& data) {
  const int n = data.n();
  Eigen::VectorXd norms = data.Z.rowwise().norm();
  const double rmax = norms.maxCoeff();
  const double mu_norm = data.spec.mu.norm();
  // Paper convention: both thetas are 0 when mu = 0 or Rmax(z) = 0.
  if (mu_norm == 0.0 || rmax == 0.0) return {0.0, 0.0};

  double theta1 = 0.0;
  Eigen::MatrixXd ZZt = data.Z * data.Z.transpose();
  for (int i = 0; i < n; ++i) {
    if (norms[i] == 0.0) continue;
    for (int k = i + 1; k < n; ++k) {
      if (norms[k] == 0.0) continue;
      theta1 = std::max(theta1, std::abs(ZZt(i, k)) / (norms[i] * norms[k]));
    }
  }
  double theta2 = 0.0;
  const Eigen::VectorXd zmu = data.Z * data.spec.mu;
  for (int i = 0; i < n; ++i) {
    if (norms[i] == 0.0) continue;  // zero row contributes 0
    theta2 = std::max(theta2, std::abs(zmu[i]) / (norms[i] * mu_norm));
  }
  return {theta1, theta2};
}

TildeEps measure_tilde_events(const Dataset& data, double R) {
  if (!(R > 0.0)) throw ContractViolation("measure_tilde_events: R must be > 0");
  TildeEps e;
  Eigen::MatrixXd S = data.Z * data.Z.transpose();
  S.diagonal().array() -= R;
  e.eps1 = 3.0 * spectral_norm_sym(S) / R;
  e.eps2 = 3.0 * (data.Z * data.spec.mu).norm() / R;
  const double half_n = 0.5 * data.n();
  e.eps3 = std::abs(data.n_plus() - half_n) / half_n;
  return e;
}

double c_w_bound(double gamma, double rmax, double rmin) {
  return 24.0 * kE / (gamma * gamma) * (rmax * rmax) / (rmin * rmin);
}

SlackParams SlackParams::paper_defaults(double gamma) {
  const double e13 = 5.0 * gamma * gamma / (368.0 * kE);
  return {e13, 0.5, e13};
}

void SlackParams::validate() const {
  if (eps1 < 0.0 || eps1 > 1.0) throw ContractViolation("eps1 must be in [0, 1]");
  if (!(eps2 > 0.0 && eps2 <= 1.0)) throw ContractViolation("eps2 must be in (0, 1]");
  if (eps3 < 0.0 || eps3 >= 1.0) throw ContractViolation("eps3 must be in [0, 1)");
}

nlohmann::json AssumptionFlag::to_json() const {
  return {{"name", name}, {"lhs", lhs},       {"rhs", rhs},
          {"slack", slack}, {"strict", strict}, {"pass", pass}};
}

std::string to_string(Theorem1Condition c) {
  switch (c) {
    case Theorem1Condition::none: return "none";
    case Theorem1Condition::i: return "i";
    case Theorem1Condition::ii: return "ii";
  }
  return "none";
}

std::string to_string(Theorem2Condition c) {
  switch (c) {
    case Theorem2Condition::none: return "none";
    case Theorem2Condition::i: return "i";
    case Theorem2Condition::ii: return "ii";
    case Theorem2Condition::iii: return "iii";
  }
  return "none";
}

nlohmann::json RegimeReport::to_json() const {
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& f : assumption_flags) flags.push_back(f.to_json());
  return {{"theta1", theta1},
          {"theta2", theta2},
          {"eps_tilde_1", eps_tilde_1},
          {"eps_tilde_2", eps_tilde_2},
          {"eps_tilde_3", eps_tilde_3},
          {"eps_tilde", eps_tilde},
          {"R", R},
          {"rho", rho},
          {"r_min", r_min},
          {"r_max", r_max},
          {"c_w", c_w},
          {"slack", {{"eps1", slack.eps1}, {"eps2", slack.eps2}, {"eps3", slack.eps3}}},
          {"assumption_flags", flags},
          {"condition_i_pass", condition_i_pass},
          {"condition_ii_pass", condition_ii_pass},
          {"theorem1_condition", to_string(theorem1_condition)},
          {"theorem2_condition", to_string(theorem2_condition)},
          {"q_plus", q_plus},
          {"q_minus", q_minus},
          {"q_gamma", q_gamma}};
}

std::string RegimeReport::table() const {
  std::ostringstream os;
  os << "measured: theta1=" << theta1 << " theta2=" << theta2
     << " eps~1=" << eps_tilde_1 << " eps~2=" << eps_tilde_2
     << " eps~3=" << eps_tilde_3 << " (R=" << R << ")\n";
  os << "scales:   Rmin=" << r_min << " Rmax=" << r_max << " rho=" << rho
     << " C_w=" << c_w << " q+=" << q_plus << " q_gamma=" << q_gamma << "\n";
  os << "-------------------------------------------------------------------\n";
  for (const auto& f : assumption_flags) {
    os << (f.pass ? "[pass] " : "[FAIL] ") << f.name << ": lhs=" << f.lhs
       << " rhs=" << f.rhs << " slack=" << f.slack << "\n";
  }
  os << "-------------------------------------------------------------------\n";
  os << "theorem1_condition = " << to_string(theorem1_condition)
     << ", theorem2_condition = " << to_string(theorem2_condition) << "\n";
  return os.str();
}

nlohmann::json Inequality::to_json() const {
  return {{"name", name}, {"lhs", lhs}, {"rhs", rhs}, {"pass", pass}};
}

nlohmann::json Theorem2Result::to_json() const {
  nlohmann::json d = nlohmann::json::array();
  for (const auto& i : details) d.push_back(i.to_json());
  return {{"condition", to_string(condition)},
          {"lambda", lambda},
          {"D_tilde", D_tilde},
          {"tilde_C", tilde_C},
          {"details", d}};
}

Theorem2Result check_theorem2_regime(const RegimeReport& report, const Dataset& data,
                                     const NetShape& shape, const RegimeOptions& opts) {
  shape.validate();
  Theorem2Result res;
  const double gamma = shape.gamma;
  const double qg = shape.q_gamma();
  const double n = data.n();
  const double mu_sq = data.spec.mu.squaredNorm();
  const double R = report.R;
  const double eps_t = report.eps_tilde;
  const double eps2 = report.eps_tilde_2;
  const double eps3 = report.eps_tilde_3;

  res.lambda = opts.lambda > 0.0 ? opts.lambda : qg / (2.0 * gamma * (1.0 - gamma));
  const double g2 = gamma * gamma;
  res.D_tilde = opts.D_tilde > 0.0
                    ? opts.D_tilde
                    : 3.0 / (8.0 * std::pow(1.0 + gamma, 3) *
                             (1.0 / g2 + 2.0 / (g2 * g2) * eps_t));
  res.tilde_C = (1.0 - eps3) * qg * qg * (qg - gamma) /
                (5.0 * std::pow(1.0 + 1.0 / res.lambda, 2));

  auto add = [&](const std::string& name, double lhs, double rhs, bool pass) {
    res.details.push_back({name, lhs, rhs, pass});
    return pass;
  };

  const bool gate = add("eps~ <= q_gamma/2", eps_t, qg / 2.0, eps_t <= qg / 2.0) &
                    add("eps~3 <= 1/2", eps3, 0.5, eps3 <= 0.5);

  const bool q_degenerate = shape.j_plus == 0 || shape.j_minus() == 0;
  const double sn_eps = std::sqrt(n) * eps_t;
  const double eps2_bound = res.D_tilde * std::sqrt(n) * mu_sq / R;

  const bool i_q = add("(i) q+q- = 0", q_degenerate ? 0.0 : 1.0, 0.0, q_degenerate);
  const bool i_sig = add("(i) n||mu||^2 < gamma R/(1+(1+gamma)eps~3)", n * mu_sq,
                         gamma / (1.0 + (1.0 + gamma) * eps3) * R,
                         n * mu_sq < gamma / (1.0 + (1.0 + gamma) * eps3) * R);
  const bool i_eps = add("(i) sqrt(n) eps~ <= gamma^3/4", sn_eps, g2 * gamma / 4.0,
                         sn_eps <= g2 * gamma / 4.0);
  const bool i_e2 = add("(i,ii) eps~2 <= D~ sqrt(n)||mu||^2/R", eps2, eps2_bound,
                        eps2 <= eps2_bound);

  const double ii_eps_bound = qg * qg / (5.0 * std::pow(1.0 + res.lambda, 2));
  const bool ii_q = !q_degenerate;
  add("(ii) q+q- != 0", q_degenerate ? 0.0 : 1.0, 1.0, ii_q);
  const bool ii_sig = add("(ii) n||mu||^2 <= lambda R", n * mu_sq, res.lambda * R,
                          n * mu_sq <= res.lambda * R);
  const bool ii_eps = add("(ii) sqrt(n) eps~ <= q_gamma^2/(5(1+lambda)^2)", sn_eps,
                          ii_eps_bound, sn_eps <= ii_eps_bound);

  const bool iii_qg = add("(iii) q_gamma > gamma", qg, gamma, qg > gamma);
  const bool iii_sig = add("(iii) n||mu||^2 >= lambda R", n * mu_sq, res.lambda * R,
                           n * mu_sq >= res.lambda * R);
  const double iii_bound = n * mu_sq > 0.0
                               ? res.tilde_C * R / (n * mu_sq)
                               : std::numeric_limits<double>::infinity();
  const bool iii_eps = add("(iii) sqrt(n) eps~ <= C~ R/(n||mu||^2)", sn_eps,
                           iii_bound, sn_eps <= iii_bound);

  if (gate) {
    if (i_q && i_sig && i_eps && i_e2)
      res.condition = Theorem2Condition::i;
    else if (ii_q && ii_sig && ii_eps && i_e2)
      res.condition = Theorem2Condition::ii;
    else if (iii_qg && iii_sig && iii_eps)
      res.condition = Theorem2Condition::iii;
  }
  return res;
}

RegimeReport check_assumptions(const Dataset& data, const TrainConfig& config,
                               const NetworkState& net, const SlackParams& slack,
                               const RegimeOptions& opts) {
  slack.validate();
  RegimeReport rep;
  const int n = data.n();
  const double gamma = net.gamma;
  const double alpha = config.alpha;

  const auto theta = measure_event_E(data);
  rep.theta1 = theta.theta1;
  rep.theta2 = theta.theta2;

  const Eigen::VectorXd znorms = data.Z.rowwise().norm();
  rep.r_min = znorms.minCoeff();
  rep.r_max = znorms.maxCoeff();
  const double mu_sq = data.spec.mu.squaredNorm();
  const double mu_norm = std::sqrt(mu_sq);
  const double rmax_sq = rep.r_max * rep.r_max;
  const double rmin_sq = rep.r_min * rep.r_min;

  const double sigma = net.init_magnitude();
  rep.rho = sigma * std::sqrt(net.m() * (1.0 + rep.theta2) * (mu_sq + rmax_sq));
  rep.c_w = c_w_bound(gamma, rep.r_max, rep.r_min);
  rep.slack = slack;

  const NetShape shape = net.shape();
  rep.q_plus = shape.q_plus();
  rep.q_minus = shape.q_minus();
  rep.q_gamma = shape.q_gamma();

  rep.R = opts.R > 0.0 ? opts.R
                       : (opts.R_from_data ? znorms.squaredNorm() / n
                                           : data.spec.sigma_spec.trace(data.p()));
  const auto eps = measure_tilde_events(data, rep.R);
  rep.eps_tilde_1 = eps.eps1;
  rep.eps_tilde_2 = eps.eps2;
  rep.eps_tilde_3 = eps.eps3;
  rep.eps_tilde = std::max(eps.eps1, std::sqrt(static_cast<double>(n)) * eps.eps2);

  const double cross = 2.0 * rep.theta2 * mu_norm * rep.r_max + rep.theta1 * rmax_sq;
  const double exp_rho = std::exp(rep.rho);

  auto& flags = rep.assumption_flags;
  flags.push_back(make_flag("A1 positive correlation: ||mu||^2 >= 2 th2 ||mu|| Rmax + th1 Rmax^2",
                            mu_sq, cross, true, false));
  flags.push_back(make_flag(
      "A2 small initialization: alpha > rho e^rho / (gamma (1-th2)(||mu||^2+Rmin^2))",
      alpha,
      rep.rho * exp_rho / (gamma * (1.0 - rep.theta2) * (mu_sq + rmin_sq)), true,
      true));
  flags.push_back(make_flag("A3 small step size: alpha (n||mu||^2 + Rmax^2) < 1",
                            alpha * (n * mu_sq + rmax_sq), 1.0, false, true));
  flags.push_back(make_flag(
      "A4 near orthogonality: 2 th2 ||mu|| Rmax + th1 Rmax^2 <= eps1 gamma (1-th2) Rmin^2 / (n e^{2 rho})",
      cross,
      slack.eps1 * gamma * (1.0 - rep.theta2) * rmin_sq /
          (n * std::exp(2.0 * rep.rho)),
      false, false));
  flags.push_back(make_flag(
      "A5 small initialization: alpha >= rho e^rho / (eps2 gamma (1-th2) Rmin^2)",
      alpha, rep.rho * exp_rho / (slack.eps2 * gamma * (1.0 - rep.theta2) * rmin_sq),
      true, false));
  flags.push_back(make_flag("A6 weak signal: n||mu||^2 <= eps3 Rmin^2", n * mu_sq,
                            slack.eps3 * rmin_sq, false, false));
  flags.push_back(make_flag("A7 small step size: 6 alpha Rmax^2 e^rho < 1",
                            6.0 * alpha * rmax_sq * exp_rho, 1.0, false, true));
  flags.push_back(make_flag("theta2 < 1", rep.theta2, 1.0, false, true));
  flags.push_back(make_flag("eps1 + eps2 + eps3 < 1",
                            slack.eps1 + slack.eps2 + slack.eps3, 1.0, false, true));
  flags.push_back(make_flag("C_w eps1 <= 1/2", rep.c_w * slack.eps1, 0.5, false, false));
  flags.push_back(make_flag("C_w eps3 <= 1/2", rep.c_w * slack.eps3, 0.5, false, false));
  flags.push_back(make_flag("theta2 <= 1/2", rep.theta2, 0.5, false, false));

  auto pass = [&](int idx) { return flags[static_cast<std::size_t>(idx)].pass; };
  rep.condition_i_pass = pass(0) && pass(1) && pass(2) && pass(7);
  rep.condition_ii_pass = pass(3) && pass(4) && pass(5) && pass(6) && pass(8) &&
                          pass(9) && pass(10) && pass(11);
  // Both sets can pass only when mu is (near) zero, where A1 holds through the
  // theta convention; condition (ii) is the meaningful certificate there.
  rep.theorem1_condition = rep.condition_ii_pass
                               ? Theorem1Condition::ii
                               : (rep.condition_i_pass ? Theorem1Condition::i
                                                       : Theorem1Condition::none);

  rep.theorem2_condition = check_theorem2_regime(rep, data, shape, opts).condition;
  return rep;
}

ThetaPair tilde_to_E_bridge(double eps1, double eps2, double R, double norm_mu) {
  if (eps1 > 0.5)
    throw std::domain_error("tilde_to_E_bridge: eps1 > 1/2, lemma hypothesis violated");
  ThetaPair t;
  t.theta1 = eps1 / 2.0;
  t.theta2 = norm_mu > 0.0 ? eps2 * std::sqrt(R) / (2.0 * norm_mu) : 0.0;
  return t;
}

CompliantTrain compliant_alpha_sigma(const RegimeReport& report, const Dataset& data,
                                     Theorem1Condition cond, const NetShape& shape) {
  const double mu_sq = data.spec.mu.squaredNorm();
  const double rmax_sq = report.r_max * report.r_max;
  const double rmin_sq = report.r_min * report.r_min;
  const double th2 = report.theta2;
  const int n = data.n();
  const double gamma = shape.gamma;

  CompliantTrain out{0.0, 0.0};
  double rho = 0.05;
  for (int iter = 0; iter < 64; ++iter, rho *= 0.5) {
    const double sigma = rho / std::sqrt(shape.m * (1.0 + th2) * (mu_sq + rmax_sq));
    double alpha;
    if (cond == Theorem1Condition::i) {
      alpha = 0.8 / (n * mu_sq + rmax_sq);  // A3 with margin
      const double lower = rho * std::exp(rho) / (gamma * (1.0 - th2) * (mu_sq + rmin_sq));
      if (alpha > lower) return {alpha, sigma};
    } else {
      alpha = 0.8 / (6.0 * rmax_sq * std::exp(rho));  // A7 with margin
      const double lower =
          rho * std::exp(rho) / (report.slack.eps2 * gamma * (1.0 - th2) * rmin_sq);
      if (alpha >= lower) return {alpha, sigma};
    }
    out = {alpha, sigma};
  }
  return out;
}

}  // namespace leakylab
