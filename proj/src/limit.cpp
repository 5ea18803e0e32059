#include "leakylab/limit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "leakylab/csvio.hpp"
#include "leakylab/regime.hpp"
#include "leakylab/rng.hpp"

namespace leakylab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

Eigen::VectorXd b_plus_of(const Eigen::VectorXd& y, double gamma) {
  Eigen::VectorXd b(y.size());
  for (long i = 0; i < y.size(); ++i) b[i] = y[i] > 0 ? 1.0 : gamma;
  return b;
}

Eigen::VectorXd b_minus_of(const Eigen::VectorXd& y, double gamma) {
  Eigen::VectorXd b(y.size());
  for (long i = 0; i < y.size(); ++i) b[i] = y[i] > 0 ? gamma : 1.0;
  return b;
}

}  // namespace

BlockGram build_block_gram(const Dataset& data, double gamma, const NetShape& shape) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ContractViolation("build_block_gram: gamma must be in (0, 1]");
  NetShape s = shape;
  s.gamma = gamma;
  s.validate();

  BlockGram bg;
  bg.shape = s;
  const double qp = s.q_plus(), qm = s.q_minus();
  bg.b_plus_diag = b_plus_of(data.y, gamma);
  bg.b_minus_diag = b_minus_of(data.y, gamma);
  bg.b_diag.resize(data.n());
  for (int i = 0; i < data.n(); ++i)
    bg.b_diag[i] = data.y[i] > 0 ? std::sqrt(qp + gamma * gamma * qm)
                                 : std::sqrt(qm + gamma * gamma * qp);

  const Eigen::MatrixXd XXt = data.X * data.X.transpose();
  bg.gram.resize(data.n(), data.n());
  for (int i = 0; i < data.n(); ++i)
    for (int k = 0; k < data.n(); ++k)
      bg.gram(i, k) = (qp * bg.b_plus_diag[i] * bg.b_plus_diag[k] +
                       qm * bg.b_minus_diag[i] * bg.b_minus_diag[k]) *
                      XXt(i, k);
  return bg;
}

nlohmann::json LimitDirection::to_json() const {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return {{"w_plus", vec(w_plus)},
          {"w_minus", vec(w_minus)},
          {"w_bar", vec(w_bar)},
          {"sv_certificate", vec(sv_certificate)},
          {"k1", k1},
          {"k2", k2},
          {"d_value", d_value},
          {"method", method == LimitMethod::closed_form_ls ? "closed_form_ls" : "qp_oracle"},
          {"m", shape.m},
          {"j_plus", shape.j_plus},
          {"gamma", shape.gamma},
          {"condition_estimate", condition_estimate}};
}

void LimitDirection::certificate_to_csv(std::ostream& os) const {
  csv::Writer w(os);
  w.row({"i", "certificate"});
  for (long i = 0; i < sv_certificate.size(); ++i)
    w.row({std::to_string(i), csv::format_double(sv_certificate[i])});
}

namespace {

// Shared tail: build (w+, w-, w_bar) from v with w+ = X^T B+ v / sqrt(m),
// w- = -X^T B- v / sqrt(m).
void fill_directions(LimitDirection& ld, const Dataset& data, const BlockGram& bg,
                     const Eigen::VectorXd& v) {
  const auto& s = bg.shape;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(s.m));
  if (s.j_plus > 0)
    ld.w_plus = inv_sqrt_m * data.X.transpose() * (bg.b_plus_diag.asDiagonal() * v);
  else
    ld.w_plus = Eigen::VectorXd::Zero(data.p());
  if (s.j_minus() > 0)
    ld.w_minus = -inv_sqrt_m * data.X.transpose() * (bg.b_minus_diag.asDiagonal() * v);
  else
    ld.w_minus = Eigen::VectorXd::Zero(data.p());
  ld.w_bar = s.j_plus * inv_sqrt_m * ld.w_plus - s.j_minus() * inv_sqrt_m * ld.w_minus;
}

}  // namespace

LimitDirection min_norm_direction(const Dataset& data, const BlockGram& bg) {
  const int n = data.n();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bg.gram, Eigen::EigenvaluesOnly);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  const double cond = ev_min > 0.0 ? ev_max / ev_min
                                   : std::numeric_limits<double>::infinity();
  if (!(ev_min > 0.0) || cond > 1e14) {
    std::ostringstream msg;
    msg << "singular transformed Gram matrix (condition estimate " << cond << ")";
    throw DegenerateData(msg.str());
  }

  Eigen::LLT<Eigen::MatrixXd> llt(bg.gram);
  if (llt.info() != Eigen::Success)
    throw DegenerateData("Cholesky factorization of the transformed Gram failed");
  const Eigen::VectorXd c = llt.solve(data.y);

  LimitDirection ld;
  ld.shape = bg.shape;
  ld.method = LimitMethod::closed_form_ls;
  ld.condition_estimate = cond;
  ld.gram_solution = c;
  ld.sv_certificate.resize(n);
  for (int i = 0; i < n; ++i) ld.sv_certificate[i] = data.y[i] * c[i];
  fill_directions(ld, data, bg, c);

  const double qp = bg.shape.q_plus(), qm = bg.shape.q_minus();
  Eigen::VectorXd qb(n);
  for (int i = 0; i < n; ++i)
    qb[i] = qp * bg.b_plus_diag[i] + qm * bg.b_minus_diag[i];
  const double k1_root = c.dot(qb.asDiagonal() * data.y);
  ld.k1 = k1_root * k1_root;
  ld.k2 = (qb.asDiagonal() * c).squaredNorm();
  if (bg.shape.j_plus > 0 && bg.shape.j_minus() > 0) {
    const double R = data.spec.sigma_spec.trace(data.p());
    ld.d_value = a_matrix_inverse_action(data, R, bg.shape.gamma, bg.shape).d;
  } else {
    ld.d_value = kNan;
  }
  return ld;
}

LimitDirection qp_oracle(const Dataset& data, double gamma, const NetShape& shape,
                         const QpOptions& opts) {
  NetShape s = shape;
  s.gamma = gamma;
  s.validate();
  const int n = data.n();
  const double qp = s.q_plus(), qm = s.q_minus();

  // Dual of: min ||w||^2 s.t. <y_i x~_i, w> >= 1. Q_ik = y_i y_k <x~_i, x~_k>,
  // assembled directly from the block structure.
  const Eigen::VectorXd bp = b_plus_of(data.y, gamma);
  const Eigen::VectorXd bm = b_minus_of(data.y, gamma);
  const Eigen::MatrixXd XXt = data.X * data.X.transpose();
  Eigen::MatrixXd Q(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      Q(i, k) = data.y[i] * data.y[k] *
                (qp * bp[i] * bp[k] + qm * bm[i] * bm[k]) * XXt(i, k);

  for (int i = 0; i < n; ++i)
    if (!(Q(i, i) > 0.0)) throw DegenerateData("qp_oracle: zero transformed sample");

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
  if (opts.random_start) {
    auto rng = CounterRng::stream(opts.start_seed, stream_purpose::qp_start);
    for (int i = 0; i < n; ++i) lambda[i] = rng.next_unit() / Q(i, i);
  }
  Eigen::VectorXd qdot = Q * lambda;

  double resid = std::numeric_limits<double>::infinity();
  for (long sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (int i = 0; i < n; ++i) {
      const double g = 1.0 - qdot[i];
      const double next = std::max(0.0, lambda[i] + g / Q(i, i));
      const double delta = next - lambda[i];
      if (delta != 0.0) {
        lambda[i] = next;
        qdot.noalias() += delta * Q.col(i);
      }
    }
    resid = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = 1.0 - qdot[i];
      resid = std::max(resid, lambda[i] > 0.0 ? std::abs(g) : std::max(0.0, g));
    }
    if (resid <= opts.kkt_tol) break;
    if (lambda.maxCoeff() > 1e14)
      throw SeparabilityError("qp_oracle: dual diverges, data not separable in the transformed space");
  }
  if (resid > opts.kkt_tol) {
    std::ostringstream msg;
    msg << "qp_oracle: no convergence after " << opts.max_sweeps
        << " sweeps (KKT residual " << resid << ")";
    throw SolverFailure(msg.str());
  }

  LimitDirection ld;
  ld.shape = s;
  ld.method = LimitMethod::qp_oracle;
  ld.sv_certificate = lambda;
  ld.k1 = kNan;
  ld.k2 = kNan;
  ld.d_value = kNan;

  BlockGram bg;
  bg.shape = s;
  bg.b_plus_diag = bp;
  bg.b_minus_diag = bm;
  const Eigen::VectorXd v = lambda.cwiseProduct(data.y);
  fill_directions(ld, data, bg, v);
  return ld;
}

AInverseAction a_inverse_action_idealized(const Eigen::VectorXd& y, double norm_mu_sq,
                                          double R, double gamma, const NetShape& shape) {
  const int n = static_cast<int>(y.size());
  int n_plus = 0;
  for (int i = 0; i < n; ++i)
    if (y[i] > 0) ++n_plus;
  const int n_minus = n - n_plus;
  const double g2 = gamma * gamma;
  const double qp = shape.q_plus(), qm = shape.q_minus();

  AInverseAction out;
  out.row.resize(n);

  if (shape.j_minus() == 0 || shape.j_plus == 0) {
    // B = B+ (or B-); A = ||mu||^2 y y^T + R I either way.
    const double shrink = n * norm_mu_sq / (n * norm_mu_sq + R);
    const bool plus_block = shape.j_minus() == 0;
    const double mean_term =
        plus_block ? (n_plus + n_minus / gamma) / static_cast<double>(n)
                   : (n_plus / gamma + n_minus) / static_cast<double>(n);
    const double cp = plus_block ? 1.0 : 1.0 / gamma;
    const double cm = plus_block ? 1.0 / gamma : 1.0;
    for (int i = 0; i < n; ++i)
      out.row[i] = y[i] > 0 ? (cp - shrink * mean_term) / R
                            : -(cm - shrink * mean_term) / R;
    out.d = kNan;
    out.d_scaled = kNan;
    return out;
  }

  const double ap = qp + g2 * qm;  // q+ + gamma^2 q-
  const double am = qm + g2 * qp;  // q- + gamma^2 q+
  const double D = std::pow(1.0 - g2, 2) * qp * qm * n_plus * n_minus * norm_mu_sq * norm_mu_sq +
                   ap * am * (n * norm_mu_sq + R) * R;
  const double coef_plus = std::sqrt(ap) * ((am - gamma) * n_minus * norm_mu_sq + am * R) / D;
  const double coef_minus = std::sqrt(am) * ((ap - gamma) * n_plus * norm_mu_sq + ap * R) / D;
  for (int i = 0; i < n; ++i) out.row[i] = y[i] > 0 ? coef_plus : -coef_minus;
  out.d_scaled = D;
  out.d = D / (ap * am);
  return out;
}

AInverseAction a_matrix_inverse_action(const Dataset& data, double R, double gamma,
                                       const NetShape& shape) {
  return a_inverse_action_idealized(data.y, data.spec.mu.squaredNorm(), R, gamma, shape);
}

DBounds d_scaled_bounds(double norm_mu_sq, double R, double gamma, const NetShape& shape,
                        int n, double eps3) {
  const double g2 = gamma * gamma;
  const double qq = shape.q_plus() * shape.q_minus();
  const double s = n * norm_mu_sq + R;
  DBounds b;
  b.upper = (g2 + 1.25 * std::pow(1.0 - g2, 2) * qq) * s * s;
  b.lower = (1.0 - eps3 * eps3) * std::pow(1.0 - g2, 2) * qq / 8.0 * s * s + g2 * R * R;
  return b;
}

nlohmann::json DirectionDiagnostics::to_json() const {
  return {{"k1", k1},
          {"k2", k2},
          {"d_value", d_value},
          {"w_bar_norm_sq", w_bar_norm_sq},
          {"w_bar_dot_mu", w_bar_dot_mu},
          {"eps_tilde", eps_tilde},
          {"eps_tilde_2", eps_tilde_2},
          {"bracket1_lhs", bracket1_lhs},
          {"bracket1_rhs", bracket1_rhs},
          {"bracket1_pass", bracket1_pass},
          {"bracket2_lhs", bracket2_lhs},
          {"bracket2_rhs", bracket2_rhs},
          {"bracket2_pass", bracket2_pass}};
}

DirectionDiagnostics direction_diagnostics(const LimitDirection& ld, const Dataset& data,
                                           double R) {
  if (ld.method != LimitMethod::closed_form_ls || ld.gram_solution.size() == 0)
    throw ContractViolation("direction_diagnostics needs the closed-form direction");
  DirectionDiagnostics d;
  d.k1 = ld.k1;
  d.k2 = ld.k2;
  d.d_value = ld.d_value;
  d.w_bar_norm_sq = ld.w_bar.squaredNorm();
  d.w_bar_dot_mu = ld.w_bar.dot(data.spec.mu);

  const auto eps = measure_tilde_events(data, R);
  const int n = data.n();
  d.eps_tilde = std::max(eps.eps1, std::sqrt(static_cast<double>(n)) * eps.eps2);
  d.eps_tilde_2 = eps.eps2;

  const double mu_sq = data.spec.mu.squaredNorm();
  d.bracket1_lhs = std::abs(d.w_bar_norm_sq - (mu_sq * d.k1 + R * d.k2));
  d.bracket1_rhs = d.eps_tilde * R * d.k2;
  d.bracket1_pass = d.bracket1_lhs <= d.bracket1_rhs * (1.0 + 1e-12) + 1e-12;

  const double qg = ld.shape.q_gamma();
  const auto a_act = a_matrix_inverse_action(data, R, ld.shape.gamma, ld.shape);
  d.bracket2_lhs = std::abs(d.w_bar_dot_mu - mu_sq * std::sqrt(d.k1));
  d.bracket2_rhs = std::pow(qg, -0.5) / 3.0 * eps.eps2 * a_act.row.norm() * R +
                   2.0 * std::pow(qg, -2.0) / 3.0 * d.eps_tilde *
                       std::sqrt(static_cast<double>(n)) * eps.eps2;
  d.bracket2_pass = d.bracket2_lhs <= d.bracket2_rhs * (1.0 + 1e-12) + 1e-12;
  return d;
}

NetworkState limit_network(const LimitDirection& ld, const NetShape& shape) {
  NetworkState net;
  net.gamma = shape.gamma;
  net.signs.resize(shape.m);
  net.W.resize(ld.w_plus.size(), shape.m);
  for (int j = 0; j < shape.m; ++j) {
    const bool plus = j < shape.j_plus;
    net.signs[j] = plus ? 1 : -1;
    net.W.col(j) = plus ? ld.w_plus : ld.w_minus;
  }
  return net;
}

bool decision_boundary_check(const LimitDirection& ld, const NetShape& shape,
                             const Eigen::MatrixXd& probes) {
  if (probes.rows() == 0) throw ContractViolation("decision_boundary_check: no probes");
  const NetworkState net = limit_network(ld, shape);
  for (long r = 0; r < probes.rows(); ++r) {
    const Eigen::VectorXd x = probes.row(r);
    if (sign_of(forward(net, x)) != sign_of(x.dot(ld.w_bar))) return false;
  }
  return true;
}

nlohmann::json CertificateProbe::to_json() const {
  return {{"certificate",
           std::vector<double>(certificate.data(), certificate.data() + certificate.size())},
          {"coef_plus", coef_plus},
          {"coef_minus", coef_minus},
          {"any_negative", any_negative}};
}

CertificateProbe equivalence_failure_probe(double gamma, const NetShape& shape,
                                           double mu_norm_sq, double R, int n,
                                           int n_plus) {
  NetShape s = shape;
  s.gamma = gamma;
  s.validate();
  if (s.j_plus == 0 || s.j_minus() == 0)
    throw ContractViolation("equivalence_failure_probe requires q+ q- != 0");
  if (n_plus < 0 || n_plus > n) throw ContractViolation("n_plus out of range");

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = i < n_plus ? 1.0 : -1.0;
  const auto act = a_inverse_action_idealized(y, mu_norm_sq, R, gamma, s);

  const double g2 = gamma * gamma;
  const double ap = s.q_plus() + g2 * s.q_minus();
  const double am = s.q_minus() + g2 * s.q_plus();

  CertificateProbe probe;
  probe.certificate.resize(n);
  for (int i = 0; i < n; ++i) {
    const double b_ii = y[i] > 0 ? std::sqrt(ap) : std::sqrt(am);
    probe.certificate[i] = act.row[i] * y[i] / b_ii;
  }
  probe.coef_plus = (am - gamma) * (n - n_plus) * mu_norm_sq + am * R;
  probe.coef_minus = (ap - gamma) * n_plus * mu_norm_sq + ap * R;
  probe.any_negative = (probe.certificate.array() < 0.0).any();
  return probe;
}

}  // namespace leakylab
