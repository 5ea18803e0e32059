#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "leakylab/network.hpp"

namespace leakylab {

struct DegenerateData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SeparabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gram matrix of the transformed samples, assembled without materializing
// the n x mp matrix:
//   X~ X~^T = q+ B+ X X^T B+ + q- B- X X^T B-
// with (B+)_ii = zeta(y_i), (B-)_ii = zeta(-y_i) and B^2 = q+ B+^2 + q- B-^2.
struct BlockGram {
  Eigen::MatrixXd gram;
  Eigen::VectorXd b_plus_diag;
  Eigen::VectorXd b_minus_diag;
  Eigen::VectorXd b_diag;
  NetShape shape;
};

// gamma may be 1 here (linear-network specialization); the trainer's state
// keeps gamma strictly inside (0, 1).
BlockGram build_block_gram(const Dataset& data, double gamma, const NetShape& shape);

enum class LimitMethod { closed_form_ls, qp_oracle };

struct LimitDirection {
  Eigen::VectorXd w_plus;
  Eigen::VectorXd w_minus;
  Eigen::VectorXd w_bar;  // (|J+|/sqrt(m)) w+ - (|J-|/sqrt(m)) w-
  // y^T (X~X~^T)^{-1} y_i e_i for the closed form; dual multipliers for the QP
  Eigen::VectorXd sv_certificate;
  // c = (X~X~^T)^{-1} y (closed form only; empty for the QP oracle)
  Eigen::VectorXd gram_solution;
  double k1 = 0.0;       // {y^T (X~X~^T)^{-1} (q+ B+ + q- B-) y}^2
  double k2 = 0.0;       // ||(q+ B+ + q- B-)(X~X~^T)^{-1} y||^2
  double d_value = 0.0;  // d at R = tr(Sigma); NaN when q+ q- = 0 or for the QP
  LimitMethod method = LimitMethod::closed_form_ls;
  NetShape shape;
  double condition_estimate = 0.0;

  nlohmann::json to_json() const;
  void certificate_to_csv(std::ostream& os) const;
};

LimitDirection min_norm_direction(const Dataset& data, const BlockGram& bg);

struct QpOptions {
  double kkt_tol = 1e-9;
  long max_sweeps = 1000000;
  bool random_start = false;
  std::uint64_t start_seed = 0;
};

LimitDirection qp_oracle(const Dataset& data, double gamma, const NetShape& shape,
                         const QpOptions& opts = {});

// (B^{-1} y)^T A^{-1} and d from the closed forms, where
//   A = ||mu||^2 B^{-1}(q+ B+ y y^T B+ + q- B- y y^T B-) B^{-1} + R I.
struct AInverseAction {
  Eigen::VectorXd row;   // length n
  double d;
  double d_scaled;       // d (q+ + g^2 q-)(q- + g^2 q+)
};

AInverseAction a_matrix_inverse_action(const Dataset& data, double R, double gamma,
                                       const NetShape& shape);
// Same closed forms on idealized inputs (no dataset needed).
AInverseAction a_inverse_action_idealized(const Eigen::VectorXd& y, double norm_mu_sq,
                                          double R, double gamma, const NetShape& shape);

// Bounds on d (q+ + g^2 q-)(q- + g^2 q+):
//   upper:  {g^2 + 5(1-g^2)^2 q+ q- / 4} (n||mu||^2 + R)^2
//   lower:  (1-e3^2)(1-g^2)^2 q+ q- (n||mu||^2 + R)^2 / 8 + g^2 R^2
struct DBounds {
  double lower;
  double upper;
};
DBounds d_scaled_bounds(double norm_mu_sq, double R, double gamma, const NetShape& shape,
                        int n, double eps3);

struct DirectionDiagnostics {
  double k1;
  double k2;
  double d_value;
  double w_bar_norm_sq;
  double w_bar_dot_mu;
  double eps_tilde;
  double eps_tilde_2;
  // | ||w~||^2 - (||mu||^2 K1 + R K2) | <= eps~ R K2
  double bracket1_lhs, bracket1_rhs;
  bool bracket1_pass;
  // | <w~, mu> - ||mu||^2 sqrt(K1) | <= q_g^{-1/2}/3 eps~2 ||(B^-1 y)^T A^-1|| R
  //                                     + 2 q_g^{-2}/3 eps~ sqrt(n) eps~2
  double bracket2_lhs, bracket2_rhs;
  bool bracket2_pass;

  nlohmann::json to_json() const;
};

DirectionDiagnostics direction_diagnostics(const LimitDirection& ld, const Dataset& data,
                                           double R);

// sign(f(x; W_hat)) == sign(<x, w_bar>) for every probe; sign(0) := 0.
bool decision_boundary_check(const LimitDirection& ld, const NetShape& shape,
                             const Eigen::MatrixXd& probes);

// Exact certificate on idealized data with X X^T = ||mu||^2 y y^T + R I,
// flagging strong-signal instances where max-margin != min-norm LS.
struct CertificateProbe {
  Eigen::VectorXd certificate;
  double coef_plus;   // sign driver (q- + g^2 q+ - gamma) n- ||mu||^2 + (q- + g^2 q+) R
  double coef_minus;  // sign driver (q+ + g^2 q- - gamma) n+ ||mu||^2 + (q+ + g^2 q-) R
  bool any_negative;

  nlohmann::json to_json() const;
};

CertificateProbe equivalence_failure_probe(double gamma, const NetShape& shape,
                                           double mu_norm_sq, double R, int n,
                                           int n_plus);

// Network whose J+ columns equal w_plus and J- columns equal w_minus.
NetworkState limit_network(const LimitDirection& ld, const NetShape& shape);

}  // namespace leakylab
