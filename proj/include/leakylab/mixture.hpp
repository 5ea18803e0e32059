#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace leakylab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Covariance description with closed-form functionals. Spiked form is
// base*I + magnitude*u*u^T with unit u, so sweeps can move tr, op and
// Frobenius norms independently.
struct SigmaSpec {
  enum class Kind { identity, diagonal, spiked };

  Kind kind = Kind::identity;
  Eigen::VectorXd values;     // diagonal entries
  double base = 1.0;          // spiked
  double magnitude = 0.0;     // spiked, >= 0
  Eigen::VectorXd direction;  // spiked, stored normalized

  static SigmaSpec identity();
  static SigmaSpec diagonal(Eigen::VectorXd diag);
  static SigmaSpec spiked(double base, Eigen::VectorXd direction, double magnitude);

  void validate(int p) const;

  double trace(int p) const;
  double fro(int p) const;
  double op(int p) const;
  double beta_min(int p) const;
  // v^T Sigma v
  double quad_form(const Eigen::VectorXd& v) const;
  // v^T Sigma^{-1} v
  double inv_quad_form(const Eigen::VectorXd& v) const;
  // Sigma^{1/2} v
  Eigen::VectorXd half_apply(const Eigen::VectorXd& v) const;

  nlohmann::json to_json() const;
  static SigmaSpec from_json(const nlohmann::json& j);
};

struct NoiseLaw {
  enum class Kind { gaussian, rademacher_subgauss, poly_tail };

  Kind kind = Kind::gaussian;
  double r = 4.0;        // poly_tail moment order, in (2, 4]
  double base_df = 5.0;  // poly_tail Student-t degrees of freedom, > r

  static NoiseLaw gaussian() { return {}; }
  static NoiseLaw rademacher();
  static NoiseLaw poly_tail(double r, double base_df);

  void validate() const;

  // Sub-Gaussian norm by convention: 1 for gaussian and rademacher,
  // NaN (inapplicable) for poly_tail.
  double psi2() const;
  // Achieved standardized E|xi|^r for poly_tail, NaN otherwise. The paper
  // never pins K numerically; we record the moment of the chosen law.
  double r_moment() const;

  nlohmann::json to_json() const;
  static NoiseLaw from_json(const nlohmann::json& j);
};

struct MixtureSpec {
  int p = 0;
  int n = 0;
  Eigen::VectorXd mu;
  SigmaSpec sigma_spec;
  NoiseLaw noise_law;
  std::uint64_t seed = 0;

  void validate() const;

  nlohmann::json to_json() const;
  static MixtureSpec from_json(const nlohmann::json& j);
};

// Samples (x_i, y_i) with x = y*mu + z. Z is stored as X - y*mu^T so the
// reconstruction identity is bit-exact.
struct Dataset {
  Eigen::MatrixXd X;  // n x p
  Eigen::VectorXd y;  // entries in {-1, +1}
  Eigen::MatrixXd Z;  // n x p
  MixtureSpec spec;

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
  int n_plus() const;
  int n_minus() const { return n() - n_plus(); }

  void to_csv(std::ostream& os) const;
};

Dataset generate(const MixtureSpec& spec);

struct DataFunctionals {
  double norm_mu_sq;
  double trace_sigma;
  double fro_sigma;
  double op_sigma;
  double sigma_half_mu_norm;
};

DataFunctionals data_functionals(const MixtureSpec& spec);

}  // namespace leakylab
