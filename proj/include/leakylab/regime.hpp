#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "leakylab/network.hpp"
#include "leakylab/trainer.hpp"

namespace leakylab {

struct ThetaPair {
  double theta1;
  double theta2;
};

// Minimal theta making event E hold on the realized noise:
//   theta1 = max_{i != k} |<z_i/||z_i||, z_k/||z_k||>|
//   theta2 = max_i |<z_i/||z_i||, mu/||mu||>|
// Conventions: theta1 = theta2 = 0 when mu = 0 or Rmax(z) = 0; a zero noise
// row contributes 0 to both maxima.
ThetaPair measure_event_E(const Dataset& data);

struct TildeEps {
  double eps1;  // 3 ||ZZ^T - R I|| / R
  double eps2;  // 3 ||Z mu|| / R
  double eps3;  // |n_+ - n/2| / (n/2)
};

TildeEps measure_tilde_events(const Dataset& data, double R);

// C_w = 24 e gamma^{-2} Rmax^2 / Rmin^2
double c_w_bound(double gamma, double rmax, double rmin);

// Chosen slack parameters for Theorem 1 condition (ii). Defaults are the
// only values the paper ever exhibits: eps1 = eps3 = 5 gamma^2 / (368 e),
// eps2 = 1/2.
struct SlackParams {
  double eps1;
  double eps2;
  double eps3;

  static SlackParams paper_defaults(double gamma);
  void validate() const;
};

struct AssumptionFlag {
  std::string name;
  double lhs;
  double rhs;
  double slack;  // signed margin of the defining inequality
  bool strict;   // strict inequalities fail at slack == 0
  bool pass;

  nlohmann::json to_json() const;
};

enum class Theorem1Condition { none, i, ii };
enum class Theorem2Condition { none, i, ii, iii };

std::string to_string(Theorem1Condition c);
std::string to_string(Theorem2Condition c);

struct RegimeReport {
  double theta1 = 0.0, theta2 = 0.0;
  double eps_tilde_1 = 0.0, eps_tilde_2 = 0.0, eps_tilde_3 = 0.0;
  double R = 0.0;
  double rho = 0.0;
  double r_min = 0.0, r_max = 0.0;
  double c_w = 0.0;
  SlackParams slack{0, 0, 0};
  std::vector<AssumptionFlag> assumption_flags;
  bool condition_i_pass = false;
  bool condition_ii_pass = false;
  Theorem1Condition theorem1_condition = Theorem1Condition::none;
  Theorem2Condition theorem2_condition = Theorem2Condition::none;
  double q_plus = 0.0, q_minus = 0.0, q_gamma = 0.0;
  double eps_tilde = 0.0;  // max{eps1, sqrt(n) eps2}

  nlohmann::json to_json() const;
  std::string table() const;
};

struct RegimeOptions {
  // R for the tilde events; <= 0 means tr(Sigma), the Appendix D choice.
  double R = -1.0;
  // use mean ||z_i||^2 instead of tr(Sigma) as R
  bool R_from_data = false;
  // Theorem 2 knobs; defaults derived below when < 0.
  double lambda = -1.0;   // default q_gamma / (2 gamma (1 - gamma))
  double D_tilde = -1.0;  // default 3 / (8 (1+gamma)^3 (gamma^-2 + 2 gamma^-4 eps~))
};

RegimeReport check_assumptions(const Dataset& data, const TrainConfig& config,
                               const NetworkState& net, const SlackParams& slack,
                               const RegimeOptions& opts = {});

struct Inequality {
  std::string name;
  double lhs;
  double rhs;
  bool pass;

  nlohmann::json to_json() const;
};

struct Theorem2Result {
  Theorem2Condition condition = Theorem2Condition::none;
  double lambda = 0.0;
  double D_tilde = 0.0;
  double tilde_C = 0.0;
  std::vector<Inequality> details;

  nlohmann::json to_json() const;
};

Theorem2Result check_theorem2_regime(const RegimeReport& report, const Dataset& data,
                                     const NetShape& shape,
                                     const RegimeOptions& opts = {});

// theta1 = eps1/2, theta2 = eps2 sqrt(R) / (2 ||mu||); requires eps1 <= 1/2.
ThetaPair tilde_to_E_bridge(double eps1, double eps2, double R, double norm_mu);

// A step size / initialization pair satisfying the assumptions of the given
// Theorem 1 condition on this report, when one exists.
struct CompliantTrain {
  double alpha;
  double sigma;
};
CompliantTrain compliant_alpha_sigma(const RegimeReport& report, const Dataset& data,
                                     Theorem1Condition cond, const NetShape& shape);

}  // namespace leakylab
