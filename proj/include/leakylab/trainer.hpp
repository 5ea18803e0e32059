#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakylab/network.hpp"

namespace leakylab {

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double alpha = 0.0;
  double sigma_init = 0.0;
  long T = 0;
  InitScheme init_scheme = InitScheme::uniform_sphere_scaled;

  void validate() const {
    if (!(alpha > 0.0)) throw ContractViolation("alpha must be > 0");
    if (sigma_init < 0.0) throw ContractViolation("sigma_init must be >= 0");
    if (T < 0) throw ContractViolation("T must be >= 0");
  }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  long t;
  double loss;
  bool all_activated;
  double min_margin;
  double loss_ratio_max;
  double cos_plus;   // NaN when no reference direction
  double cos_minus;  // NaN when no reference direction
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::string abort_reason;
  long abort_step = -1;

  void to_csv(std::ostream& os) const;
  nlohmann::json summary() const;
};

// Block reference for per-step direction cosines: mean w_j over J+ against
// w_plus and mean over J- against w_minus.
struct ReferenceDirection {
  Eigen::VectorXd w_plus;
  Eigen::VectorXd w_minus;
};

// sum_i exp(-y_i f(x_i; W)); switches to a log-sum-exp evaluation when any
// margin is below -700.
double empirical_loss(const NetworkState& state, const Dataset& data);

// Full-batch gradient of the empirical loss, with zeta(0) = 1.
Eigen::MatrixXd loss_gradient(const NetworkState& state, const Dataset& data);

NetworkState gd_step(const NetworkState& state, const Dataset& data, double alpha);

struct TrainResult {
  TrainTrace trace;
  NetworkState final_state;
};

TrainResult train(const Dataset& data, const TrainConfig& config, NetworkState state0,
                  const ReferenceDirection* reference = nullptr);

// Upper bound for sigma_max^2(X_tilde) valid under event E(theta1, theta2),
// independent of the width:
//   (1+theta2){||mu||^2 + Rmax^2}
//     + (n-1)[||mu||^2 + 2 theta2 ||mu|| Rmax + theta1 Rmax^2]
double sigma_max_tilde_bound(const Dataset& data, double theta1, double theta2);

}  // namespace leakylab
