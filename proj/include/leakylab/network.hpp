#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "leakylab/mixture.hpp"

namespace leakylab {

// phi(u) = max(u, gamma*u)
inline double leaky(double u, double gamma) { return u >= 0.0 ? u : gamma * u; }

// zeta(u): slope indicator, with the subgradient convention zeta(0) = 1.
inline double leaky_slope(double u, double gamma) { return u >= 0.0 ? 1.0 : gamma; }

// Width, sign split and leak of a network; q_plus is kept as the exact
// integer pair (j_plus, m) so regime predicates like q_gamma > gamma never
// wobble in floating point.
struct NetShape {
  int m = 1;
  int j_plus = 1;
  double gamma = 0.5;

  void validate() const {
    if (m < 1) throw ContractViolation("m must be >= 1");
    if (j_plus < 0 || j_plus > m) throw ContractViolation("j_plus must be in [0, m]");
  }
  int j_minus() const { return m - j_plus; }
  double q_plus() const { return static_cast<double>(j_plus) / m; }
  double q_minus() const { return static_cast<double>(j_minus()) / m; }
  double q_gamma() const {
    const double a = q_plus() + gamma * gamma * q_minus();
    const double b = q_minus() + gamma * gamma * q_plus();
    return a < b ? a : b;
  }
};

struct NetworkState {
  Eigen::MatrixXd W;      // p x m, column j is w_j
  Eigen::VectorXi signs;  // +-1; a_j = signs[j] / sqrt(m)
  double gamma = 0.5;
  long step = 0;

  int p() const { return static_cast<int>(W.rows()); }
  int m() const { return static_cast<int>(W.cols()); }
  int j_plus() const;
  NetShape shape() const { return {m(), j_plus(), gamma}; }
  double a(int j) const { return signs[j] / std::sqrt(static_cast<double>(m())); }
  // sigma = max_j ||w_j||
  double init_magnitude() const { return W.colwise().norm().maxCoeff(); }

  void validate() const;
};

enum class InitScheme { uniform_sphere_scaled, fixed_matrix };

// uniform_sphere_scaled draws w_j(0) uniformly on the sphere of radius
// sigma*u_j with u_j ~ U[0.5, 1], so max_j ||w_j(0)|| <= sigma.
NetworkState init_network(int p, const NetShape& shape, InitScheme scheme,
                          double sigma, std::uint64_t seed,
                          const Eigen::MatrixXd* fixed = nullptr);

double forward(const NetworkState& state, const Eigen::VectorXd& x);

// y_i * f(x_i; W) for all samples
Eigen::VectorXd margins(const NetworkState& state, const Dataset& data);

struct ActivationReport {
  bool all_activated = false;
  std::vector<std::pair<int, int>> violators;  // (i, j) with a_j y_i <x_i, w_j> <= 0
};

ActivationReport activation_report(const NetworkState& state, const Dataset& data);

}  // namespace leakylab
