#include "leakylab/network.hpp"

#include "leakylab/rng.hpp"

namespace leakylab {

int NetworkState::j_plus() const {
  int c = 0;
  for (long j = 0; j < signs.size(); ++j)
    if (signs[j] > 0) ++c;
  return c;
}

void NetworkState::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ContractViolation("gamma must be in (0, 1)");
  if (signs.size() != W.cols()) throw ContractViolation("signs size != m");
  for (long j = 0; j < signs.size(); ++j)
    if (signs[j] != 1 && signs[j] != -1)
      throw ContractViolation("signs entries must be +-1");
}

NetworkState init_network(int p, const NetShape& shape, InitScheme scheme,
                          double sigma, std::uint64_t seed,
                          const Eigen::MatrixXd* fixed) {
  shape.validate();
  if (sigma < 0.0) throw ContractViolation("sigma_init must be >= 0");
  NetworkState s;
  s.gamma = shape.gamma;
  s.signs.resize(shape.m);
  for (int j = 0; j < shape.m; ++j) s.signs[j] = j < shape.j_plus ? 1 : -1;

  if (scheme == InitScheme::fixed_matrix) {
    if (!fixed) throw ContractViolation("fixed_matrix init needs a matrix");
    if (fixed->rows() != p || fixed->cols() != shape.m)
      throw ContractViolation("fixed init matrix has wrong shape");
    s.W = *fixed;
    return s;
  }

  s.W.resize(p, shape.m);
  auto rng = CounterRng::stream(seed, stream_purpose::init);
  for (int j = 0; j < shape.m; ++j) {
    Eigen::VectorXd g(p);
    for (int k = 0; k < p; ++k) g[k] = rng.next_gaussian();
    const double norm = g.norm();
    const double radius = sigma * (0.5 + 0.5 * rng.next_unit());
    s.W.col(j) = norm > 0.0 ? Eigen::VectorXd(radius / norm * g)
                            : Eigen::VectorXd::Zero(p);
  }
  return s;
}

double forward(const NetworkState& state, const Eigen::VectorXd& x) {
  if (x.size() != state.W.rows())
    throw ContractViolation("forward: dimension mismatch");
  const Eigen::VectorXd u = state.W.transpose() * x;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(state.m()));
  double f = 0.0;
  for (int j = 0; j < state.m(); ++j)
    f += state.signs[j] * inv_sqrt_m * leaky(u[j], state.gamma);
  return f;
}

Eigen::VectorXd margins(const NetworkState& state, const Dataset& data) {
  if (data.p() != state.p()) throw ContractViolation("margins: dimension mismatch");
  const Eigen::MatrixXd P = data.X * state.W;  // n x m preactivations
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(state.m()));
  Eigen::VectorXd out(data.n());
  for (int i = 0; i < data.n(); ++i) {
    double f = 0.0;
    for (int j = 0; j < state.m(); ++j)
      f += state.signs[j] * inv_sqrt_m * leaky(P(i, j), state.gamma);
    out[i] = data.y[i] * f;
  }
  return out;
}

ActivationReport activation_report(const NetworkState& state, const Dataset& data) {
  if (data.p() != state.p())
    throw ContractViolation("activation_report: dimension mismatch");
  const Eigen::MatrixXd P = data.X * state.W;
  ActivationReport rep;
  for (int i = 0; i < data.n(); ++i)
    for (int j = 0; j < state.m(); ++j)
      if (state.signs[j] * data.y[i] * P(i, j) <= 0.0) rep.violators.emplace_back(i, j);
  rep.all_activated = rep.violators.empty();
  return rep;
}

}  // namespace leakylab
