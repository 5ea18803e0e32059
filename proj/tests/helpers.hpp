#pragma once

#include <Eigen/Dense>

#include "leakylab/limit.hpp"
#include "leakylab/mixture.hpp"
#include "leakylab/network.hpp"
#include "leakylab/rng.hpp"

namespace testutil {

using namespace leakylab;

inline MixtureSpec gaussian_spec(int n, int p, double mu_norm_sq, std::uint64_t seed) {
  MixtureSpec s;
  s.n = n;
  s.p = p;
  s.mu = Eigen::VectorXd::Zero(p);
  if (mu_norm_sq > 0.0) s.mu[0] = std::sqrt(mu_norm_sq);
  s.seed = seed;
  return s;
}

// Dataset with exactly orthogonal noise rows of common norm r, all orthogonal
// to mu (mu sits on axis 0, noise on axes 1..n). Gives theta1 = theta2 = 0 and
// eps~1 = eps~2 = 0 at R = r^2 exactly.
inline Dataset orthogonal_dataset(int n, int p, double mu_norm, double r,
                                  std::uint64_t label_seed = 3) {
  if (p < n + 1) throw std::invalid_argument("orthogonal_dataset needs p >= n+1");
  Dataset d;
  d.spec = gaussian_spec(n, p, mu_norm * mu_norm, label_seed);
  d.y.resize(n);
  auto rng = CounterRng::stream(label_seed, stream_purpose::labels);
  for (int i = 0; i < n; ++i) d.y[i] = rng.next_rademacher();
  d.Z = Eigen::MatrixXd::Zero(n, p);
  for (int i = 0; i < n; ++i) d.Z(i, i + 1) = r;
  d.X = d.Z;
  for (int i = 0; i < n; ++i) d.X.row(i) += d.y[i] * d.spec.mu.transpose();
  return d;
}

// Dataset with fixed labels (n_plus ones first) and given noise matrix.
inline Dataset fixed_dataset(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& mu) {
  Dataset d;
  d.spec.n = static_cast<int>(Z.rows());
  d.spec.p = static_cast<int>(Z.cols());
  d.spec.mu = mu;
  d.y = y;
  d.Z = Z;
  d.X = Z;
  for (int i = 0; i < d.spec.n; ++i) d.X.row(i) += y[i] * mu.transpose();
  return d;
}

// n x (m p) matrix of transformed samples for the given sign layout.
inline Eigen::MatrixXd materialize_x_tilde(const Dataset& data, const NetShape& shape) {
  const int n = data.n(), p = data.p(), m = shape.m;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Eigen::MatrixXd xt(n, static_cast<long>(m) * p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double a_j = (j < shape.j_plus ? 1.0 : -1.0) * inv_sqrt_m;
      const double z = a_j * data.y[i] >= 0.0 ? 1.0 : shape.gamma;
      xt.block(i, static_cast<long>(j) * p, 1, p) = a_j * z * data.X.row(i);
    }
  return xt;
}

}  // namespace testutil
