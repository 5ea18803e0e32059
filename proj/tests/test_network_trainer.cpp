#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "leakylab/regime.hpp"
#include "leakylab/trainer.hpp"

using namespace leakylab;

namespace {

NetworkState make_state(const Eigen::MatrixXd& W, const Eigen::VectorXi& signs,
                        double gamma) {
  NetworkState s;
  s.W = W;
  s.signs = signs;
  s.gamma = gamma;
  return s;
}

// Lemma-style closed-form update, valid when all neurons are activated:
// w_j <- w_j + alpha sum_i exp(-y_i f(x_i)) a_j zeta(a_j y_i) y_i x_i
Eigen::MatrixXd closed_form_update(const NetworkState& s, const Dataset& d,
                                   double alpha) {
  const auto marg = margins(s, d);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(s.m()));
  Eigen::MatrixXd W = s.W;
  for (int j = 0; j < s.m(); ++j) {
    const double a_j = s.signs[j] * inv_sqrt_m;
    for (int i = 0; i < d.n(); ++i) {
      const double zeta = a_j * d.y[i] >= 0.0 ? 1.0 : s.gamma;
      W.col(j) += alpha * std::exp(-marg[i]) * a_j * zeta * d.y[i] *
                  d.X.row(i).transpose();
    }
  }
  return W;
}

}  // namespace

TEST_CASE("forward: antisymmetric pair cancels") {
  Eigen::MatrixXd W(3, 2);
  W.col(0) << 1.0, -2.0, 0.5;
  W.col(1) = W.col(0);
  Eigen::VectorXi signs(2);
  signs << 1, -1;
  const auto s = make_state(W, signs, 0.3);
  Eigen::VectorXd x(3);
  x << 0.2, 1.0, -4.0;
  CHECK(forward(s, x) == doctest::Approx(0.0));
}

TEST_CASE("forward: hand evaluation") {
  Eigen::MatrixXd W(2, 2);
  W.col(0) << 1.0, 0.0;
  W.col(1) << 0.0, 1.0;
  Eigen::VectorXi signs(2);
  signs << 1, -1;
  const auto s = make_state(W, signs, 0.5);
  Eigen::VectorXd x(2);
  x << 1.0, -1.0;
  CHECK(forward(s, x) == doctest::Approx(1.5 / std::sqrt(2.0)));
}

TEST_CASE("forward: zero input maps to zero") {
  Eigen::MatrixXd W = Eigen::MatrixXd::Random(4, 3);
  Eigen::VectorXi signs(3);
  signs << 1, -1, 1;
  const auto s = make_state(W, signs, 0.7);
  CHECK(forward(s, Eigen::VectorXd::Zero(4)) == 0.0);
}

TEST_CASE("forward: positive homogeneity") {
  auto rng = CounterRng::stream(21, stream_purpose::probes);
  Eigen::MatrixXd W(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) W(i, j) = rng.next_gaussian();
  Eigen::VectorXi signs(4);
  signs << 1, 1, -1, -1;
  const auto s = make_state(W, signs, 0.4);
  Eigen::VectorXd x(5);
  for (int i = 0; i < 5; ++i) x[i] = rng.next_gaussian();
  for (double c : {0.1, 2.0, 17.5}) {
    NetworkState scaled = s;
    scaled.W *= c;
    CHECK(forward(scaled, x) == doctest::Approx(c * forward(s, x)).epsilon(1e-12));
  }
}

TEST_CASE("forward: dimension mismatch is a contract violation") {
  const auto s = make_state(Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXi::Ones(1), 0.5);
  CHECK_THROWS_AS(forward(s, Eigen::VectorXd::Zero(4)), ContractViolation);
}

TEST_CASE("empirical loss: margins zero give n, single margin ln 2 gives 1/2") {
  auto spec = testutil::gaussian_spec(5, 3, 0.0, 3);
  const auto d = generate(spec);
  const auto zero = make_state(Eigen::MatrixXd::Zero(3, 2),
                               (Eigen::VectorXi(2) << 1, -1).finished(), 0.5);
  CHECK(empirical_loss(zero, d) == doctest::Approx(5.0));

  // single sample x = e1, w = (ln 2) e1, m = 1, a = +1, y = +1
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd Z(1, 2);
  Z << 1.0, 0.0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const auto single = testutil::fixed_dataset(Z, y, mu);
  Eigen::MatrixXd W(2, 1);
  W << std::log(2.0), 0.0;
  const auto s = make_state(W, Eigen::VectorXi::Ones(1), 0.5);
  CHECK(empirical_loss(s, single) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("empirical loss: matches direct summation oracle") {
  auto spec = testutil::gaussian_spec(7, 6, 2.0, 17);
  const auto d = generate(spec);
  auto rng = CounterRng::stream(18, stream_purpose::init);
  Eigen::MatrixXd W(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) W(i, j) = 0.1 * rng.next_gaussian();
  const auto s = make_state(W, (Eigen::VectorXi(3) << 1, -1, 1).finished(), 0.8);

  double direct = 0.0;
  for (int i = 0; i < d.n(); ++i)
    direct += std::exp(-d.y[i] * forward(s, d.X.row(i).transpose()));
  CHECK(empirical_loss(s, d) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("gd step: hand evaluation on a single sample") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd Z(1, 2);
  Z << 1.0, 0.0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const auto d = testutil::fixed_dataset(Z, y, mu);
  Eigen::MatrixXd W(2, 1);
  W << 1.0, 0.0;
  const auto s = make_state(W, Eigen::VectorXi::Ones(1), 0.5);
  const auto next = gd_step(s, d, 1.0);
  CHECK(next.W(0, 0) == doctest::Approx(1.0 + std::exp(-1.0)).epsilon(1e-14));
  CHECK(next.W(1, 0) == doctest::Approx(0.0));
  CHECK(next.step == 1);
}

TEST_CASE("gd step: alpha zero leaves the state unchanged") {
  auto spec = testutil::gaussian_spec(4, 5, 1.0, 9);
  const auto d = generate(spec);
  const auto s = make_state(Eigen::MatrixXd::Random(5, 2),
                            (Eigen::VectorXi(2) << 1, -1).finished(), 0.5);
  const auto next = gd_step(s, d, 0.0);
  CHECK((next.W.array() == s.W.array()).all());
  CHECK(next.step == s.step);
}

TEST_CASE("gd step: equals closed form when all neurons are activated") {
  const auto d = testutil::orthogonal_dataset(6, 10, 2.0, 3.0);
  const NetShape shape{4, 2, 0.5};
  // start from a state aligned with the data so every neuron is activated
  auto st = init_network(10, shape, InitScheme::uniform_sphere_scaled, 1e-3, 5);
  st = gd_step(st, d, 0.05);  // one step aligns the neurons on this data
  REQUIRE(activation_report(st, d).all_activated);
  const auto stepped = gd_step(st, d, 0.05);
  const auto closed = closed_form_update(st, d, 0.05);
  CHECK((stepped.W - closed).norm() / closed.norm() <= 1e-12);
}

TEST_CASE("activation report: zero weights violate everywhere") {
  auto spec = testutil::gaussian_spec(4, 3, 1.0, 2);
  const auto d = generate(spec);
  const auto s = make_state(Eigen::MatrixXd::Zero(3, 2),
                            (Eigen::VectorXi(2) << 1, -1).finished(), 0.5);
  const auto rep = activation_report(s, d);
  CHECK_FALSE(rep.all_activated);
  CHECK(rep.violators.size() == 4u * 2u);
}

TEST_CASE("activation report: aligned single neuron") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd Z(1, 3);
  Z << 1.0, -2.0, 0.5;
  Eigen::VectorXd y(1);
  y << -1.0;
  const auto d = testutil::fixed_dataset(Z, y, mu);
  Eigen::MatrixXd W = (d.y[0] * d.X.row(0)).transpose();
  const auto s = make_state(W, Eigen::VectorXi::Ones(1), 0.5);
  CHECK(activation_report(s, d).all_activated);
}

TEST_CASE("activation report: matches brute-force double loop") {
  auto spec = testutil::gaussian_spec(9, 6, 1.0, 31);
  const auto d = generate(spec);
  const auto s = make_state(Eigen::MatrixXd::Random(6, 4),
                            (Eigen::VectorXi(4) << 1, 1, -1, -1).finished(), 0.6);
  const auto rep = activation_report(s, d);
  std::vector<std::pair<int, int>> brute;
  const double inv_sqrt_m = 1.0 / 2.0;
  for (int i = 0; i < d.n(); ++i)
    for (int j = 0; j < 4; ++j) {
      const double a_j = s.signs[j] * inv_sqrt_m;
      if (a_j * d.y[i] * d.X.row(i).dot(s.W.col(j)) <= 0.0) brute.emplace_back(i, j);
    }
  CHECK(rep.violators == brute);
}

TEST_CASE("gradient matches central finite differences away from kinks") {
  auto spec = testutil::gaussian_spec(6, 8, 1.0, 77);
  const auto d = generate(spec);
  const double xmax = d.X.rowwise().norm().maxCoeff();
  const NetShape shape{3, 2, 0.5};
  NetworkState st;
  bool found = false;
  for (std::uint64_t attempt = 0; attempt < 20 && !found; ++attempt) {
    st = init_network(8, shape, InitScheme::uniform_sphere_scaled, 0.5 / xmax,
                      100 + attempt);
    found = (d.X * st.W).array().abs().minCoeff() > 1e-6;
  }
  REQUIRE(found);
  const auto g = loss_gradient(st, d);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(st.W(k, j)));
      NetworkState lo = st, hi = st;
      lo.W(k, j) -= h;
      hi.W(k, j) += h;
      const double fd = (empirical_loss(hi, d) - empirical_loss(lo, d)) / (2.0 * h);
      CHECK(std::abs(fd - g(k, j)) <= 1e-5 * std::max(1.0, std::abs(g(k, j))));
    }
}

TEST_CASE("linear-regime equality: margins equal transformed inner products") {
  const auto d = testutil::orthogonal_dataset(5, 8, 1.5, 2.5);
  const NetShape shape{4, 1, 0.35};
  auto st = init_network(8, shape, InitScheme::uniform_sphere_scaled, 1e-4, 8);
  st = gd_step(st, d, 0.05);
  REQUIRE(activation_report(st, d).all_activated);

  const auto xt = testutil::materialize_x_tilde(d, shape);
  Eigen::VectorXd w_vec(static_cast<long>(shape.m) * 8);
  for (int j = 0; j < shape.m; ++j) w_vec.segment(static_cast<long>(j) * 8, 8) = st.W.col(j);
  const auto marg = margins(st, d);
  for (int i = 0; i < d.n(); ++i) {
    const double lin = d.y[i] * xt.row(i).dot(w_vec);
    CHECK(marg[i] == doctest::Approx(lin).epsilon(1e-12));
  }
}

TEST_CASE("train: T = 0 yields an empty trace") {
  auto spec = testutil::gaussian_spec(4, 6, 1.0, 3);
  const auto d = generate(spec);
  TrainConfig cfg{0.01, 1e-3, 0, InitScheme::uniform_sphere_scaled};
  auto st = init_network(6, NetShape{2, 1, 0.5}, cfg.init_scheme, cfg.sigma_init, 3);
  const auto res = train(d, cfg, st);
  CHECK(res.trace.steps.empty());
  CHECK_FALSE(res.trace.aborted);
}

TEST_CASE("train: condition (ii) regime keeps neurons activated, ratio below C_w") {
  // exactly orthogonal noise with mu = 0 passes Theorem 1 (ii) literally
  const auto d = testutil::orthogonal_dataset(8, 12, 0.0, 4.0);
  const NetShape shape{4, 2, 0.5};
  TrainConfig cfg{0.0, 1e-5, 400, InitScheme::uniform_sphere_scaled};
  cfg.alpha = 1e-3;
  auto st0 = init_network(12, shape, cfg.init_scheme, cfg.sigma_init, 17);
  const auto report =
      check_assumptions(d, cfg, st0, SlackParams::paper_defaults(shape.gamma));
  REQUIRE(report.theorem1_condition == Theorem1Condition::ii);

  const auto res = train(d, cfg, st0);
  REQUIRE(res.trace.steps.size() == 400u);
  for (const auto& s : res.trace.steps) {
    CHECK(s.all_activated);
    CHECK(s.loss_ratio_max >= 1.0);
    CHECK(s.loss_ratio_max <= report.c_w);
    CHECK(std::isfinite(s.loss));
    CHECK(s.loss > 0.0);
  }
  // loss decreasing on this regime
  CHECK(res.trace.steps.back().loss < res.trace.steps.front().loss);
}

TEST_CASE("train: records block cosines against a reference") {
  const auto d = testutil::orthogonal_dataset(6, 10, 1.0, 3.0);
  const NetShape shape{4, 2, 0.5};
  TrainConfig cfg{2e-3, 1e-5, 600, InitScheme::uniform_sphere_scaled};
  auto st0 = init_network(10, shape, cfg.init_scheme, cfg.sigma_init, 4);
  const auto bg = build_block_gram(d, shape.gamma, shape);
  const auto ld = min_norm_direction(d, bg);
  const ReferenceDirection ref{ld.w_plus, ld.w_minus};
  const auto res = train(d, cfg, st0, &ref);
  const auto& last = res.trace.steps.back();
  CHECK(last.cos_plus > 0.95);
  CHECK(last.cos_minus > 0.95);
  // cosines improve as the direction converges
  CHECK(last.cos_plus >= res.trace.steps.front().cos_plus - 1e-9);
}

TEST_CASE("train: aborts when a margin exceeds +700") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd Z(1, 2);
  Z << 1.0, 0.0;
  Eigen::VectorXd y(1);
  y << 1.0;
  const auto d = testutil::fixed_dataset(Z, y, mu);
  Eigen::MatrixXd W(2, 1);
  W << 800.0, 0.0;  // margin 800 immediately
  NetworkState st;
  st.W = W;
  st.signs = Eigen::VectorXi::Ones(1);
  st.gamma = 0.5;
  TrainConfig cfg{0.1, 0.0, 10, InitScheme::fixed_matrix};
  const auto res = train(d, cfg, st);
  CHECK(res.trace.aborted);
  CHECK(res.trace.steps.empty());
}

TEST_CASE("sigma_max bound: dominates the dense oracle") {
  SUBCASE("orthonormal noise orthogonal to mu") {
    const auto d = testutil::orthogonal_dataset(3, 5, 1.0, 1.0);
    const auto theta = measure_event_E(d);
    const double bound = sigma_max_tilde_bound(d, theta.theta1, theta.theta2);
    const NetShape shape{2, 1, 0.5};
    const auto xt = testutil::materialize_x_tilde(d, shape);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(xt);
    const double smax_sq = svd.singularValues()[0] * svd.singularValues()[0];
    CHECK(bound >= smax_sq * (1 - 1e-12));
  }
  SUBCASE("random gaussian data with measured thetas") {
    auto spec = testutil::gaussian_spec(6, 32, 4.0, 55);
    const auto d = generate(spec);
    const auto theta = measure_event_E(d);
    const double bound = sigma_max_tilde_bound(d, theta.theta1, theta.theta2);
    for (int jp : {0, 1, 3}) {
      const NetShape shape{3, jp, 0.7};
      const auto xt = testutil::materialize_x_tilde(d, shape);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(xt);
      const double smax_sq = svd.singularValues()[0] * svd.singularValues()[0];
      CHECK(bound >= smax_sq * (1 - 1e-12));
    }
  }
  SUBCASE("mu = 0, theta2 = 0 specialization") {
    const auto d = testutil::orthogonal_dataset(4, 6, 0.0, 2.0);
    const double rmax_sq = 4.0;
    CHECK(sigma_max_tilde_bound(d, 0.25, 0.0) ==
          doctest::Approx(rmax_sq + 3 * 0.25 * rmax_sq));
  }
}
