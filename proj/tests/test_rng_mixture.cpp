#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "leakylab/mixture.hpp"
#include "leakylab/rng.hpp"

using namespace leakylab;

TEST_CASE("counter rng: deterministic and stream-split") {
  auto a = CounterRng::stream(42, stream_purpose::labels);
  auto b = CounterRng::stream(42, stream_purpose::labels);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  auto c = CounterRng::stream(42, stream_purpose::noise_row);
  auto d = CounterRng::stream(42, stream_purpose::noise_row, 1);
  CHECK(c.next_u64() != d.next_u64());

  auto u = CounterRng::stream(7, stream_purpose::mc);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.next_unit();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("generate: zero signal means X is Z bitwise") {
  auto spec = testutil::gaussian_spec(12, 24, 0.0, 99);
  const auto d = generate(spec);
  CHECK((d.X.array() == d.Z.array()).all());
}

TEST_CASE("dataset: additive model arithmetic") {
  Eigen::VectorXd mu(2), y(1);
  mu << 3.0, 0.0;
  y << 1.0;
  Eigen::MatrixXd Z(1, 2);
  Z << 0.5, -0.2;
  const auto d = testutil::fixed_dataset(Z, y, mu);
  CHECK(d.X(0, 0) == 3.5);
  CHECK(d.X(0, 1) == -0.2);
}

TEST_CASE("generate: X - y mu^T equals Z bit-exactly") {
  auto spec = testutil::gaussian_spec(16, 40, 9.0, 5);
  spec.sigma_spec = SigmaSpec::diagonal(
      Eigen::VectorXd::LinSpaced(40, 0.5, 4.0));
  const auto d = generate(spec);
  Eigen::MatrixXd resid = d.X;
  for (int i = 0; i < d.n(); ++i) resid.row(i) -= d.y[i] * spec.mu.transpose();
  CHECK((resid.array() == d.Z.array()).all());
}

TEST_CASE("generate: deterministic given seed") {
  auto spec = testutil::gaussian_spec(8, 16, 4.0, 1234);
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK((a.X.array() == b.X.array()).all());
  CHECK((a.y.array() == b.y.array()).all());
}

TEST_CASE("generate: rademacher noise norm concentration") {
  // sample mean of ||z||^2 / tr(Sigma) near 1 over 100 trials
  const int p = 10000, n = 20;
  double acc = 0.0;
  long count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto spec = testutil::gaussian_spec(n, p, 0.0, 1000 + trial);
    spec.noise_law = NoiseLaw::rademacher();
    const auto d = generate(spec);
    acc += d.Z.rowwise().squaredNorm().sum();
    count += n;
  }
  const double ratio = acc / (static_cast<double>(count) * p);
  CHECK(ratio == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("labels: empirical fraction of +1 within 3/sqrt(T) of 1/2") {
  const int T = 10000;
  auto spec = testutil::gaussian_spec(T, 1, 0.0, 77);
  const auto d = generate(spec);
  const double frac = static_cast<double>(d.n_plus()) / T;
  CHECK(std::abs(frac - 0.5) <= 3.0 / std::sqrt(static_cast<double>(T)));
}

TEST_CASE("noise laws: unit variance at 1e5 samples") {
  for (auto law : {NoiseLaw::gaussian(), NoiseLaw::rademacher()}) {
    auto rng = CounterRng::stream(5, stream_purpose::noise_row);
    double acc = 0.0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
      const double v = law.kind == NoiseLaw::Kind::gaussian ? rng.next_gaussian()
                                                            : rng.next_rademacher();
      acc += v * v;
    }
    CHECK(acc / N == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("poly tail: fourth moment finite, stable, near the recorded K") {
  const auto law = NoiseLaw::poly_tail(4.0, 5.0);
  // standardized Student-t(5): E xi^4 = 9
  CHECK(law.r_moment() == doctest::Approx(9.0).epsilon(1e-9));

  const int N = 200000;
  double prev = 0.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto rng = CounterRng::stream(seed, stream_purpose::noise_row);
    double m2 = 0.0, m4 = 0.0;
    for (int i = 0; i < N; ++i) {
      const double v = rng.next_student_t_standardized(5.0);
      m2 += v * v;
      m4 += v * v * v * v;
    }
    m2 /= N;
    m4 /= N;
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::isfinite(m4));
    // 4th moment of t(5) has heavy-tailed sampling error; bound loosely
    CHECK(m4 > 4.0);
    CHECK(m4 < 30.0);
    if (prev > 0.0) CHECK(m4 == doctest::Approx(prev).epsilon(0.75));
    prev = m4;
  }
}

TEST_CASE("poly tail: validation") {
  CHECK_THROWS_AS(NoiseLaw::poly_tail(5.0, 7.0), ConfigError);   // r > 4
  CHECK_THROWS_AS(NoiseLaw::poly_tail(2.0, 7.0), ConfigError);   // r <= 2
  CHECK_THROWS_AS(NoiseLaw::poly_tail(4.0, 3.0), ConfigError);   // df <= r
}

TEST_CASE("data functionals: identity covariance") {
  auto spec = testutil::gaussian_spec(4, 7, 5.0, 1);
  const auto f = data_functionals(spec);
  CHECK(f.trace_sigma == 7.0);
  CHECK(f.fro_sigma == doctest::Approx(std::sqrt(7.0)));
  CHECK(f.op_sigma == 1.0);
  CHECK(f.sigma_half_mu_norm == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("data functionals: diagonal hand evaluation") {
  MixtureSpec spec;
  spec.n = 2;
  spec.p = 2;
  Eigen::VectorXd diag(2);
  diag << 4.0, 1.0;
  spec.sigma_spec = SigmaSpec::diagonal(diag);
  spec.mu.resize(2);
  spec.mu << 1.0, 0.0;
  const auto f = data_functionals(spec);
  CHECK(f.trace_sigma == 5.0);
  CHECK(f.fro_sigma == doctest::Approx(std::sqrt(17.0)));
  CHECK(f.op_sigma == 4.0);
  CHECK(f.sigma_half_mu_norm == doctest::Approx(2.0));
}

TEST_CASE("data functionals: zero mu") {
  auto spec = testutil::gaussian_spec(3, 5, 0.0, 1);
  spec.sigma_spec = SigmaSpec::spiked(2.0, Eigen::VectorXd::Ones(5), 3.0);
  const auto f = data_functionals(spec);
  CHECK(f.norm_mu_sq == 0.0);
  CHECK(f.trace_sigma == doctest::Approx(2.0 * 5 + 3.0));
  CHECK(f.op_sigma == doctest::Approx(5.0));
}

TEST_CASE("spiked covariance: half_apply consistent with quad_form") {
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(6);
  dir[2] = 1.0;
  const auto sig = SigmaSpec::spiked(1.5, dir, 2.5);
  auto rng = CounterRng::stream(3, stream_purpose::probes);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd v(6);
    for (int i = 0; i < 6; ++i) v[i] = rng.next_gaussian();
    const Eigen::VectorXd hv = sig.half_apply(v);
    CHECK(hv.squaredNorm() == doctest::Approx(sig.quad_form(v)).epsilon(1e-12));
  }
}

TEST_CASE("covariance validation") {
  Eigen::VectorXd bad(3);
  bad << 1.0, 0.0, 2.0;
  auto spec = testutil::gaussian_spec(2, 3, 0.0, 1);
  spec.sigma_spec = SigmaSpec::diagonal(bad);
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

TEST_CASE("mixture spec: JSON round-trip is exact") {
  auto spec = testutil::gaussian_spec(6, 4, 2.5, 987654321);
  spec.noise_law = NoiseLaw::poly_tail(3.5, 6.0);
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(4);
  dir[1] = 1.0;
  spec.sigma_spec = SigmaSpec::spiked(0.5, dir, 1.5);
  const auto j = spec.to_json();
  const auto back = MixtureSpec::from_json(j);
  CHECK(back.p == spec.p);
  CHECK(back.n == spec.n);
  CHECK(back.seed == spec.seed);
  CHECK((back.mu.array() == spec.mu.array()).all());
  CHECK(back.noise_law.r == spec.noise_law.r);
  CHECK(back.sigma_spec.base == spec.sigma_spec.base);
  // snake_case keys exactly as the field names
  CHECK(j.contains("sigma_spec"));
  CHECK(j.contains("noise_law"));
  CHECK(j.contains("mu"));
}

TEST_CASE("dataset csv: header and row count") {
  auto spec = testutil::gaussian_spec(3, 2, 1.0, 8);
  const auto d = generate(spec);
  std::ostringstream os;
  d.to_csv(os);
  const std::string text = os.str();
  CHECK(text.rfind("y,x_1,x_2\r\n", 0) == 0);
  long rows = 0;
  for (std::size_t pos = 0; (pos = text.find("\r\n", pos)) != std::string::npos; pos += 2)
    ++rows;
  CHECK(rows == 4);  // header + 3 samples
}
