#include "leakylab/mixture.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "leakylab/csvio.hpp"
#include "leakylab/rng.hpp"

namespace leakylab {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

SigmaSpec SigmaSpec::identity() { return {}; }

SigmaSpec SigmaSpec::diagonal(Eigen::VectorXd diag) {
  SigmaSpec s;
  s.kind = Kind::diagonal;
  s.values = std::move(diag);
  return s;
}

SigmaSpec SigmaSpec::spiked(double base, Eigen::VectorXd direction, double magnitude) {
  SigmaSpec s;
  s.kind = Kind::spiked;
  s.base = base;
  s.magnitude = magnitude;
  const double norm = direction.norm();
  if (norm <= 0.0) throw ConfigError("spiked covariance needs a nonzero direction");
  s.direction = direction / norm;
  return s;
}

void SigmaSpec::validate(int p) const {
  switch (kind) {
    case Kind::identity:
      return;
    case Kind::diagonal:
      if (values.size() != p) throw ConfigError("diagonal covariance size != p");
      if ((values.array() <= 0.0).any())
        throw ConfigError("diagonal covariance has a non-positive entry");
      return;
    case Kind::spiked:
      if (direction.size() != p) throw ConfigError("spiked direction size != p");
      if (base <= 0.0) throw ConfigError("spiked base must be > 0");
      if (magnitude < 0.0) throw ConfigError("spiked magnitude must be >= 0");
      if (std::abs(direction.norm() - 1.0) > 1e-12)
        throw ConfigError("spiked direction must be unit");
      return;
  }
  throw ConfigError("unknown covariance kind");
}

double SigmaSpec::trace(int p) const {
  switch (kind) {
    case Kind::identity: return static_cast<double>(p);
    case Kind::diagonal: return values.sum();
    case Kind::spiked: return base * p + magnitude;
  }
  return kNan;
}

double SigmaSpec::fro(int p) const {
  switch (kind) {
    case Kind::identity: return std::sqrt(static_cast<double>(p));
    case Kind::diagonal: return values.norm();
    case Kind::spiked: {
      // eigenvalues: base (p-1 times) and base+magnitude
      const double top = base + magnitude;
      return std::sqrt((p - 1) * base * base + top * top);
    }
  }
  return kNan;
}

double SigmaSpec::op(int p) const {
  switch (kind) {
    case Kind::identity: return 1.0;
    case Kind::diagonal: return values.maxCoeff();
    case Kind::spiked: return base + magnitude;
  }
  (void)p;
  return kNan;
}

double SigmaSpec::beta_min(int p) const {
  switch (kind) {
    case Kind::identity: return 1.0;
    case Kind::diagonal: return values.minCoeff();
    case Kind::spiked: return p > 1 ? base : base + magnitude;
  }
  return kNan;
}

double SigmaSpec::quad_form(const Eigen::VectorXd& v) const {
  switch (kind) {
    case Kind::identity: return v.squaredNorm();
    case Kind::diagonal: return (values.array() * v.array().square()).sum();
    case Kind::spiked: {
      const double proj = direction.dot(v);
      return base * v.squaredNorm() + magnitude * proj * proj;
    }
  }
  return kNan;
}

double SigmaSpec::inv_quad_form(const Eigen::VectorXd& v) const {
  switch (kind) {
    case Kind::identity: return v.squaredNorm();
    case Kind::diagonal: return (v.array().square() / values.array()).sum();
    case Kind::spiked: {
      // Sigma^{-1} = (1/base)(I - magnitude/(base+magnitude) u u^T)
      const double proj = direction.dot(v);
      return v.squaredNorm() / base -
             magnitude / (base * (base + magnitude)) * proj * proj;
    }
  }
  return kNan;
}

Eigen::VectorXd SigmaSpec::half_apply(const Eigen::VectorXd& v) const {
  switch (kind) {
    case Kind::identity: return v;
    case Kind::diagonal: return values.array().sqrt() * v.array();
    case Kind::spiked: {
      const double proj = direction.dot(v);
      return std::sqrt(base) * v +
             (std::sqrt(base + magnitude) - std::sqrt(base)) * proj * direction;
    }
  }
  return v;
}

nlohmann::json SigmaSpec::to_json() const {
  switch (kind) {
    case Kind::identity: return {{"kind", "identity"}};
    case Kind::diagonal: {
      std::vector<double> v(values.data(), values.data() + values.size());
      return {{"kind", "diagonal"}, {"values", v}};
    }
    case Kind::spiked: {
      std::vector<double> d(direction.data(), direction.data() + direction.size());
      return {{"kind", "spiked"}, {"base", base}, {"direction", d}, {"magnitude", magnitude}};
    }
  }
  return {};
}

SigmaSpec SigmaSpec::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return identity();
  if (kind == "diagonal") {
    auto v = j.at("values").get<std::vector<double>>();
    return diagonal(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<long>(v.size())));
  }
  if (kind == "spiked") {
    auto d = j.at("direction").get<std::vector<double>>();
    return spiked(j.at("base").get<double>(),
                  Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<long>(d.size())),
                  j.at("magnitude").get<double>());
  }
  throw ConfigError("unknown sigma_spec kind: " + kind);
}

NoiseLaw NoiseLaw::rademacher() {
  NoiseLaw l;
  l.kind = Kind::rademacher_subgauss;
  return l;
}

NoiseLaw NoiseLaw::poly_tail(double r, double base_df) {
  NoiseLaw l;
  l.kind = Kind::poly_tail;
  l.r = r;
  l.base_df = base_df;
  l.validate();
  return l;
}

void NoiseLaw::validate() const {
  if (kind != Kind::poly_tail) return;
  if (!(r > 2.0 && r <= 4.0)) throw ConfigError("poly_tail requires r in (2, 4]");
  if (!(base_df > r)) throw ConfigError("poly_tail requires base_df > r for a finite r-th moment");
}

double NoiseLaw::psi2() const {
  switch (kind) {
    case Kind::gaussian: return 1.0;
    case Kind::rademacher_subgauss: return 1.0;
    case Kind::poly_tail: return kNan;
  }
  return kNan;
}

double NoiseLaw::r_moment() const {
  if (kind != Kind::poly_tail) return kNan;
  // E|T|^r for Student-t with df degrees of freedom, then standardized to
  // unit variance: divide by (df/(df-2))^{r/2}.
  const double df = base_df;
  const double log_m = 0.5 * r * std::log(df) + std::lgamma(0.5 * (r + 1.0)) +
                       std::lgamma(0.5 * (df - r)) - 0.5 * std::log(M_PI) -
                       std::lgamma(0.5 * df);
  return std::exp(log_m - 0.5 * r * std::log(df / (df - 2.0)));
}

nlohmann::json NoiseLaw::to_json() const {
  switch (kind) {
    case Kind::gaussian: return {{"kind", "gaussian"}};
    case Kind::rademacher_subgauss: return {{"kind", "rademacher_subgauss"}};
    case Kind::poly_tail: return {{"kind", "poly_tail"}, {"r", r}, {"base_df", base_df}};
  }
  return {};
}

NoiseLaw NoiseLaw::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") return gaussian();
  if (kind == "rademacher_subgauss") return rademacher();
  if (kind == "poly_tail")
    return poly_tail(j.at("r").get<double>(), j.value("base_df", 5.0));
  throw ConfigError("unknown noise_law kind: " + kind);
}

void MixtureSpec::validate() const {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (p < 1) throw ConfigError("p must be >= 1");
  if (mu.size() != p) throw ConfigError("mu size != p");
  sigma_spec.validate(p);
  noise_law.validate();
}

nlohmann::json MixtureSpec::to_json() const {
  std::vector<double> m(mu.data(), mu.data() + mu.size());
  return {{"p", p},
          {"n", n},
          {"mu", m},
          {"sigma_spec", sigma_spec.to_json()},
          {"noise_law", noise_law.to_json()},
          {"seed", seed}};
}

MixtureSpec MixtureSpec::from_json(const nlohmann::json& j) {
  MixtureSpec s;
  s.p = j.at("p").get<int>();
  s.n = j.at("n").get<int>();
  const auto& jmu = j.at("mu");
  if (jmu.is_array()) {
    auto m = jmu.get<std::vector<double>>();
    s.mu = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<long>(m.size()));
  } else {
    // compact form: mu along a coordinate axis with a given squared norm
    const double norm_sq = jmu.at("norm_sq").get<double>();
    const int axis = jmu.value("axis", 0);
    s.mu = Eigen::VectorXd::Zero(s.p);
    if (axis < 0 || axis >= s.p) throw ConfigError("mu axis out of range");
    s.mu[axis] = std::sqrt(norm_sq);
  }
  s.sigma_spec = j.contains("sigma_spec") ? SigmaSpec::from_json(j.at("sigma_spec"))
                                          : SigmaSpec::identity();
  s.noise_law = j.contains("noise_law") ? NoiseLaw::from_json(j.at("noise_law"))
                                        : NoiseLaw::gaussian();
  s.seed = j.value("seed", std::uint64_t{0});
  s.validate();
  return s;
}

int Dataset::n_plus() const {
  int c = 0;
  for (long i = 0; i < y.size(); ++i)
    if (y[i] > 0) ++c;
  return c;
}

void Dataset::to_csv(std::ostream& os) const {
  csv::Writer w(os);
  std::vector<std::string> header;
  header.push_back("y");
  for (int j = 1; j <= p(); ++j) header.push_back("x_" + std::to_string(j));
  w.row(header);
  for (int i = 0; i < n(); ++i) {
    std::vector<std::string> row;
    row.push_back(csv::format_double(y[i]));
    for (int j = 0; j < p(); ++j) row.push_back(csv::format_double(X(i, j)));
    w.row(row);
  }
}

namespace {

double draw_xi(CounterRng& rng, const NoiseLaw& law) {
  switch (law.kind) {
    case NoiseLaw::Kind::gaussian: return rng.next_gaussian();
    case NoiseLaw::Kind::rademacher_subgauss: return rng.next_rademacher();
    case NoiseLaw::Kind::poly_tail: return rng.next_student_t_standardized(law.base_df);
  }
  return 0.0;
}

}  // namespace

Dataset generate(const MixtureSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  const int n = spec.n, p = spec.p;

  d.y.resize(n);
  auto label_rng = CounterRng::stream(spec.seed, stream_purpose::labels);
  for (int i = 0; i < n; ++i) d.y[i] = label_rng.next_rademacher();

  Eigen::MatrixXd Z(n, p);
  for (int i = 0; i < n; ++i) {
    auto row_rng = CounterRng::stream(spec.seed, stream_purpose::noise_row,
                                      static_cast<std::uint64_t>(i));
    Eigen::VectorXd xi(p);
    for (int j = 0; j < p; ++j) xi[j] = draw_xi(row_rng, spec.noise_law);
    Z.row(i) = spec.sigma_spec.half_apply(xi).transpose();
  }

  d.X = Z;
  for (int i = 0; i < n; ++i) d.X.row(i) += d.y[i] * spec.mu.transpose();
  // Store Z as the exact residual so X - y*mu^T == Z holds bitwise.
  d.Z = d.X;
  for (int i = 0; i < n; ++i) d.Z.row(i) -= d.y[i] * spec.mu.transpose();
  return d;
}

DataFunctionals data_functionals(const MixtureSpec& spec) {
  spec.validate();
  DataFunctionals f;
  f.norm_mu_sq = spec.mu.squaredNorm();
  f.trace_sigma = spec.sigma_spec.trace(spec.p);
  f.fro_sigma = spec.sigma_spec.fro(spec.p);
  f.op_sigma = spec.sigma_spec.op(spec.p);
  f.sigma_half_mu_norm = std::sqrt(spec.sigma_spec.quad_form(spec.mu));
  return f;
}

}  // namespace leakylab
