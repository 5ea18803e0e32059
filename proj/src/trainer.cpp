#include "leakylab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "leakylab/csvio.hpp"

namespace leakylab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kMarginGuard = 700.0;

double loss_from_margins(const Eigen::VectorXd& m) {
  if (m.minCoeff() < -kMarginGuard) {
    // log-sum-exp of (-m_i)
    const double a = (-m).maxCoeff();
    double acc = 0.0;
    for (long i = 0; i < m.size(); ++i) acc += std::exp(-m[i] - a);
    return std::exp(a + std::log(acc));
  }
  double acc = 0.0;
  for (long i = 0; i < m.size(); ++i) acc += std::exp(-m[i]);
  return acc;
}

double loss_ratio_max(const Eigen::VectorXd& m) {
  if (m.size() < 2) return 1.0;
  return std::exp(m.maxCoeff() - m.minCoeff());
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return kNan;
  return a.dot(b) / (na * nb);
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"sigma_init", sigma_init},
          {"T", T},
          {"init_scheme", init_scheme == InitScheme::uniform_sphere_scaled
                              ? "uniform_sphere_scaled"
                              : "fixed_matrix"}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.sigma_init = j.value("sigma_init", 0.0);
  c.T = j.value("T", 0L);
  const std::string s = j.value("init_scheme", "uniform_sphere_scaled");
  if (s == "uniform_sphere_scaled")
    c.init_scheme = InitScheme::uniform_sphere_scaled;
  else if (s == "fixed_matrix")
    c.init_scheme = InitScheme::fixed_matrix;
  else
    throw ConfigError("unknown init_scheme: " + s);
  return c;
}

void TrainTrace::to_csv(std::ostream& os) const {
  csv::Writer w(os);
  w.row({"t", "loss", "all_activated", "min_margin", "loss_ratio_max", "cos_plus",
         "cos_minus"});
  for (const auto& s : steps) {
    w.row({std::to_string(s.t), csv::format_double(s.loss),
           s.all_activated ? "1" : "0", csv::format_double(s.min_margin),
           csv::format_double(s.loss_ratio_max),
           std::isnan(s.cos_plus) ? "" : csv::format_double(s.cos_plus),
           std::isnan(s.cos_minus) ? "" : csv::format_double(s.cos_minus)});
  }
}

nlohmann::json TrainTrace::summary() const {
  nlohmann::json j;
  j["steps"] = steps.size();
  j["aborted"] = aborted;
  if (aborted) {
    j["abort_reason"] = abort_reason;
    j["abort_step"] = abort_step;
  }
  if (!steps.empty()) {
    const auto& last = steps.back();
    j["final_loss"] = last.loss;
    j["final_min_margin"] = last.min_margin;
    j["final_loss_ratio_max"] = last.loss_ratio_max;
    j["all_activated_every_step"] =
        std::all_of(steps.begin(), steps.end(),
                    [](const StepRecord& s) { return s.all_activated; });
    if (!std::isnan(last.cos_plus)) j["final_cos_plus"] = last.cos_plus;
    if (!std::isnan(last.cos_minus)) j["final_cos_minus"] = last.cos_minus;
  }
  return j;
}

double empirical_loss(const NetworkState& state, const Dataset& data) {
  return loss_from_margins(margins(state, data));
}

Eigen::MatrixXd loss_gradient(const NetworkState& state, const Dataset& data) {
  const Eigen::MatrixXd P = data.X * state.W;  // n x m
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(state.m()));
  Eigen::VectorXd marg(data.n());
  for (int i = 0; i < data.n(); ++i) {
    double f = 0.0;
    for (int j = 0; j < state.m(); ++j)
      f += state.signs[j] * inv_sqrt_m * leaky(P(i, j), state.gamma);
    marg[i] = data.y[i] * f;
  }
  Eigen::MatrixXd G(data.n(), state.m());
  for (int i = 0; i < data.n(); ++i) {
    const double e = std::exp(-marg[i]);
    for (int j = 0; j < state.m(); ++j) {
      const double a_j = state.signs[j] * inv_sqrt_m;
      G(i, j) = -e * data.y[i] * a_j * leaky_slope(P(i, j), state.gamma);
    }
  }
  return data.X.transpose() * G;  // p x m
}

NetworkState gd_step(const NetworkState& state, const Dataset& data, double alpha) {
  if (!(alpha >= 0.0)) throw ContractViolation("gd_step: alpha must be >= 0");
  if (alpha == 0.0) return state;
  const Eigen::MatrixXd grad = loss_gradient(state, data);
  if (!grad.allFinite())
    throw NumericalFailure("non-finite gradient at step " + std::to_string(state.step));
  NetworkState next = state;
  next.W.noalias() -= alpha * grad;
  next.step = state.step + 1;
  return next;
}

TrainResult train(const Dataset& data, const TrainConfig& config, NetworkState state0,
                  const ReferenceDirection* reference) {
  config.validate();
  TrainResult res;
  res.final_state = std::move(state0);
  NetworkState& state = res.final_state;
  TrainTrace& trace = res.trace;

  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(state.m()));
  const int n = data.n(), m = state.m();

  Eigen::MatrixXd P = data.X * state.W;  // n x m preactivations
  Eigen::VectorXd marg(n);
  bool all_act = true;
  auto refresh_monitors = [&]() {
    all_act = true;
    for (int i = 0; i < n; ++i) {
      double f = 0.0;
      for (int j = 0; j < m; ++j) {
        f += state.signs[j] * inv_sqrt_m * leaky(P(i, j), state.gamma);
        if (state.signs[j] * data.y[i] * P(i, j) <= 0.0) all_act = false;
      }
      marg[i] = data.y[i] * f;
    }
  };
  refresh_monitors();

  Eigen::MatrixXd G(n, m);
  for (long t = 1; t <= config.T; ++t) {
    if (marg.maxCoeff() > kMarginGuard) {
      trace.aborted = true;
      trace.abort_reason = "margin exceeded +700; loss underflow makes steps no-ops";
      trace.abort_step = t - 1;
      break;
    }

    for (int i = 0; i < n; ++i) {
      const double e = std::exp(-marg[i]);
      for (int j = 0; j < m; ++j) {
        const double a_j = state.signs[j] * inv_sqrt_m;
        G(i, j) = e * data.y[i] * a_j * leaky_slope(P(i, j), state.gamma);
      }
    }
    if (!G.allFinite())
      throw NumericalFailure("non-finite gradient at step " + std::to_string(t - 1));
    state.W.noalias() += config.alpha * data.X.transpose() * G;
    state.step += 1;

    P.noalias() = data.X * state.W;
    refresh_monitors();

    StepRecord rec;
    rec.t = t;
    rec.loss = loss_from_margins(marg);
    rec.all_activated = all_act;
    rec.min_margin = marg.minCoeff();
    rec.loss_ratio_max = loss_ratio_max(marg);
    rec.cos_plus = kNan;
    rec.cos_minus = kNan;
    if (reference) {
      const int jp = state.j_plus();
      Eigen::VectorXd mean_plus = Eigen::VectorXd::Zero(state.p());
      Eigen::VectorXd mean_minus = Eigen::VectorXd::Zero(state.p());
      for (int j = 0; j < state.m(); ++j) {
        if (state.signs[j] > 0)
          mean_plus += state.W.col(j);
        else
          mean_minus += state.W.col(j);
      }
      if (jp > 0) rec.cos_plus = cosine(mean_plus / jp, reference->w_plus);
      if (state.m() - jp > 0)
        rec.cos_minus = cosine(mean_minus / (state.m() - jp), reference->w_minus);
    }
    trace.steps.push_back(rec);
  }
  return res;
}

double sigma_max_tilde_bound(const Dataset& data, double theta1, double theta2) {
  if (theta1 < 0.0 || theta1 > 1.0 || theta2 < 0.0 || theta2 > 1.0)
    throw ContractViolation("theta1, theta2 must be in [0, 1]");
  const double mu_sq = data.spec.mu.squaredNorm();
  const double mu = std::sqrt(mu_sq);
  const double rmax = data.Z.rowwise().norm().maxCoeff();
  const double rmax_sq = rmax * rmax;
  return (1.0 + theta2) * (mu_sq + rmax_sq) +
         (data.n() - 1) * (mu_sq + 2.0 * theta2 * mu * rmax + theta1 * rmax_sq);
}

}  // namespace leakylab
