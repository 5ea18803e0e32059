#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "leakylab/harness.hpp"
#include "leakylab/rng.hpp"

namespace py = pybind11;
using namespace leakylab;

namespace {

MixtureSpec spec_from_pydict(const py::dict& d) {
  nlohmann::json j = nlohmann::json::parse(
      py::str(py::module_::import("json").attr("dumps")(d)).cast<std::string>());
  return MixtureSpec::from_json(j);
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "leaky-ReLU two-layer mixture-classification laboratory";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DegenerateData>(m, "DegenerateDataError");

  py::class_<SigmaSpec>(m, "SigmaSpec")
      .def_static("identity", &SigmaSpec::identity)
      .def_static("diagonal", &SigmaSpec::diagonal, py::arg("values"))
      .def_static("spiked", &SigmaSpec::spiked, py::arg("base"), py::arg("direction"),
                  py::arg("magnitude"))
      .def("trace", &SigmaSpec::trace, py::arg("p"))
      .def("fro", &SigmaSpec::fro, py::arg("p"))
      .def("op", &SigmaSpec::op, py::arg("p"))
      .def("beta_min", &SigmaSpec::beta_min, py::arg("p"));

  py::class_<NoiseLaw>(m, "NoiseLaw")
      .def_static("gaussian", &NoiseLaw::gaussian)
      .def_static("rademacher", &NoiseLaw::rademacher)
      .def_static("poly_tail", &NoiseLaw::poly_tail, py::arg("r"), py::arg("base_df"))
      .def("psi2", &NoiseLaw::psi2)
      .def("r_moment", &NoiseLaw::r_moment);

  py::class_<MixtureSpec>(m, "MixtureSpec")
      .def(py::init())
      .def_readwrite("p", &MixtureSpec::p)
      .def_readwrite("n", &MixtureSpec::n)
      .def_readwrite("mu", &MixtureSpec::mu)
      .def_readwrite("sigma_spec", &MixtureSpec::sigma_spec)
      .def_readwrite("noise_law", &MixtureSpec::noise_law)
      .def_readwrite("seed", &MixtureSpec::seed)
      .def_static("from_dict", &spec_from_pydict)
      .def("to_dict", [](const MixtureSpec& s) { return json_to_py(s.to_json()); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("X", &Dataset::X)
      .def_readonly("y", &Dataset::y)
      .def_readonly("Z", &Dataset::Z)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("n_plus", &Dataset::n_plus);

  m.def("generate", &generate, py::arg("spec"));
  m.def("data_functionals", [](const MixtureSpec& s) {
    const auto f = data_functionals(s);
    return py::dict(py::arg("norm_mu_sq") = f.norm_mu_sq,
                    py::arg("trace_sigma") = f.trace_sigma,
                    py::arg("fro_sigma") = f.fro_sigma,
                    py::arg("op_sigma") = f.op_sigma,
                    py::arg("sigma_half_mu_norm") = f.sigma_half_mu_norm);
  });

  py::class_<NetShape>(m, "NetShape")
      .def(py::init([](int m_, int j_plus, double gamma) {
             NetShape s{m_, j_plus, gamma};
             s.validate();
             return s;
           }),
           py::arg("m"), py::arg("j_plus"), py::arg("gamma"))
      .def_readonly("m", &NetShape::m)
      .def_readonly("j_plus", &NetShape::j_plus)
      .def_readonly("gamma", &NetShape::gamma)
      .def("q_plus", &NetShape::q_plus)
      .def("q_gamma", &NetShape::q_gamma);

  py::enum_<InitScheme>(m, "InitScheme")
      .value("uniform_sphere_scaled", InitScheme::uniform_sphere_scaled)
      .value("fixed_matrix", InitScheme::fixed_matrix);

  py::class_<NetworkState>(m, "NetworkState")
      .def_readwrite("W", &NetworkState::W)
      .def_readonly("signs", &NetworkState::signs)
      .def_readonly("gamma", &NetworkState::gamma)
      .def_readonly("step", &NetworkState::step);

  m.def(
      "init_network",
      [](int p, const NetShape& shape, InitScheme scheme, double sigma,
         std::uint64_t seed, py::object fixed) {
        if (fixed.is_none()) return init_network(p, shape, scheme, sigma, seed);
        const Eigen::MatrixXd W = fixed.cast<Eigen::MatrixXd>();
        return init_network(p, shape, scheme, sigma, seed, &W);
      },
      py::arg("p"), py::arg("shape"), py::arg("scheme"), py::arg("sigma"),
      py::arg("seed"), py::arg("fixed") = py::none());
  m.def("forward", &forward, py::arg("state"), py::arg("x"));
  m.def("margins", &margins, py::arg("state"), py::arg("data"));
  m.def("activation_report", [](const NetworkState& s, const Dataset& d) {
    const auto r = activation_report(s, d);
    return py::dict(py::arg("all_activated") = r.all_activated,
                    py::arg("violators") = r.violators);
  });
  m.def("empirical_loss", &empirical_loss, py::arg("state"), py::arg("data"));
  m.def("gd_step", &gd_step, py::arg("state"), py::arg("data"), py::arg("alpha"));
  m.def("sigma_max_tilde_bound", &sigma_max_tilde_bound, py::arg("data"),
        py::arg("theta1"), py::arg("theta2"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](double alpha, double sigma_init, long T) {
             TrainConfig c{alpha, sigma_init, T, InitScheme::uniform_sphere_scaled};
             c.validate();
             return c;
           }),
           py::arg("alpha"), py::arg("sigma_init"), py::arg("T"))
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("sigma_init", &TrainConfig::sigma_init)
      .def_readwrite("T", &TrainConfig::T);

  m.def(
      "train",
      [](const Dataset& data, const TrainConfig& cfg, NetworkState state0,
         py::object ref) {
        ReferenceDirection r;
        bool has_ref = false;
        if (!ref.is_none()) {
          py::sequence seq = ref.cast<py::sequence>();
          r.w_plus = seq[0].cast<Eigen::VectorXd>();
          r.w_minus = seq[1].cast<Eigen::VectorXd>();
          has_ref = true;
        }
        const auto res = train(data, cfg, std::move(state0), has_ref ? &r : nullptr);
        py::list steps;
        for (const auto& s : res.trace.steps)
          steps.append(py::dict(
              py::arg("t") = s.t, py::arg("loss") = s.loss,
              py::arg("all_activated") = s.all_activated,
              py::arg("min_margin") = s.min_margin,
              py::arg("loss_ratio_max") = s.loss_ratio_max,
              py::arg("cos_plus") = s.cos_plus, py::arg("cos_minus") = s.cos_minus));
        return py::make_tuple(steps, res.final_state);
      },
      py::arg("data"), py::arg("config"), py::arg("state0"),
      py::arg("reference") = py::none());

  m.def("measure_event_E", [](const Dataset& d) {
    const auto t = measure_event_E(d);
    return py::make_tuple(t.theta1, t.theta2);
  });
  m.def("measure_tilde_events", [](const Dataset& d, double R) {
    const auto e = measure_tilde_events(d, R);
    return py::make_tuple(e.eps1, e.eps2, e.eps3);
  });
  m.def("c_w_bound", &c_w_bound, py::arg("gamma"), py::arg("rmax"), py::arg("rmin"));
  m.def(
      "check_assumptions",
      [](const Dataset& d, const TrainConfig& cfg, const NetworkState& net) {
        const auto rep =
            check_assumptions(d, cfg, net, SlackParams::paper_defaults(net.gamma));
        return json_to_py(rep.to_json());
      },
      py::arg("data"), py::arg("config"), py::arg("net"));
  m.def("tilde_to_E_bridge", [](double e1, double e2, double R, double mu) {
    const auto t = tilde_to_E_bridge(e1, e2, R, mu);
    return py::make_tuple(t.theta1, t.theta2);
  });

  py::class_<BlockGram>(m, "BlockGram")
      .def_readonly("gram", &BlockGram::gram)
      .def_readonly("b_plus_diag", &BlockGram::b_plus_diag)
      .def_readonly("b_minus_diag", &BlockGram::b_minus_diag)
      .def_readonly("b_diag", &BlockGram::b_diag);

  py::class_<LimitDirection>(m, "LimitDirection")
      .def_readonly("w_plus", &LimitDirection::w_plus)
      .def_readonly("w_minus", &LimitDirection::w_minus)
      .def_readonly("w_bar", &LimitDirection::w_bar)
      .def_readonly("sv_certificate", &LimitDirection::sv_certificate)
      .def_readonly("k1", &LimitDirection::k1)
      .def_readonly("k2", &LimitDirection::k2)
      .def_readonly("d_value", &LimitDirection::d_value)
      .def("to_dict", [](const LimitDirection& l) { return json_to_py(l.to_json()); });

  m.def("build_block_gram", &build_block_gram, py::arg("data"), py::arg("gamma"),
        py::arg("shape"));
  m.def("min_norm_direction", &min_norm_direction, py::arg("data"), py::arg("bg"));
  m.def(
      "qp_oracle",
      [](const Dataset& d, double gamma, const NetShape& s) {
        return qp_oracle(d, gamma, s);
      },
      py::arg("data"), py::arg("gamma"), py::arg("shape"));
  m.def(
      "a_matrix_inverse_action",
      [](const Dataset& d, double R, double gamma, const NetShape& s) {
        const auto a = a_matrix_inverse_action(d, R, gamma, s);
        return py::make_tuple(a.row, a.d);
      },
      py::arg("data"), py::arg("R"), py::arg("gamma"), py::arg("shape"));
  m.def(
      "direction_diagnostics",
      [](const LimitDirection& ld, const Dataset& d, double R) {
        return json_to_py(direction_diagnostics(ld, d, R).to_json());
      },
      py::arg("ld"), py::arg("data"), py::arg("R"));
  m.def("decision_boundary_check", &decision_boundary_check, py::arg("ld"),
        py::arg("shape"), py::arg("probes"));
  m.def(
      "equivalence_failure_probe",
      [](double gamma, const NetShape& s, double mu_sq, double R, int n, int n_plus) {
        return json_to_py(
            equivalence_failure_probe(gamma, s, mu_sq, R, n, n_plus).to_json());
      },
      py::arg("gamma"), py::arg("shape"), py::arg("mu_norm_sq"), py::arg("R"),
      py::arg("n"), py::arg("n_plus"));

  m.def("kappa", &kappa, py::arg("t"));
  m.def("log_kappa", &log_kappa, py::arg("t"));
  m.def(
      "exact_gaussian_error",
      [](const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const SigmaSpec& s,
         int p) { return exact_gaussian_error(w, mu, s, p); },
      py::arg("w"), py::arg("mu"), py::arg("sigma"), py::arg("p"));
  m.def(
      "gaussian_bracket",
      [](const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const SigmaSpec& s,
         int p) {
        const auto b = gaussian_bracket(w, mu, s, p);
        return py::make_tuple(b.lower, b.upper);
      },
      py::arg("w"), py::arg("mu"), py::arg("sigma"), py::arg("p"));
  m.def(
      "mc_error",
      [](const Eigen::VectorXd& w, const MixtureSpec& spec, long n, std::uint64_t seed,
         int workers) {
        const auto r = mc_error(w, spec, n, seed, workers);
        return py::dict(py::arg("estimate") = r.estimate,
                        py::arg("stderr") = r.stderr_,
                        py::arg("ties") = r.tie_count,
                        py::arg("n_samples") = r.n_samples);
      },
      py::arg("w"), py::arg("spec"), py::arg("n_samples"), py::arg("seed"),
      py::arg("workers") = 1);
  m.def(
      "phase_summary",
      [](double n, double mu_sq, double R, double psi2) {
        const auto s = phase_summary(n, mu_sq, R, psi2);
        return py::dict(
            py::arg("regime") = (s.regime == SignalRegime::weak ? "weak" : "strong"),
            py::arg("exponent") = s.exponent);
      },
      py::arg("n"), py::arg("norm_mu_sq"), py::arg("R"), py::arg("psi2_norm"));
  m.def("bayes_error", &bayes_error, py::arg("mu"), py::arg("sigma"), py::arg("p"));

  m.def(
      "run_verify",
      [](const py::dict& cfg_dict, std::uint64_t seed) {
        nlohmann::json j = nlohmann::json::parse(
            py::str(py::module_::import("json").attr("dumps")(cfg_dict))
                .cast<std::string>());
        const auto cfg = ExperimentConfig::from_json(j);
        return json_to_py(run_verify(cfg, seed).to_json());
      },
      py::arg("config"), py::arg("seed"));
}
