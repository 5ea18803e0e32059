#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "leakylab/csvio.hpp"
#include "leakylab/harness.hpp"
#include "leakylab/rng.hpp"

namespace fs = std::filesystem;
using namespace leakylab;

namespace {

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return ExperimentConfig::from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  bool override_scale = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config_path, "experiment config (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config's)")
      ->each([&](const std::string&) { c.seed_set = true; });
  cmd->add_option("--workers", c.workers, "worker threads");
  cmd->add_flag("--override-scale", c.override_scale,
                "lift the n <= 512, p <= 65536 guard");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config_path);
  if (c.seed_set) cfg.mixture.seed = c.seed;
  if (c.workers > 0) cfg.workers = c.workers;
  if (c.override_scale) cfg.override_scale = true;
  return cfg;
}

std::uint64_t master_seed(const ExperimentConfig& cfg) { return cfg.mixture.seed; }

int cmd_generate(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  enforce_scale_guard(cfg.mixture, cfg.override_scale);
  const Dataset data = generate(cfg.mixture);
  fs::create_directories(c.out_dir);
  {
    std::ofstream out(fs::path(c.out_dir) / "dataset.csv", std::ios::trunc);
    data.to_csv(out);
  }
  write_text(fs::path(c.out_dir) / "mixture_spec.json",
             cfg.mixture.to_json().dump(2) + "\n");
  const auto f = data_functionals(cfg.mixture);
  std::cout << "n=" << data.n() << " p=" << data.p() << " n+=" << data.n_plus()
            << " ||mu||^2=" << f.norm_mu_sq << " tr(Sigma)=" << f.trace_sigma << "\n";
  return 0;
}

int cmd_check(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  enforce_scale_guard(cfg.mixture, cfg.override_scale);
  const std::uint64_t seed = trial_seed(master_seed(cfg), 0, 0);
  MixtureSpec spec = cfg.mixture;
  spec.seed = seed;
  const Dataset data = generate(spec);
  const NetworkState state0 = init_network(
      spec.p, cfg.network, cfg.train.init_scheme, cfg.train.sigma_init, seed);
  const auto report = check_assumptions(
      data, cfg.train, state0, SlackParams::paper_defaults(cfg.network.gamma));
  std::cout << report.table();
  write_text(fs::path(c.out_dir) / "regime_report.json",
             report.to_json().dump(2) + "\n");
  return 0;
}

int cmd_train(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  enforce_scale_guard(cfg.mixture, cfg.override_scale);
  const std::uint64_t seed = trial_seed(master_seed(cfg), 0, 0);
  MixtureSpec spec = cfg.mixture;
  spec.seed = seed;
  const Dataset data = generate(spec);
  NetworkState state0 = init_network(spec.p, cfg.network, cfg.train.init_scheme,
                                     cfg.train.sigma_init, seed);

  const auto bg = build_block_gram(data, cfg.network.gamma, cfg.network);
  std::unique_ptr<ReferenceDirection> ref;
  try {
    const auto ld = min_norm_direction(data, bg);
    ref = std::make_unique<ReferenceDirection>(ReferenceDirection{ld.w_plus, ld.w_minus});
  } catch (const DegenerateData&) {
    // train without a reference
  }
  const auto res = train(data, cfg.train, std::move(state0), ref.get());
  fs::create_directories(c.out_dir);
  {
    std::ofstream out(fs::path(c.out_dir) / "trace.csv", std::ios::trunc);
    res.trace.to_csv(out);
  }
  write_text(fs::path(c.out_dir) / "train_summary.json",
             res.trace.summary().dump(2) + "\n");
  std::cout << res.trace.summary().dump(2) << "\n";
  return 0;
}

int cmd_limit(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  enforce_scale_guard(cfg.mixture, cfg.override_scale);
  const std::uint64_t seed = trial_seed(master_seed(cfg), 0, 0);
  MixtureSpec spec = cfg.mixture;
  spec.seed = seed;
  const Dataset data = generate(spec);
  const auto bg = build_block_gram(data, cfg.network.gamma, cfg.network);
  const auto ld = min_norm_direction(data, bg);
  const double R = spec.sigma_spec.trace(spec.p);
  const auto diag = direction_diagnostics(ld, data, R);
  fs::create_directories(c.out_dir);
  nlohmann::json j = ld.to_json();
  j["diagnostics"] = diag.to_json();
  write_text(fs::path(c.out_dir) / "limit_direction.json", j.dump(2) + "\n");
  {
    std::ofstream out(fs::path(c.out_dir) / "sv_certificate.csv", std::ios::trunc);
    ld.certificate_to_csv(out);
  }
  std::cout << "sv_certificate_min=" << ld.sv_certificate.minCoeff()
            << " k1=" << ld.k1 << " k2=" << ld.k2 << "\n";
  return 0;
}

int cmd_error(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  enforce_scale_guard(cfg.mixture, cfg.override_scale);
  const std::uint64_t seed = trial_seed(master_seed(cfg), 0, 0);
  MixtureSpec spec = cfg.mixture;
  spec.seed = seed;
  const Dataset data = generate(spec);
  const auto bg = build_block_gram(data, cfg.network.gamma, cfg.network);
  const auto ld = min_norm_direction(data, bg);
  const auto rep = error_report(ld.w_bar, spec, cfg.mc_samples,
                                CounterRng::derive_key(seed, stream_purpose::mc, 1),
                                std::max(1, cfg.workers));
  fs::create_directories(c.out_dir);
  write_text(fs::path(c.out_dir) / "error_report.json", rep.to_json().dump(2) + "\n");
  {
    std::ofstream out(fs::path(c.out_dir) / "error_report.csv", std::ios::trunc);
    csv::Writer w(out);
    w.row(rep.csv_header());
    w.row(rep.csv_row());
  }
  std::cout << rep.to_json().dump(2) << "\n";
  return 0;
}

int cmd_sweep(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  run_sweep(cfg, master_seed(cfg), c.out_dir, c.workers);
  std::cout << "sweep complete; results in " << c.out_dir << "/" << cfg.results_csv
            << "\n";
  return 0;
}

int cmd_verify(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  const auto outcome = run_verify(cfg, master_seed(cfg));
  for (const auto& chk : outcome.checks)
    std::cout << (chk.pass ? "[pass] " : "[FAIL] ") << chk.name
              << (chk.detail.empty() ? "" : "  (" + chk.detail + ")") << "\n";
  std::cout << "invariants: " << (outcome.invariants_ok ? "ok" : "FAILED")
            << ", regime: " << (outcome.regime_ok ? "certified" : "no condition holds")
            << "\n";
  write_text(fs::path(c.out_dir) / "verify.json", outcome.to_json().dump(2) + "\n");
  return outcome.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leakylab: leaky-ReLU two-layer mixture-classification laboratory"};
  app.require_subcommand(1);

  Common c;
  auto* gen = app.add_subcommand("generate", "sample a dataset and write CSV");
  add_common(gen, c);
  auto* chk = app.add_subcommand("check", "measure events and assumption slacks");
  add_common(chk, c);
  auto* trn = app.add_subcommand("train", "run gradient descent with monitors");
  add_common(trn, c);
  auto* lim = app.add_subcommand("limit", "closed-form limit direction and certificate");
  add_common(lim, c);
  auto* err = app.add_subcommand("error", "classification error of the limit direction");
  add_common(err, c);
  auto* swp = app.add_subcommand("sweep", "run the configured parameter sweep");
  add_common(swp, c);
  auto* ver = app.add_subcommand("verify", "run the invariant suite on the instance");
  add_common(ver, c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(c);
    if (chk->parsed()) return cmd_check(c);
    if (trn->parsed()) return cmd_train(c);
    if (lim->parsed()) return cmd_limit(c);
    if (err->parsed()) return cmd_error(c);
    if (swp->parsed()) return cmd_sweep(c);
    if (ver->parsed()) return cmd_verify(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
