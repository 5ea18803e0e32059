#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "leakylab/harness.hpp"

using namespace leakylab;
namespace fs = std::filesystem;

namespace {

nlohmann::json base_config(int n, int p, double mu_sq) {
  return {{"mixture",
           {{"p", p},
            {"n", n},
            {"mu", {{"norm_sq", mu_sq}}},
            {"sigma_spec", {{"kind", "identity"}}},
            {"noise_law", {{"kind", "gaussian"}}},
            {"seed", 2024}}},
          {"network", {{"m", 4}, {"j_plus", 2}, {"gamma", 0.5}}},
          {"train",
           {{"alpha", 1e-4}, {"sigma_init", 1e-6}, {"T", 0}, {"init_scheme", "uniform_sphere_scaled"}}},
          {"trials", 1},
          {"mc_samples", 2000}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("experiment config: round-trip and q_plus validation") {
  auto j = base_config(8, 32, 4.0);
  const auto cfg = ExperimentConfig::from_json(j);
  CHECK(cfg.network.j_plus == 2);
  CHECK(cfg.mixture.mu.squaredNorm() == doctest::Approx(4.0));

  const auto round = ExperimentConfig::from_json(cfg.to_json());
  CHECK(round.network.m == cfg.network.m);
  CHECK(round.mc_samples == cfg.mc_samples);

  // q_plus accepted only when it is an exact integer fraction of m
  j["network"] = {{"m", 4}, {"q_plus", 0.75}, {"gamma", 0.5}};
  CHECK(ExperimentConfig::from_json(j).network.j_plus == 3);
  j["network"] = {{"m", 4}, {"q_plus", 0.3}, {"gamma", 0.5}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("apply_parameter: paths update the config") {
  auto cfg = ExperimentConfig::from_json(base_config(8, 32, 4.0));
  apply_parameter(cfg, "mixture/mu_norm_sq", 9.0);
  CHECK(cfg.mixture.mu.squaredNorm() == doctest::Approx(9.0));
  apply_parameter(cfg, "network/gamma", 0.25);
  CHECK(cfg.network.gamma == 0.25);
  apply_parameter(cfg, "train/alpha", 5e-3);
  CHECK(cfg.train.alpha == 5e-3);
  apply_parameter(cfg, "mixture/p", 64);
  CHECK(cfg.mixture.p == 64);
  CHECK(cfg.mixture.mu.size() == 64);
  CHECK(cfg.mixture.mu.squaredNorm() == doctest::Approx(9.0));
  CHECK_THROWS_AS(apply_parameter(cfg, "mixture/unknown", 1.0), ConfigError);
}

TEST_CASE("scale guard: refuses beyond desk scale without the override") {
  auto spec = testutil::gaussian_spec(513, 8, 0.0, 1);
  CHECK_THROWS_AS(enforce_scale_guard(spec, false), ConfigError);
  CHECK_NOTHROW(enforce_scale_guard(spec, true));
  auto spec2 = testutil::gaussian_spec(8, 65537, 0.0, 1);
  CHECK_THROWS_AS(enforce_scale_guard(spec2, false), ConfigError);
}

TEST_CASE("run_cell: regime flags only when T = 0") {
  const auto cfg = ExperimentConfig::from_json(base_config(8, 64, 4.0));
  const auto cell = run_cell(cfg, 0, {}, 42);
  CHECK(cell.trials_ok == 1);
  CHECK(cell.trial_errors.empty());
  CHECK(std::isnan(cell.final_cos_plus_mean));  // convergence metrics absent
  CHECK(std::isnan(cell.t_loss_mean));
  CHECK_FALSE(std::isnan(cell.mc_error_mean));
  CHECK_FALSE(std::isnan(cell.theta1_mean));
}

TEST_CASE("run_cell: identical seed twice is bit-identical") {
  const auto cfg = ExperimentConfig::from_json(base_config(6, 48, 2.0));
  const auto a = run_cell(cfg, 3, {}, 777);
  const auto b = run_cell(cfg, 3, {}, 777);
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("run_cell: stage errors recorded per trial, cell fails only if all do") {
  // n > m p makes the transformed gram singular for every trial
  auto j = base_config(8, 2, 0.0);
  j["network"] = {{"m", 2}, {"j_plus", 1}, {"gamma", 0.5}};
  j["trials"] = 2;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto cell = run_cell(cfg, 0, {}, 5);
  CHECK(cell.trials_ok == 0);
  CHECK(cell.trial_errors.size() == 2);
}

TEST_CASE("sweep: cartesian product and deterministic table") {
  auto j = base_config(6, 32, 1.0);
  j["sweep"] = nlohmann::json::array(
      {{{"path", "mixture/mu_norm_sq"}, {"values", {1.0, 4.0, 16.0}}},
       {{"path", "network/gamma"}, {"values", {0.25, 0.5, 0.75}}}});
  j["mc_samples"] = 1000;
  const auto cfg = ExperimentConfig::from_json(j);

  TempDir dir_a("leakylab_sweep_a");
  TempDir dir_b("leakylab_sweep_b");
  const auto table = run_sweep(cfg, 99, dir_a.path.string());
  CHECK(table.cells.size() == 9);

  run_sweep(cfg, 99, dir_b.path.string(), 2);  // different worker count
  const auto csv_a = read_file(dir_a.path / "results.csv");
  const auto csv_b = read_file(dir_b.path / "results.csv");
  CHECK(csv_a == csv_b);
  CHECK(csv_a.find("mixture/mu_norm_sq") != std::string::npos);

  // 9 cells + header
  long rows = 0;
  for (std::size_t pos = 0; (pos = csv_a.find("\r\n", pos)) != std::string::npos;
       pos += 2)
    ++rows;
  CHECK(rows == 10);
}

TEST_CASE("sweep: empty axis list runs a single cell") {
  const auto cfg = ExperimentConfig::from_json(base_config(6, 32, 1.0));
  TempDir dir("leakylab_sweep_single");
  const auto table = run_sweep(cfg, 5, dir.path.string());
  CHECK(table.cells.size() == 1);
}

TEST_CASE("sweep: journal resumption reproduces the identical table") {
  auto j = base_config(6, 32, 1.0);
  j["sweep"] = nlohmann::json::array(
      {{{"path", "mixture/mu_norm_sq"}, {"values", {1.0, 2.0, 4.0, 8.0}}}});
  j["mc_samples"] = 1000;
  const auto cfg = ExperimentConfig::from_json(j);

  TempDir full_dir("leakylab_sweep_full");
  run_sweep(cfg, 31, full_dir.path.string());
  const auto full_csv = read_file(full_dir.path / "results.csv");
  const auto journal = read_file(full_dir.path / "journal.jsonl");

  // simulate an interrupted run: keep only the first two journal lines
  TempDir resume_dir("leakylab_sweep_resume");
  {
    std::istringstream in(journal);
    std::ofstream out(resume_dir.path / "journal.jsonl");
    std::string line;
    for (int i = 0; i < 2 && std::getline(in, line); ++i) out << line << "\n";
  }
  run_sweep(cfg, 31, resume_dir.path.string());
  CHECK(read_file(resume_dir.path / "results.csv") == full_csv);
}

TEST_CASE("integration: scaled benign-overfitting cell interpolates with low error") {
  // Sigma = I, ||mu||^2 = n^2, p = 4 n^3 at n = 8: inside the qualitative
  // benign window; expect interpolation and near-bayes Monte Carlo error.
  const int n = 8;
  const int p = 4 * n * n * n;  // 2048
  auto j = base_config(n, p, static_cast<double>(n) * n);
  j["network"] = {{"m", 4}, {"j_plus", 2}, {"gamma", 0.5}};
  const double alpha = 1.0 / (8.0 * p);
  j["train"] = {{"alpha", alpha},
                {"sigma_init", 0.05 * 0.5 * alpha * std::sqrt(p / 4.0)},
                {"T", 4000L},
                {"init_scheme", "uniform_sphere_scaled"}};
  j["mc_samples"] = 20000;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto cell = run_cell(cfg, 0, {}, 20240101);
  REQUIRE(cell.trials_ok == 1);
  CHECK(cell.train_loss_mean < 1.0 / n);
  CHECK(cell.net_mc_error_mean <= cell.bayes_error_value + 0.05);
  CHECK(cell.mc_error_mean <= cell.bayes_error_value + 0.05);
  CHECK(cell.final_cos_plus_mean > 0.95);
  CHECK(cell.sv_certificate_min_mean > 0.0);
}

TEST_CASE("verify: invariants pass on a sane configuration") {
  auto j = base_config(8, 128, 4.0);
  j["mc_samples"] = 20000;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto outcome = run_verify(cfg, 11);
  for (const auto& c : outcome.checks) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.pass);
  }
  CHECK(outcome.invariants_ok);
  // exit code 2 when no theorem condition holds on the sampled instance
  if (!outcome.regime_ok) CHECK(outcome.exit_code() == 2);
}

TEST_CASE("verify: strong-signal instance certifies condition (i)") {
  auto j = base_config(16, 1024, 256.0);
  // alpha below the A3 threshold 1/(n mu^2 + Rmax^2), sigma tiny for A2
  j["train"] = {{"alpha", 1.5e-4}, {"sigma_init", 1e-7}, {"T", 0},
                {"init_scheme", "uniform_sphere_scaled"}};
  j["mc_samples"] = 2000;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto outcome = run_verify(cfg, 20250707);
  CHECK(outcome.invariants_ok);
  CHECK(outcome.regime_ok);
  CHECK(outcome.exit_code() == 0);
}
