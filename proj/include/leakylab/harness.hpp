#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakylab/limit.hpp"
#include "leakylab/mixture.hpp"
#include "leakylab/network.hpp"
#include "leakylab/regime.hpp"
#include "leakylab/risk.hpp"
#include "leakylab/trainer.hpp"

namespace leakylab {

struct SweepAxis {
  std::string path;  // slash path, e.g. "mixture/mu_norm_sq"
  std::vector<nlohmann::json> values;
};

struct ExperimentConfig {
  MixtureSpec mixture;
  NetShape network;
  TrainConfig train;
  std::vector<SweepAxis> sweep;
  int trials = 1;
  long mc_samples = 10000;
  int workers = 1;
  bool override_scale = false;
  std::string results_csv = "results.csv";
  std::string summary_json = "summary.json";
  std::string journal_file = "journal.jsonl";

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

// Assigns `value` at the slash path, e.g. "network/gamma". "mixture/mu_norm_sq"
// rescales mu to the given squared norm (axis e_1 when mu was zero).
void apply_parameter(ExperimentConfig& cfg, const std::string& path,
                     const nlohmann::json& value);

std::uint64_t trial_seed(std::uint64_t master_seed, long cell_index, int trial_index);

// Desk-scale guardrails; refuses n > 512 or p > 65536 without the override.
void enforce_scale_guard(const MixtureSpec& spec, bool override_scale);

struct CellResult {
  long cell_index = 0;
  std::vector<std::pair<std::string, nlohmann::json>> coordinates;
  int trials = 0;
  int trials_ok = 0;
  std::vector<std::string> trial_errors;

  std::string theorem1_condition = "none";
  std::string theorem2_condition = "none";
  bool flags_consistent = true;

  // mean / stdev over successful trials; NaN when absent
  double theta1_mean, theta2_mean;
  double eps1_mean, eps2_mean, eps3_mean;
  double sv_certificate_min_mean, sv_certificate_min_std;
  double final_cos_plus_mean, final_cos_plus_std;
  double final_cos_minus_mean, final_cos_minus_std;
  double t_loss_mean, t_loss_std;  // t * L(W^(t)) at the horizon
  double train_loss_mean, train_loss_std;
  double exact_error_mean, exact_error_std;
  double mc_error_mean, mc_error_std;
  double net_mc_error_mean, net_mc_error_std;
  double bayes_error_value;
  bool bracket1_pass_all = false;
  bool bracket2_pass_all = false;

  nlohmann::json to_json() const;
  static std::vector<std::string> csv_header(const std::vector<SweepAxis>& axes);
  std::vector<std::string> csv_row() const;
};

// One pipeline execution: generate -> regime check -> closed-form limit ->
// train against the reference -> error analysis, aggregated over trials.
CellResult run_cell(const ExperimentConfig& cfg, long cell_index,
                    const std::vector<std::pair<std::string, nlohmann::json>>& coords,
                    std::uint64_t master_seed);

struct SweepTable {
  std::vector<std::string> header;
  std::vector<CellResult> cells;
};

SweepTable run_sweep(const ExperimentConfig& cfg, std::uint64_t master_seed,
                     const std::string& out_dir, int workers_override = 0);

// MC error of the network's own decision rule, P(y f(x; W) <= 0).
McResult mc_error_network(const NetworkState& net, const MixtureSpec& spec,
                          long n_samples, std::uint64_t seed, int workers = 1);

struct VerifyCheck {
  std::string name;
  bool pass;
  std::string detail;
};

struct VerifyOutcome {
  std::vector<VerifyCheck> checks;
  bool invariants_ok = false;
  bool regime_ok = false;  // some Theorem 1 or Theorem 2 condition holds
  int exit_code() const { return invariants_ok ? (regime_ok ? 0 : 2) : 1; }
  nlohmann::json to_json() const;
};

// Full invariant suite on the configured instance.
VerifyOutcome run_verify(const ExperimentConfig& cfg, std::uint64_t master_seed);

}  // namespace leakylab
