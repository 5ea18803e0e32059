#include "leakylab/harness.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "leakylab/csvio.hpp"
#include "leakylab/rng.hpp"

namespace leakylab {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stdev_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? kNan : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fuse_flags(const std::vector<std::string>& v, bool* consistent) {
  if (v.empty()) {
    if (consistent) *consistent = true;
    return "none";
  }
  for (const auto& s : v)
    if (s != v.front()) {
      if (consistent) *consistent = false;
      return "mixed";
    }
  if (consistent) *consistent = true;
  return v.front();
}

std::string nan_or(double v) {
  return std::isnan(v) ? std::string() : csv::format_double(v);
}

std::string json_scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return csv::format_double(v.get<double>());
  return v.dump();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.mixture = MixtureSpec::from_json(j.at("mixture"));
  const auto& jn = j.at("network");
  c.network.m = jn.at("m").get<int>();
  c.network.gamma = jn.at("gamma").get<double>();
  if (jn.contains("j_plus")) {
    c.network.j_plus = jn.at("j_plus").get<int>();
  } else {
    const double q = jn.at("q_plus").get<double>();
    const double jp = q * c.network.m;
    if (std::abs(jp - std::round(jp)) > 1e-9)
      throw ConfigError("q_plus must equal j_plus/m for an integer j_plus");
    c.network.j_plus = static_cast<int>(std::llround(jp));
  }
  c.train = j.contains("train") ? TrainConfig::from_json(j.at("train"))
                                : TrainConfig{1e-3, 0.0, 0, InitScheme::uniform_sphere_scaled};
  if (j.contains("sweep")) {
    for (const auto& ja : j.at("sweep")) {
      SweepAxis axis;
      axis.path = ja.at("path").get<std::string>();
      for (const auto& v : ja.at("values")) axis.values.push_back(v);
      c.sweep.push_back(std::move(axis));
    }
  }
  c.trials = j.value("trials", 1);
  c.mc_samples = j.value("mc_samples", 10000L);
  c.workers = j.value("workers", 1);
  c.override_scale = j.value("override_scale", false);
  if (j.contains("outputs")) {
    const auto& jo = j.at("outputs");
    c.results_csv = jo.value("results_csv", c.results_csv);
    c.summary_json = jo.value("summary_json", c.summary_json);
    c.journal_file = jo.value("journal", c.journal_file);
  }
  c.validate();
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json js = nlohmann::json::array();
  for (const auto& a : sweep) js.push_back({{"path", a.path}, {"values", a.values}});
  return {{"mixture", mixture.to_json()},
          {"network",
           {{"m", network.m}, {"j_plus", network.j_plus}, {"gamma", network.gamma}}},
          {"train", train.to_json()},
          {"sweep", js},
          {"trials", trials},
          {"mc_samples", mc_samples},
          {"workers", workers},
          {"override_scale", override_scale},
          {"outputs",
           {{"results_csv", results_csv},
            {"summary_json", summary_json},
            {"journal", journal_file}}}};
}

void ExperimentConfig::validate() const {
  mixture.validate();
  network.validate();
  if (trials < 1) throw ConfigError("trials must be >= 1");
  for (const auto& a : sweep) {
    if (a.values.empty()) throw ConfigError("sweep axis with no values: " + a.path);
    ExperimentConfig probe = *this;
    probe.sweep.clear();
    apply_parameter(probe, a.path, a.values.front());  // throws on a bad path
  }
}

void apply_parameter(ExperimentConfig& cfg, const std::string& path,
                     const nlohmann::json& value) {
  if (path == "mixture/p") {
    const int p_new = value.get<int>();
    if (p_new < 1) throw ConfigError("mixture/p must be >= 1");
    // keep mu's direction when resizing; zero-pad or truncate
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(p_new);
    const int keep = std::min<int>(p_new, static_cast<int>(cfg.mixture.mu.size()));
    mu.head(keep) = cfg.mixture.mu.head(keep);
    cfg.mixture.p = p_new;
    cfg.mixture.mu = mu;
    if (cfg.mixture.sigma_spec.kind != SigmaSpec::Kind::identity)
      throw ConfigError("sweeping mixture/p requires identity covariance");
  } else if (path == "mixture/n") {
    cfg.mixture.n = value.get<int>();
  } else if (path == "mixture/seed") {
    cfg.mixture.seed = value.get<std::uint64_t>();
  } else if (path == "mixture/mu_norm_sq") {
    const double target = value.get<double>();
    if (target < 0.0) throw ConfigError("mu_norm_sq must be >= 0");
    const double cur = cfg.mixture.mu.norm();
    if (cur > 0.0) {
      cfg.mixture.mu *= std::sqrt(target) / cur;
    } else {
      cfg.mixture.mu = Eigen::VectorXd::Zero(cfg.mixture.p);
      cfg.mixture.mu[0] = std::sqrt(target);
    }
  } else if (path == "mixture/sigma/base") {
    cfg.mixture.sigma_spec.base = value.get<double>();
  } else if (path == "mixture/sigma/magnitude") {
    cfg.mixture.sigma_spec.magnitude = value.get<double>();
  } else if (path == "network/m") {
    cfg.network.m = value.get<int>();
  } else if (path == "network/j_plus") {
    cfg.network.j_plus = value.get<int>();
  } else if (path == "network/gamma") {
    cfg.network.gamma = value.get<double>();
  } else if (path == "train/alpha") {
    cfg.train.alpha = value.get<double>();
  } else if (path == "train/sigma_init") {
    cfg.train.sigma_init = value.get<double>();
  } else if (path == "train/T") {
    cfg.train.T = value.get<long>();
  } else if (path == "mc_samples") {
    cfg.mc_samples = value.get<long>();
  } else {
    throw ConfigError("unknown sweep parameter path: " + path);
  }
}

std::uint64_t trial_seed(std::uint64_t master_seed, long cell_index, int trial_index) {
  std::uint64_t k = CounterRng::derive_key(master_seed, stream_purpose::trial,
                                           static_cast<std::uint64_t>(cell_index));
  return CounterRng::derive_key(k, stream_purpose::trial,
                                static_cast<std::uint64_t>(trial_index));
}

void enforce_scale_guard(const MixtureSpec& spec, bool override_scale) {
  if (override_scale) return;
  if (spec.n > 512 || spec.p > 65536) {
    std::ostringstream os;
    os << "desk-scale guard: n=" << spec.n << ", p=" << spec.p
       << " exceeds (512, 65536); pass --override-scale to proceed";
    throw ConfigError(os.str());
  }
}

nlohmann::json CellResult::to_json() const {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& [k, v] : coordinates) coords.push_back({{"path", k}, {"value", v}});
  return {{"cell_index", cell_index},
          {"coordinates", coords},
          {"trials", trials},
          {"trials_ok", trials_ok},
          {"trial_errors", trial_errors},
          {"theorem1_condition", theorem1_condition},
          {"theorem2_condition", theorem2_condition},
          {"flags_consistent", flags_consistent},
          {"theta1_mean", theta1_mean},
          {"theta2_mean", theta2_mean},
          {"eps1_mean", eps1_mean},
          {"eps2_mean", eps2_mean},
          {"eps3_mean", eps3_mean},
          {"sv_certificate_min_mean", sv_certificate_min_mean},
          {"sv_certificate_min_std", sv_certificate_min_std},
          {"final_cos_plus_mean", final_cos_plus_mean},
          {"final_cos_plus_std", final_cos_plus_std},
          {"final_cos_minus_mean", final_cos_minus_mean},
          {"final_cos_minus_std", final_cos_minus_std},
          {"t_loss_mean", t_loss_mean},
          {"t_loss_std", t_loss_std},
          {"train_loss_mean", train_loss_mean},
          {"train_loss_std", train_loss_std},
          {"exact_error_mean", exact_error_mean},
          {"exact_error_std", exact_error_std},
          {"mc_error_mean", mc_error_mean},
          {"mc_error_std", mc_error_std},
          {"net_mc_error_mean", net_mc_error_mean},
          {"net_mc_error_std", net_mc_error_std},
          {"bayes_error", bayes_error_value},
          {"bracket1_pass_all", bracket1_pass_all},
          {"bracket2_pass_all", bracket2_pass_all}};
}

std::vector<std::string> CellResult::csv_header(const std::vector<SweepAxis>& axes) {
  std::vector<std::string> h{"cell"};
  for (const auto& a : axes) h.push_back(a.path);
  const char* metrics[] = {
      "trials_ok",          "theorem1_condition",     "theorem2_condition",
      "flags_consistent",   "theta1_mean",            "theta2_mean",
      "eps1_mean",          "eps2_mean",              "eps3_mean",
      "sv_certificate_min_mean", "sv_certificate_min_std",
      "final_cos_plus_mean", "final_cos_plus_std",
      "final_cos_minus_mean", "final_cos_minus_std",
      "t_loss_mean",        "t_loss_std",
      "train_loss_mean",    "train_loss_std",
      "exact_error_mean",   "exact_error_std",
      "mc_error_mean",      "mc_error_std",
      "net_mc_error_mean",  "net_mc_error_std",
      "bayes_error",        "bracket1_pass_all",      "bracket2_pass_all",
      "errors"};
  for (const char* m : metrics) h.push_back(m);
  return h;
}

std::vector<std::string> CellResult::csv_row() const {
  std::vector<std::string> r{std::to_string(cell_index)};
  for (const auto& [k, v] : coordinates) {
    (void)k;
    r.push_back(json_scalar_to_string(v));
  }
  r.push_back(std::to_string(trials_ok));
  r.push_back(theorem1_condition);
  r.push_back(theorem2_condition);
  r.push_back(flags_consistent ? "1" : "0");
  for (double v : {theta1_mean, theta2_mean, eps1_mean, eps2_mean, eps3_mean,
                   sv_certificate_min_mean, sv_certificate_min_std,
                   final_cos_plus_mean, final_cos_plus_std, final_cos_minus_mean,
                   final_cos_minus_std, t_loss_mean, t_loss_std, train_loss_mean,
                   train_loss_std, exact_error_mean, exact_error_std, mc_error_mean,
                   mc_error_std, net_mc_error_mean, net_mc_error_std,
                   bayes_error_value})
    r.push_back(nan_or(v));
  r.push_back(bracket1_pass_all ? "1" : "0");
  r.push_back(bracket2_pass_all ? "1" : "0");
  std::string errs;
  for (const auto& e : trial_errors) {
    if (!errs.empty()) errs += "; ";
    errs += e;
  }
  r.push_back(errs);
  return r;
}

McResult mc_error_network(const NetworkState& net, const MixtureSpec& spec,
                          long n_samples, std::uint64_t seed, int workers) {
  if (n_samples < 1000)
    throw ContractViolation("mc_error_network: n_samples must be >= 1000");
  if (workers < 1) workers = 1;

  std::vector<long> errors(static_cast<std::size_t>(workers), 0);
  std::vector<long> ties(static_cast<std::size_t>(workers), 0);

  auto run_worker = [&](int widx) {
    const long base = n_samples / workers;
    const long extra = widx < static_cast<int>(n_samples % workers) ? 1 : 0;
    auto rng = CounterRng::stream(seed, stream_purpose::mc,
                                  static_cast<std::uint64_t>(widx));
    long err = 0, tie = 0;
    Eigen::VectorXd xi(spec.p);
    for (long s = 0; s < base + extra; ++s) {
      const double y = rng.next_rademacher();
      for (int j = 0; j < spec.p; ++j) {
        switch (spec.noise_law.kind) {
          case NoiseLaw::Kind::gaussian: xi[j] = rng.next_gaussian(); break;
          case NoiseLaw::Kind::rademacher_subgauss: xi[j] = rng.next_rademacher(); break;
          case NoiseLaw::Kind::poly_tail:
            xi[j] = rng.next_student_t_standardized(spec.noise_law.base_df);
            break;
        }
      }
      const Eigen::VectorXd x = y * spec.mu + spec.sigma_spec.half_apply(xi);
      const double score = y * forward(net, x);
      if (score <= 0.0) {
        ++err;
        if (score == 0.0) ++tie;
      }
    }
    errors[static_cast<std::size_t>(widx)] = err;
    ties[static_cast<std::size_t>(widx)] = tie;
  };

  if (workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int widx = 0; widx < workers; ++widx) pool.emplace_back(run_worker, widx);
    for (auto& t : pool) t.join();
  }

  long err = 0, tie = 0;
  for (int widx = 0; widx < workers; ++widx) {
    err += errors[static_cast<std::size_t>(widx)];
    tie += ties[static_cast<std::size_t>(widx)];
  }
  McResult r;
  r.n_samples = n_samples;
  r.tie_count = tie;
  r.estimate = static_cast<double>(err) / n_samples;
  r.stderr_ = std::sqrt(r.estimate * (1.0 - r.estimate) / n_samples);
  return r;
}

CellResult run_cell(const ExperimentConfig& cfg, long cell_index,
                    const std::vector<std::pair<std::string, nlohmann::json>>& coords,
                    std::uint64_t master_seed) {
  CellResult res;
  res.cell_index = cell_index;
  res.coordinates = coords;
  res.trials = cfg.trials;
  res.theta1_mean = res.theta2_mean = kNan;
  res.eps1_mean = res.eps2_mean = res.eps3_mean = kNan;
  res.sv_certificate_min_mean = res.sv_certificate_min_std = kNan;
  res.final_cos_plus_mean = res.final_cos_plus_std = kNan;
  res.final_cos_minus_mean = res.final_cos_minus_std = kNan;
  res.t_loss_mean = res.t_loss_std = kNan;
  res.train_loss_mean = res.train_loss_std = kNan;
  res.exact_error_mean = res.exact_error_std = kNan;
  res.mc_error_mean = res.mc_error_std = kNan;
  res.net_mc_error_mean = res.net_mc_error_std = kNan;
  res.bayes_error_value = kNan;

  std::vector<double> theta1s, theta2s, eps1s, eps2s, eps3s, svmins, cps, cms,
      tls, fls, exacts, mcs, netmcs;
  std::vector<std::string> t1s, t2s;
  bool b1_all = true, b2_all = true;

  for (int trial = 0; trial < cfg.trials; ++trial) {
    try {
      const std::uint64_t seed = trial_seed(master_seed, cell_index, trial);
      MixtureSpec spec = cfg.mixture;
      spec.seed = seed;
      enforce_scale_guard(spec, cfg.override_scale);
      const Dataset data = generate(spec);

      NetworkState state0 =
          init_network(spec.p, cfg.network, cfg.train.init_scheme,
                       cfg.train.sigma_init, seed);
      const auto report = check_assumptions(
          data, cfg.train, state0, SlackParams::paper_defaults(cfg.network.gamma));
      t1s.push_back(to_string(report.theorem1_condition));
      t2s.push_back(to_string(report.theorem2_condition));
      theta1s.push_back(report.theta1);
      theta2s.push_back(report.theta2);
      eps1s.push_back(report.eps_tilde_1);
      eps2s.push_back(report.eps_tilde_2);
      eps3s.push_back(report.eps_tilde_3);

      const auto bg = build_block_gram(data, cfg.network.gamma, cfg.network);
      const auto ld = min_norm_direction(data, bg);
      svmins.push_back(ld.sv_certificate.minCoeff());
      const auto diag = direction_diagnostics(ld, data, report.R);
      b1_all = b1_all && diag.bracket1_pass;
      b2_all = b2_all && diag.bracket2_pass;

      if (cfg.train.T > 0) {
        const ReferenceDirection ref{ld.w_plus, ld.w_minus};
        const auto tr = train(data, cfg.train, state0, &ref);
        if (!tr.trace.steps.empty()) {
          const auto& last = tr.trace.steps.back();
          cps.push_back(last.cos_plus);
          cms.push_back(last.cos_minus);
          tls.push_back(static_cast<double>(last.t) * last.loss);
          fls.push_back(last.loss);
        }
        const auto net_mc = mc_error_network(
            tr.final_state, spec, cfg.mc_samples,
            CounterRng::derive_key(seed, stream_purpose::mc, 2));
        netmcs.push_back(net_mc.estimate);
      }

      if (spec.noise_law.kind == NoiseLaw::Kind::gaussian)
        exacts.push_back(
            exact_gaussian_error(ld.w_bar, spec.mu, spec.sigma_spec, spec.p));
      const auto mc = mc_error(ld.w_bar, spec, cfg.mc_samples,
                               CounterRng::derive_key(seed, stream_purpose::mc, 1));
      mcs.push_back(mc.estimate);
      res.bayes_error_value = bayes_error(spec.mu, spec.sigma_spec, spec.p);
      ++res.trials_ok;
    } catch (const std::exception& e) {
      res.trial_errors.push_back(std::string("trial ") + std::to_string(trial) + ": " +
                                 e.what());
    }
  }

  res.theorem1_condition = fuse_flags(t1s, &res.flags_consistent);
  bool c2 = true;
  res.theorem2_condition = fuse_flags(t2s, &c2);
  res.flags_consistent = res.flags_consistent && c2;
  res.theta1_mean = mean_of(theta1s);
  res.theta2_mean = mean_of(theta2s);
  res.eps1_mean = mean_of(eps1s);
  res.eps2_mean = mean_of(eps2s);
  res.eps3_mean = mean_of(eps3s);
  res.sv_certificate_min_mean = mean_of(svmins);
  res.sv_certificate_min_std = stdev_of(svmins);
  res.final_cos_plus_mean = mean_of(cps);
  res.final_cos_plus_std = stdev_of(cps);
  res.final_cos_minus_mean = mean_of(cms);
  res.final_cos_minus_std = stdev_of(cms);
  res.t_loss_mean = mean_of(tls);
  res.t_loss_std = stdev_of(tls);
  res.train_loss_mean = mean_of(fls);
  res.train_loss_std = stdev_of(fls);
  res.exact_error_mean = mean_of(exacts);
  res.exact_error_std = stdev_of(exacts);
  res.mc_error_mean = mean_of(mcs);
  res.mc_error_std = stdev_of(mcs);
  res.net_mc_error_mean = mean_of(netmcs);
  res.net_mc_error_std = stdev_of(netmcs);
  res.bracket1_pass_all = res.trials_ok > 0 && b1_all;
  res.bracket2_pass_all = res.trials_ok > 0 && b2_all;
  return res;
}

namespace {

std::vector<std::pair<std::string, nlohmann::json>> cell_coordinates(
    const std::vector<SweepAxis>& axes, long cell_index) {
  std::vector<std::pair<std::string, nlohmann::json>> coords;
  long rem = cell_index;
  // row-major: last axis varies fastest
  std::vector<long> idx(axes.size(), 0);
  for (long a = static_cast<long>(axes.size()) - 1; a >= 0; --a) {
    const long sz = static_cast<long>(axes[static_cast<std::size_t>(a)].values.size());
    idx[static_cast<std::size_t>(a)] = rem % sz;
    rem /= sz;
  }
  for (std::size_t a = 0; a < axes.size(); ++a)
    coords.emplace_back(axes[a].path, axes[a].values[static_cast<std::size_t>(idx[a])]);
  return coords;
}

}  // namespace

SweepTable run_sweep(const ExperimentConfig& cfg, std::uint64_t master_seed,
                     const std::string& out_dir, int workers_override) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);
  const fs::path csv_path = fs::path(out_dir) / cfg.results_csv;
  const fs::path journal_path = fs::path(out_dir) / cfg.journal_file;
  const fs::path summary_path = fs::path(out_dir) / cfg.summary_json;

  long total = 1;
  for (const auto& a : cfg.sweep) total *= static_cast<long>(a.values.size());

  // journal: one JSON line per completed cell
  std::map<long, std::pair<std::vector<std::string>, nlohmann::json>> done;
  if (fs::exists(journal_path)) {
    std::ifstream jin(journal_path);
    std::string line;
    while (std::getline(jin, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      done[j.at("cell").get<long>()] = {j.at("row").get<std::vector<std::string>>(),
                                        j.at("result")};
    }
  }

  std::ofstream csv_out(csv_path, std::ios::trunc);
  std::ofstream journal_out(journal_path, std::ios::app);
  if (!csv_out || !journal_out)
    throw std::runtime_error("cannot open sweep outputs in " + out_dir);
  csv::Writer writer(csv_out);
  const auto header = CellResult::csv_header(cfg.sweep);
  writer.row(header);

  SweepTable table;
  table.header = header;
  table.cells.resize(static_cast<std::size_t>(total));

  std::mutex mtx;
  std::condition_variable cv;
  std::map<long, std::pair<std::vector<std::string>, nlohmann::json>> pending;
  long next_to_write = 0;
  std::atomic<long> next_cell{0};
  std::atomic<bool> failed{false};
  std::string failure;

  auto drain = [&]() {
    // caller holds mtx
    while (true) {
      auto it = pending.find(next_to_write);
      if (it == pending.end()) break;
      writer.row(it->second.first);
      csv_out.flush();
      if (!done.count(next_to_write)) {
        journal_out << nlohmann::json{{"cell", next_to_write},
                                      {"row", it->second.first},
                                      {"result", it->second.second}}
                           .dump()
                    << "\n";
        journal_out.flush();
      }
      pending.erase(it);
      ++next_to_write;
    }
    if (!csv_out || !journal_out) {
      failed = true;
      failure = "sweep output write failed";
    }
  };

  auto work = [&]() {
    for (;;) {
      const long cell = next_cell.fetch_add(1);
      if (cell >= total || failed) return;
      try {
        const auto coords = cell_coordinates(cfg.sweep, cell);
        std::pair<std::vector<std::string>, nlohmann::json> out;
        if (auto it = done.find(cell); it != done.end()) {
          out = it->second;  // journaled cell: reuse the recorded row verbatim
          table.cells[static_cast<std::size_t>(cell)].cell_index = cell;
          table.cells[static_cast<std::size_t>(cell)].coordinates = coords;
        } else {
          ExperimentConfig resolved = cfg;
          resolved.sweep.clear();
          for (const auto& [path, value] : coords)
            apply_parameter(resolved, path, value);
          const CellResult r = run_cell(resolved, cell, coords, master_seed);
          out = {r.csv_row(), r.to_json()};
          table.cells[static_cast<std::size_t>(cell)] = r;
        }
        std::unique_lock<std::mutex> lock(mtx);
        pending[cell] = std::move(out);
        drain();
        cv.notify_all();
      } catch (const std::exception& e) {
        std::unique_lock<std::mutex> lock(mtx);
        failed = true;
        failure = e.what();
        cv.notify_all();
        return;
      }
    }
  };

  int workers = workers_override > 0 ? workers_override : cfg.workers;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(total)));
  {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failed) throw std::runtime_error("sweep aborted: " + failure);
  {
    std::unique_lock<std::mutex> lock(mtx);
    drain();
  }

  nlohmann::json summary{{"cells", total},
                         {"config", cfg.to_json()},
                         {"master_seed", master_seed},
                         {"results_csv", csv_path.string()}};
  std::ofstream sum_out(summary_path, std::ios::trunc);
  sum_out << summary.dump(2) << "\n";
  return table;
}

// ---------------------------------------------------------------------------
// verify: the deterministic invariant suite on one configured instance
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd materialize_x_tilde(const Dataset& data, const NetShape& shape) {
  const int n = data.n(), p = data.p(), m = shape.m;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Eigen::MatrixXd xt(n, static_cast<long>(m) * p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double a_j = (j < shape.j_plus ? 1.0 : -1.0) * inv_sqrt_m;
      const double z = a_j * data.y[i] >= 0.0 ? 1.0 : shape.gamma;
      xt.block(i, static_cast<long>(j) * p, 1, p) = a_j * z * data.X.row(i);
    }
  }
  return xt;
}

double spectral_norm(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return std::max(std::abs(es.eigenvalues().minCoeff()),
                  std::abs(es.eigenvalues().maxCoeff()));
}

}  // namespace

nlohmann::json VerifyOutcome::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return {{"checks", arr},
          {"invariants_ok", invariants_ok},
          {"regime_ok", regime_ok},
          {"exit_code", exit_code()}};
}

VerifyOutcome run_verify(const ExperimentConfig& cfg, std::uint64_t master_seed) {
  VerifyOutcome out;
  auto check = [&](const std::string& name, bool pass, const std::string& detail = "") {
    out.checks.push_back({name, pass, detail});
  };
  auto detail_num = [](double lhs, double rhs) {
    std::ostringstream os;
    os << "lhs=" << lhs << " rhs=" << rhs;
    return os.str();
  };

  const std::uint64_t seed = trial_seed(master_seed, 0, 0);
  MixtureSpec spec = cfg.mixture;
  spec.seed = seed;
  enforce_scale_guard(spec, cfg.override_scale);
  const Dataset data = generate(spec);
  const int n = data.n(), p = data.p();
  const NetShape& shape = cfg.network;
  const double gamma = shape.gamma;

  // dataset reconstruction is bit-exact
  {
    Eigen::MatrixXd resid = data.X;
    for (int i = 0; i < n; ++i) resid.row(i) -= data.y[i] * spec.mu.transpose();
    check("dataset: X - y mu^T == Z bit-exact", (resid.array() == data.Z.array()).all());
  }

  NetworkState state0 = init_network(p, shape, cfg.train.init_scheme,
                                     cfg.train.sigma_init, seed);
  const auto report =
      check_assumptions(data, cfg.train, state0, SlackParams::paper_defaults(gamma));

  const double mu_norm = spec.mu.norm();
  const double mu_sq = mu_norm * mu_norm;
  if (mu_norm > 0.0 && report.r_max > 0.0) {
    // inner-product and norm brackets implied by event E, checked exhaustively
    const double cross_bound =
        2.0 * report.theta2 * mu_norm * report.r_max +
        report.theta1 * report.r_max * report.r_max;
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        if (i == k) continue;
        const double ip = data.y[i] * data.y[k] * data.X.row(i).dot(data.X.row(k));
        worst = std::max(worst, std::abs(ip - mu_sq));
      }
    check("event E: inner-product bracket", worst <= cross_bound * (1 + 1e-12),
          detail_num(worst, cross_bound));
    double lo_ok = true, hi_ok = true;
    const double lo = (1.0 - report.theta2) * (mu_sq + report.r_min * report.r_min);
    const double hi = (1.0 + report.theta2) * (mu_sq + report.r_max * report.r_max);
    for (int i = 0; i < n; ++i) {
      const double nn = data.X.row(i).squaredNorm();
      lo_ok = lo_ok && nn >= lo * (1 - 1e-12);
      hi_ok = hi_ok && nn <= hi * (1 + 1e-12);
    }
    check("event E: norm bracket", lo_ok && hi_ok);

    if (report.eps_tilde_1 <= 0.5) {
      const auto bridged = tilde_to_E_bridge(report.eps_tilde_1, report.eps_tilde_2,
                                             report.R, mu_norm);
      check("bridge: theta1 <= eps~1/2", report.theta1 <= bridged.theta1 + 1e-12,
            detail_num(report.theta1, bridged.theta1));
      check("bridge: theta2 <= eps~2 sqrt(R)/(2||mu||)",
            report.theta2 <= bridged.theta2 + 1e-12,
            detail_num(report.theta2, bridged.theta2));
    }
  }

  const auto bg = build_block_gram(data, gamma, shape);
  if (static_cast<long>(shape.m) * p * n <= 8'000'000) {
    const Eigen::MatrixXd xt = materialize_x_tilde(data, shape);
    const Eigen::MatrixXd dense = xt * xt.transpose();
    const double rel = (dense - bg.gram).norm() / std::max(1e-300, dense.norm());
    check("block gram equals materialized X~X~^T", rel <= 1e-12,
          "rel=" + csv::format_double(rel));

    const double smax_sq = spectral_norm(dense);
    const double bound = sigma_max_tilde_bound(data, report.theta1, report.theta2);
    check("sigma_max^2(X~) bound", smax_sq <= bound * (1 + 1e-12),
          detail_num(smax_sq, bound));
  }

  LimitDirection ld;
  bool have_ld = false;
  try {
    ld = min_norm_direction(data, bg);
    have_ld = true;
  } catch (const DegenerateData& e) {
    check("min-norm direction computable", false, e.what());
  }

  if (have_ld) {
    if (ld.sv_certificate.minCoeff() > 0.0) {
      const auto qp = qp_oracle(data, gamma, shape);
      Eigen::VectorXd a(2 * p), b(2 * p);
      a << ld.w_plus, ld.w_minus;
      b << qp.w_plus, qp.w_minus;
      const double rel = (a - b).norm() / std::max(1e-300, a.norm());
      check("oracle equivalence: LS vs QP", rel <= 1e-6, "rel=" + csv::format_double(rel));

      double worst = 0.0;
      const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(shape.m));
      for (int i = 0; i < n; ++i) {
        const double c_i =
            data.y[i] > 0
                ? shape.j_plus * inv_sqrt_m * data.X.row(i).dot(ld.w_plus) -
                      gamma * shape.j_minus() * inv_sqrt_m * data.X.row(i).dot(ld.w_minus)
                : shape.j_minus() * inv_sqrt_m * data.X.row(i).dot(ld.w_minus) -
                      gamma * shape.j_plus * inv_sqrt_m * data.X.row(i).dot(ld.w_plus);
        worst = std::max(worst, std::abs(c_i - 1.0));
      }
      check("margins active at 1", worst <= 1e-8, "max|c-1|=" + csv::format_double(worst));
    }

    // closed-form (B^-1 y)^T A^-1 vs dense inversion
    {
      const double R = report.R;
      const auto act = a_matrix_inverse_action(data, R, gamma, shape);
      Eigen::VectorXd bp = Eigen::VectorXd(n), bm = Eigen::VectorXd(n), bd(n);
      for (int i = 0; i < n; ++i) {
        bp[i] = data.y[i] > 0 ? 1.0 : gamma;
        bm[i] = data.y[i] > 0 ? gamma : 1.0;
        bd[i] = data.y[i] > 0
                    ? std::sqrt(shape.q_plus() + gamma * gamma * shape.q_minus())
                    : std::sqrt(shape.q_minus() + gamma * gamma * shape.q_plus());
      }
      const Eigen::VectorXd bpy = bp.cwiseProduct(data.y);
      const Eigen::VectorXd bmy = bm.cwiseProduct(data.y);
      const Eigen::VectorXd bd_inv = bd.cwiseInverse();
      Eigen::MatrixXd A =
          mu_sq * bd_inv.asDiagonal() *
          (shape.q_plus() * bpy * bpy.transpose() + shape.q_minus() * bmy * bmy.transpose()) *
          bd_inv.asDiagonal();
      A.diagonal().array() += R;
      const Eigen::VectorXd rhs = bd_inv.cwiseProduct(data.y);
      const Eigen::VectorXd dense_row = A.ldlt().solve(rhs);
      const double rel = (dense_row - act.row).norm() / dense_row.norm();
      check("A^{-1} action closed form vs dense", rel <= 1e-10,
            "rel=" + csv::format_double(rel));

      if (shape.j_plus > 0 && shape.j_minus() > 0) {
        const auto bounds =
            d_scaled_bounds(mu_sq, R, gamma, shape, n, report.eps_tilde_3);
        check("d bounds", act.d_scaled >= bounds.lower * (1 - 1e-12) &&
                              act.d_scaled <= bounds.upper * (1 + 1e-12),
              detail_num(bounds.lower, bounds.upper));
      }

      // Gram approximation lemmas
      Eigen::MatrixXd approx = mu_sq * data.y * data.y.transpose();
      approx.diagonal().array() += R;
      const Eigen::MatrixXd XXt = data.X * data.X.transpose();
      const double gram_dev = spectral_norm(XXt - approx);
      check("gram approximation ||XX^T - (mu^2 yy^T + R I)|| <= eps~ R",
            gram_dev <= report.eps_tilde * R * (1 + 1e-12),
            detail_num(gram_dev, report.eps_tilde * R));

      const double qg = shape.q_gamma();
      if (report.eps_tilde <= qg / 2.0) {
        const Eigen::MatrixXd binv_gram_binv =
            bd.asDiagonal() * bg.gram.inverse() * bd.asDiagonal();
        const double dev = spectral_norm(binv_gram_binv - A.inverse());
        check("inverse approximation ||B G^-1 B - A^-1|| <= 2 eps~/(q_g R)",
              dev <= 2.0 * report.eps_tilde / (qg * R) * (1 + 1e-12),
              detail_num(dev, 2.0 * report.eps_tilde / (qg * R)));
      }

      const auto diag = direction_diagnostics(ld, data, R);
      check("K1/K2 bracket: ||w~||^2", diag.bracket1_pass,
            detail_num(diag.bracket1_lhs, diag.bracket1_rhs));
      check("K1/K2 bracket: <w~, mu>", diag.bracket2_pass,
            detail_num(diag.bracket2_lhs, diag.bracket2_rhs));
    }

    // decision boundary on gaussian probes
    {
      auto rng = CounterRng::stream(seed, stream_purpose::probes);
      Eigen::MatrixXd probes(200, p);
      for (int r = 0; r < 200; ++r)
        for (int c = 0; c < p; ++c) probes(r, c) = rng.next_gaussian();
      check("linear decision boundary on 200 probes",
            decision_boundary_check(ld, shape, probes));
    }
  }

  // perturbation lemma on synthetic pairs
  {
    auto rng = CounterRng::stream(seed, stream_purpose::probes, 1);
    bool ok = true;
    for (int rep = 0; rep < 20 && ok; ++rep) {
      const int dim = 16;
      Eigen::MatrixXd G(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) G(i, j) = rng.next_gaussian();
      Eigen::MatrixXd V = G * G.transpose() / dim;
      V.diagonal().array() += 1.0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V, Eigen::EigenvaluesOnly);
      const double L = es.eigenvalues().minCoeff();
      Eigen::MatrixXd E(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) E(i, j) = E(j, i) = rng.next_gaussian();
      const double s_target = 0.5 * rng.next_unit();
      E *= s_target * L / spectral_norm(E);
      const Eigen::MatrixXd U = V + E;
      const double s_actual = spectral_norm(U - V) / L;
      const double dev = spectral_norm(U.inverse() - V.inverse());
      ok = dev <= 2.0 * s_actual / L * (1 + 1e-10);
    }
    check("matrix-inverse perturbation on synthetic pairs", ok);
  }

  // gradient check at a scaled random state away from kinks
  {
    MixtureSpec small = spec;
    small.n = std::min(spec.n, 6);
    small.p = std::min(spec.p, 24);
    Eigen::VectorXd mu_small = Eigen::VectorXd::Zero(small.p);
    const int keep = std::min<int>(small.p, static_cast<int>(spec.mu.size()));
    mu_small.head(keep) = spec.mu.head(keep);
    small.mu = mu_small;
    if (small.sigma_spec.kind != SigmaSpec::Kind::identity)
      small.sigma_spec = SigmaSpec::identity();
    const Dataset dsmall = generate(small);
    const double xmax = dsmall.X.rowwise().norm().maxCoeff();
    NetShape sshape{4, 2, gamma};
    bool did = false, ok = true;
    for (std::uint64_t attempt = 0; attempt < 10 && !did; ++attempt) {
      NetworkState st = init_network(small.p, sshape, InitScheme::uniform_sphere_scaled,
                                     1.0 / (2.0 * xmax), seed + attempt);
      const Eigen::MatrixXd P = dsmall.X * st.W;
      if (P.array().abs().minCoeff() <= 1e-6) continue;
      did = true;
      const Eigen::MatrixXd g = loss_gradient(st, dsmall);
      for (int kk = 0; kk < small.p && ok; ++kk)
        for (int j = 0; j < sshape.m && ok; ++j) {
          const double h = 1e-6 * std::max(1.0, std::abs(st.W(kk, j)));
          NetworkState lo = st, hi = st;
          lo.W(kk, j) -= h;
          hi.W(kk, j) += h;
          const double fd =
              (empirical_loss(hi, dsmall) - empirical_loss(lo, dsmall)) / (2.0 * h);
          ok = std::abs(fd - g(kk, j)) <= 1e-5 * std::max(1.0, std::abs(g(kk, j)));
        }
    }
    if (did) check("gradient matches central differences", ok);
  }

  // MC vs exact on the gaussian instance
  if (have_ld && spec.noise_law.kind == NoiseLaw::Kind::gaussian &&
      ld.w_bar.dot(spec.mu) != 0.0) {
    const double exact = exact_gaussian_error(ld.w_bar, spec.mu, spec.sigma_spec, p);
    const auto mc = mc_error(ld.w_bar, spec, std::max(10000L, cfg.mc_samples),
                             CounterRng::derive_key(seed, stream_purpose::mc, 3));
    const double tol = 4.0 * std::max(mc.stderr_, 1e-12);
    check("MC matches exact gaussian error within 4 stderr",
          std::abs(mc.estimate - exact) <= tol, detail_num(mc.estimate, exact));
    const auto br = gaussian_bracket(ld.w_bar, spec.mu, spec.sigma_spec, p);
    check("gaussian bracket contains exact",
          br.lower <= exact * (1 + 1e-12) + 1e-300 && exact <= br.upper * (1 + 1e-12) + 1e-300,
          detail_num(br.lower, br.upper));
  }

  out.invariants_ok = true;
  for (const auto& c : out.checks) out.invariants_ok = out.invariants_ok && c.pass;
  out.regime_ok = report.theorem1_condition != Theorem1Condition::none ||
                  report.theorem2_condition != Theorem2Condition::none;
  return out;
}

}  // namespace leakylab
