#include "acss/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "acss/inference.hpp"
#include "acss/samplers.hpp"

namespace acss {

namespace {

constexpr int kMixtureN = 200;
constexpr double kMixtureLowerSd = 0.098;
constexpr int kIsotonicN = 100;
constexpr int kSparseN = 50;
constexpr int kSparseD = 100;
constexpr double kSparseRidge = 0.01;
constexpr double kSparseL1 = 2.0;
const std::vector<int> kTuneCandidates{1, 2, 5, 10, 20};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool known_experiment(const std::string& e) {
  return e == "mixture_gof" || e == "isotonic_regression" || e == "sparse_regression";
}

bool known_method(const std::string& m) {
  return m == "reg_acss" || m == "plain_acss" || m == "oracle";
}

Vector isotonic_theta0() {
  Vector theta(kIsotonicN);
  for (int i = 0; i < kIsotonicN; ++i) theta[i] = 0.1 * ((i / 10) + 1);
  return theta;
}

Vector mixture_theta0() {
  Vector theta(5);
  theta << 0.5, 0.4, 0.1, -0.4, 0.1;
  return theta;
}

// Statistics must be deterministic functions of the data within a trial, so
// every evaluation (observed and copies alike) reuses the same derived seed.
struct StatEvaluator {
  TestStatistic ts;
  std::uint64_t seed;

  double operator()(const Vector& x) const {
    Rng rng(seed);
    return evaluate_statistic(ts, x, rng);
  }
};

double pvalue_from_copies(const StatEvaluator& stat, const Vector& x,
                          const std::vector<Vector>& copies) {
  const double t_obs = stat(x);
  std::vector<double> tc;
  tc.reserve(copies.size());
  for (const Vector& c : copies) tc.push_back(stat(c));
  return compute_pvalue(t_obs, tc).value;
}

// Fit, certify, and sample copies; falls to the degenerate path on any SSOSP
// or solver failure.
void acss_copies(const EstimationProblem& problem, const Vector& x, int m_copies, bool mcmc,
                 int n, Rng& root, TrialResult& tr, std::vector<Vector>& copies) {
  Rng fit_rng = root.substream(3);
  const PerturbationVector w =
      draw_perturbation(problem.model.dim(), problem.sigma, fit_rng);

  FitResult res;
  try {
    res = fit(problem, x, w);
  } catch (const std::exception&) {
    res.converged = false;
  }
  if (!res.converged || !res.certificate.passes()) {
    tr.ssosp_ok = false;
    copies = degenerate_copies(x, m_copies).copies;
    return;
  }
  tr.ssosp_ok = true;
  const ConditioningState state = make_state(problem, res.certificate);

  if (!mcmc) {
    Rng srng = root.substream(5);
    copies = sample_exact_gaussian(state, m_copies, srng).copies;
    return;
  }

  Rng trng = root.substream(4);
  ProposalSpec prop;
  try {
    prop = tune_proposal_size(state, kTuneCandidates, n, trng);
  } catch (const std::exception&) {
    tr.ssosp_ok = false;
    copies = degenerate_copies(x, m_copies).copies;
    return;
  }
  const int l_steps = prop.abar > 0 ? chain_length(prop.s, prop.abar, n) : 2000;
  Rng mrng = root.substream(5);
  const CopySet cs = hub_and_spoke(state, x, m_copies, l_steps, prop, true, mrng);
  tr.acceptance_rate = cs.acceptance_rate;
  copies = cs.copies;
}

void mixture_trial(const ExperimentConfig& cfg, const std::string& method, double pi0,
                   double sigma, std::uint64_t trial_seed, TrialResult& tr) {
  Rng root(trial_seed);
  Rng data_rng = root.substream(1);
  Vector x(kMixtureN);
  for (int i = 0; i < kMixtureN; ++i) {
    if (data_rng.uniform() < pi0)
      x[i] = 0.1 * data_rng.normal();
    else
      x[i] = (data_rng.uniform() < 0.5 ? 0.4 : -0.4) + 0.1 * data_rng.normal();
  }

  const StatEvaluator stat{TestStatistic::kmeans_wcss_decrease(10), mix64(trial_seed ^ 0x7157)};
  const ModelSpec model = ModelSpec::gaussian_mixture2();
  std::vector<Vector> copies;

  if (method == "oracle") {
    Rng crng = root.substream(2);
    const Vector theta0 = mixture_theta0();
    for (int m = 0; m < cfg.m_copies; ++m)
      copies.push_back(model.simulate(theta0, kMixtureN, crng));
    tr.ssosp_ok = true;
  } else if (method == "reg_acss") {
    const EstimationProblem problem = EstimationProblem::constrained(
        model, mixture_sd_constraints(kMixtureLowerSd), sigma, SolverKind::projected_gradient);
    acss_copies(problem, x, cfg.m_copies, true, kMixtureN, root, tr, copies);
  } else {
    throw std::runtime_error("mixture_gof: method '" + method + "' unsupported");
  }
  tr.pvalue = pvalue_from_copies(stat, x, copies);
}

void isotonic_trial(const ExperimentConfig& cfg, const std::string& method, double beta0,
                    double sigma, std::uint64_t trial_seed, TrialResult& tr) {
  Rng root(trial_seed);
  Rng data_rng = root.substream(1);
  const Vector theta0 = isotonic_theta0();
  Vector x(kIsotonicN), y(kIsotonicN);
  for (int i = 0; i < kIsotonicN; ++i) x[i] = theta0[i] + data_rng.normal();
  for (int i = 0; i < kIsotonicN; ++i) y[i] = beta0 * x[i] + data_rng.normal();

  const StatEvaluator stat{TestStatistic::abs_correlation(y), mix64(trial_seed ^ 0x7157)};
  const ModelSpec model =
      ModelSpec::gaussian_linear(Matrix::Identity(kIsotonicN, kIsotonicN), 1.0, 0.0);
  std::vector<Vector> copies;

  if (method == "oracle") {
    Rng crng = root.substream(2);
    for (int m = 0; m < cfg.m_copies; ++m)
      copies.push_back(model.simulate(theta0, kIsotonicN, crng));
    tr.ssosp_ok = true;
  } else {
    const bool constrained = method == "reg_acss";
    const EstimationProblem problem = EstimationProblem::constrained(
        model,
        constrained ? builtin_constraints(ConstraintKind::monotone, kIsotonicN)
                    : ConstraintSet::none(kIsotonicN),
        sigma, constrained ? SolverKind::pava : SolverKind::activeset_qp);
    acss_copies(problem, x, cfg.m_copies, false, kIsotonicN, root, tr, copies);
  }
  tr.pvalue = pvalue_from_copies(stat, x, copies);
}

void sparse_trial(const ExperimentConfig& cfg, const std::string& method, double beta0,
                  double sigma, std::uint64_t trial_seed, TrialResult& tr) {
  Rng root(trial_seed);
  Rng data_rng = root.substream(1);
  Matrix z(kSparseN, kSparseD);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kSparseD));
  for (int i = 0; i < kSparseN; ++i)
    for (int j = 0; j < kSparseD; ++j) z(i, j) = scale * data_rng.normal();
  Vector theta0 = Vector::Zero(kSparseD);
  theta0.head(5).setConstant(5.0);
  const Vector mean = z * theta0;
  Vector x(kSparseN), y(kSparseN);
  for (int i = 0; i < kSparseN; ++i) x[i] = mean[i] + data_rng.normal();
  for (int i = 0; i < kSparseN; ++i)
    y[i] = beta0 * x[i] + z.row(i).head(5).sum() + data_rng.normal();

  const StatEvaluator stat{TestStatistic::elastic_net_coef(y, z), mix64(trial_seed ^ 0x7157)};
  const ModelSpec model = ModelSpec::gaussian_linear(z, 1.0, kSparseRidge);
  std::vector<Vector> copies;

  if (method == "oracle") {
    Rng crng = root.substream(2);
    for (int m = 0; m < cfg.m_copies; ++m)
      copies.push_back(model.simulate(theta0, kSparseN, crng));
    tr.ssosp_ok = true;
  } else if (method == "reg_acss") {
    const EstimationProblem problem = EstimationProblem::l1_penalized(model, kSparseL1, sigma);
    acss_copies(problem, x, cfg.m_copies, false, kSparseN, root, tr, copies);
  } else {
    // ridge-only baseline: unconstrained perturbed fit, g_hat = 0 exactly
    const EstimationProblem problem = EstimationProblem::constrained(
        model, ConstraintSet::none(kSparseD), sigma, SolverKind::activeset_qp);
    acss_copies(problem, x, cfg.m_copies, false, kSparseN, root, tr, copies);
  }
  tr.pvalue = pvalue_from_copies(stat, x, copies);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!known_experiment(experiment))
    throw std::invalid_argument("config: unknown experiment '" + experiment + "'");
  if (n_trials < 1) throw std::invalid_argument("config: n_trials must be >= 1");
  if (m_copies < 1) throw std::invalid_argument("config: m_copies must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config: alpha must be in (0,1)");
  if (signal_grid.empty() || sigma_grid.empty())
    throw std::invalid_argument("config: signal and sigma grids must be nonempty");
  if (methods.empty()) throw std::invalid_argument("config: method list is empty");
  for (const auto& m : methods) {
    if (!known_method(m)) throw std::invalid_argument("config: unknown method '" + m + "'");
    if (m == "plain_acss" && experiment == "mixture_gof")
      throw std::invalid_argument("config: plain_acss is unsupported for mixture_gof");
  }
  for (double s : sigma_grid)
    if (!(s > 0)) throw std::invalid_argument("config: sigma values must be > 0");
  if (experiment == "mixture_gof")
    for (double p : signal_grid)
      if (p < 0 || p > 1) throw std::invalid_argument("config: pi0 must be in [0,1]");
}

void ExperimentConfig::apply_paper_scale() {
  m_copies = 300;
  n_trials = experiment == "mixture_gof" ? 500 : 5000;
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["signal_grid"] = signal_grid;
  j["sigma_grid"] = sigma_grid;
  j["n_trials"] = n_trials;
  j["m_copies"] = m_copies;
  j["alpha"] = alpha;
  j["methods"] = methods;
  j["seed"] = seed;
  j["output_path"] = output_path;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.experiment = j.at("experiment").get<std::string>();
  cfg.signal_grid = j.value("signal_grid", std::vector<double>{0.0});
  cfg.sigma_grid =
      j.value("sigma_grid", std::vector<double>{cfg.experiment == "mixture_gof" ? 8.0 : 7.0});
  cfg.n_trials = j.value("n_trials", 100);
  cfg.m_copies = j.value("m_copies", 100);
  cfg.alpha = j.value("alpha", 0.05);
  cfg.methods = j.value("methods", std::vector<std::string>{"reg_acss", "oracle"});
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.output_path = j.value("output_path", std::string("out"));
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

TrialResult run_trial(const ExperimentConfig& config, const std::string& method, double signal,
                      double sigma, std::uint64_t trial_seed) {
  TrialResult tr;
  tr.method = method;
  tr.signal_level = signal;
  tr.sigma = sigma;
  const auto start = std::chrono::steady_clock::now();
  if (config.experiment == "mixture_gof")
    mixture_trial(config, method, signal, sigma, trial_seed, tr);
  else if (config.experiment == "isotonic_regression")
    isotonic_trial(config, method, signal, sigma, trial_seed, tr);
  else if (config.experiment == "sparse_regression")
    sparse_trial(config, method, signal, sigma, trial_seed, tr);
  else
    throw std::invalid_argument("run_trial: unknown experiment");
  tr.wall_time_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  return tr;
}

SummaryTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_path);

  struct Task {
    std::string method;
    double signal;
    double sigma;
    std::uint64_t trial_seed;
  };
  std::vector<Task> tasks;
  const Rng master(config.seed);
  for (size_t mi = 0; mi < config.methods.size(); ++mi)
    for (size_t si = 0; si < config.signal_grid.size(); ++si)
      for (size_t gi = 0; gi < config.sigma_grid.size(); ++gi)
        for (int t = 0; t < config.n_trials; ++t)
          tasks.push_back({config.methods[mi], config.signal_grid[si], config.sigma_grid[gi],
                           master.substream(mi + 1, si * 1000 + gi, t).seed()});

  std::vector<TrialResult> results(tasks.size());
  const unsigned n_threads =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(tasks.size())));
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size() || failed.load()) return;
      try {
        results[i] =
            run_trial(config, tasks[i].method, tasks[i].signal, tasks[i].sigma,
                      tasks[i].trial_seed);
        results[i].trial_id = static_cast<long>(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        error_message = e.what();
        failed.store(true);
        return;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw std::runtime_error("run_experiment: " + error_message);

  std::ostringstream trials;
  trials << "trial_id,method,signal_level,sigma,pvalue,ssosp_ok,acceptance_rate\n";
  for (const TrialResult& r : results) {
    trials << r.trial_id << ',' << r.method << ',' << fmt(r.signal_level) << ',' << fmt(r.sigma)
           << ',' << fmt(r.pvalue) << ',' << (r.ssosp_ok ? "true" : "false") << ','
           << (r.acceptance_rate ? fmt(*r.acceptance_rate) : std::string()) << '\n';
  }

  SummaryTable table;
  table.alpha = config.alpha;
  for (const auto& m : config.methods)
    for (double s : config.signal_grid)
      for (double g : config.sigma_grid) {
        int n = 0, rejected = 0;
        for (const TrialResult& r : results)
          if (r.method == m && r.signal_level == s && r.sigma == g) {
            ++n;
            if (r.pvalue <= config.alpha) ++rejected;
          }
        const double rate = n > 0 ? static_cast<double>(rejected) / n : 0.0;
        table.rows.push_back({m, s, g, rate, n > 0 ? std::sqrt(rate * (1.0 - rate) / n) : 0.0, n});
      }

  std::ostringstream summary;
  summary << "method,signal_level,sigma,rejection_rate,se,n_trials\n";
  for (const SummaryRow& r : table.rows)
    summary << r.method << ',' << fmt(r.signal_level) << ',' << fmt(r.sigma) << ','
            << fmt(r.rejection_rate) << ',' << fmt(r.se) << ',' << r.n_trials << '\n';

  double total_ms = 0.0;
  for (const TrialResult& r : results) total_ms += r.wall_time_ms;

  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(config.to_json());
  manifest["trials_csv_hash"] = content_hash_hex(trials.str());
  manifest["summary_csv_hash"] = content_hash_hex(summary.str());
  manifest["n_results"] = results.size();
  manifest["total_trial_wall_time_ms"] = total_ms;

  const std::filesystem::path dir(config.output_path);
  const auto write_file = [&](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("run_experiment: cannot write " + p.string());
    out << body;
    if (!out) throw std::runtime_error("run_experiment: short write to " + p.string());
  };
  write_file(dir / "trials.csv", trials.str());
  write_file(dir / "summary.csv", summary.str());
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return table;
}

void emit_histogram_data(const std::string& trials_csv_path, int bins, std::ostream& out) {
  if (bins < 1) throw std::invalid_argument("emit_histogram_data: bins must be >= 1");
  std::ifstream in(trials_csv_path);
  if (!in) throw std::invalid_argument("emit_histogram_data: cannot open " + trials_csv_path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(trials_csv_path + ":1: empty file");
  int pv_col = -1;
  {
    std::stringstream header(line);
    std::string field;
    for (int col = 0; std::getline(header, field, ','); ++col)
      if (field == "pvalue") pv_col = col;
  }
  if (pv_col < 0) throw std::runtime_error(trials_csv_path + ":1: no pvalue column");

  std::vector<long> counts(bins, 0);
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    int col = 0;
    bool found = false;
    while (std::getline(row, field, ',')) {
      if (col++ == pv_col) {
        found = true;
        break;
      }
    }
    double p = 0.0;
    size_t used = 0;
    try {
      p = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (!found || used != field.size() || !(p > 0.0) || p > 1.0)
      throw std::runtime_error(trials_csv_path + ":" + std::to_string(lineno) +
                               ": malformed pvalue field");
    // bins over (0, 1]: bin j covers (j/bins, (j+1)/bins]
    const int j = std::min(bins - 1, static_cast<int>(std::ceil(p * bins)) - 1);
    ++counts[std::max(j, 0)];
  }

  out << "bin_low,bin_high,count\n";
  for (int j = 0; j < bins; ++j)
    out << fmt(static_cast<double>(j) / bins) << ',' << fmt(static_cast<double>(j + 1) / bins)
        << ',' << counts[j] << '\n';
}

std::string content_hash_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace acss
