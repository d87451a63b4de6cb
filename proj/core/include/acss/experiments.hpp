#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace acss {

// Declarative description of one simulation study. signal_grid is pi0 for the
// mixture experiment and beta0 for the regression experiments.
struct ExperimentConfig {
  std::string experiment;  // mixture_gof | isotonic_regression | sparse_regression
  std::vector<double> signal_grid;
  std::vector<double> sigma_grid;
  int n_trials = 100;
  int m_copies = 100;
  double alpha = 0.05;
  std::vector<std::string> methods;  // reg_acss | plain_acss | oracle
  std::uint64_t seed = 1;
  std::string output_path = "out";

  void validate() const;     // throws std::invalid_argument with a reason
  void apply_paper_scale();  // restore the full trial counts and M = 300

  std::string to_json() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
};

struct TrialResult {
  long trial_id = 0;
  std::string method;
  double signal_level = 0.0;
  double sigma = 0.0;
  double pvalue = 1.0;
  bool ssosp_ok = false;
  std::optional<double> acceptance_rate;  // MCMC methods only
  double wall_time_ms = 0.0;              // not persisted; see manifest totals
};

struct SummaryRow {
  std::string method;
  double signal_level = 0.0;
  double sigma = 0.0;
  double rejection_rate = 0.0;
  double se = 0.0;
  int n_trials = 0;
};

struct SummaryTable {
  double alpha = 0.05;
  std::vector<SummaryRow> rows;
};

// One end-to-end trial: generate data, fit, sample copies, return the p-value.
// The trial seed alone determines the result.
TrialResult run_trial(const ExperimentConfig& config, const std::string& method, double signal,
                      double sigma, std::uint64_t trial_seed);

// Full grid sweep; writes trials.csv, summary.csv and manifest.json under
// config.output_path.
SummaryTable run_experiment(const ExperimentConfig& config);

// Histogram of the pvalue column of a trials.csv, as bin_low,bin_high,count.
void emit_histogram_data(const std::string& trials_csv_path, int bins, std::ostream& out);

// FNV-1a content hash used in the manifest.
std::string content_hash_hex(const std::string& text);

}  // namespace acss
