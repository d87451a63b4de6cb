#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "acss/experiments.hpp"
#include "acss/rng.hpp"

using namespace acss;
namespace fs = std::filesystem;

namespace {

ExperimentConfig isotonic_config() {
  ExperimentConfig cfg;
  cfg.experiment = "isotonic_regression";
  cfg.signal_grid = {0.0};
  cfg.sigma_grid = {7.0};
  cfg.n_trials = 10;
  cfg.m_copies = 20;
  cfg.alpha = 0.1;
  cfg.methods = {"reg_acss", "oracle"};
  cfg.seed = 42;
  return cfg;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config validation") {
  ExperimentConfig cfg = isotonic_config();
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("unknown experiment") {
    cfg.experiment = "bogus";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("empty method list") {
    cfg.methods.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("unknown method") {
    cfg.methods = {"regular"};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("plain aCSS is not available for the mixture study") {
    cfg.experiment = "mixture_gof";
    cfg.methods = {"plain_acss"};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("alpha bounds") {
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("trial and copy counts") {
    cfg.n_trials = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.n_trials = 5;
    cfg.m_copies = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("grids must be nonempty and sigma positive") {
    cfg.sigma_grid.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.sigma_grid = {-1.0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("mixture pi0 range") {
    cfg.experiment = "mixture_gof";
    cfg.methods = {"reg_acss"};
    cfg.signal_grid = {1.5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("config JSON round trip and defaults") {
  ExperimentConfig cfg = isotonic_config();
  cfg.signal_grid = {0.0, 0.25};
  cfg.output_path = "some/dir";
  const ExperimentConfig back = ExperimentConfig::from_json_text(cfg.to_json());
  CHECK(back.experiment == cfg.experiment);
  CHECK(back.signal_grid == cfg.signal_grid);
  CHECK(back.sigma_grid == cfg.sigma_grid);
  CHECK(back.n_trials == cfg.n_trials);
  CHECK(back.m_copies == cfg.m_copies);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.methods == cfg.methods);
  CHECK(back.seed == cfg.seed);
  CHECK(back.output_path == cfg.output_path);

  const ExperimentConfig minimal =
      ExperimentConfig::from_json_text(R"({"experiment": "mixture_gof"})");
  CHECK(minimal.m_copies == 100);
  CHECK(minimal.sigma_grid == std::vector<double>{8.0});

  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{not json"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json_file("/nonexistent/path.json"),
                  std::invalid_argument);
}

TEST_CASE("apply_paper_scale restores the full-scale trial counts") {
  ExperimentConfig cfg = isotonic_config();
  cfg.apply_paper_scale();
  CHECK(cfg.m_copies == 300);
  CHECK(cfg.n_trials == 5000);
  cfg.experiment = "mixture_gof";
  cfg.apply_paper_scale();
  CHECK(cfg.n_trials == 500);
}

TEST_CASE("run_trial: oracle isotonic null p-values live on the grid") {
  const ExperimentConfig cfg = isotonic_config();
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const TrialResult tr = run_trial(cfg, "oracle", 0.0, 7.0, s);
    CHECK(tr.ssosp_ok);
    CHECK_FALSE(tr.acceptance_rate.has_value());
    const double scaled = tr.pvalue * (cfg.m_copies + 1);
    CHECK(std::abs(scaled - std::round(scaled)) <= 1e-9);
    CHECK(tr.pvalue > 0.0);
    CHECK(tr.pvalue <= 1.0);
  }
}

TEST_CASE("run_trial: reg aCSS on each experiment produces a finite p-value") {
  SUBCASE("isotonic") {
    const ExperimentConfig cfg = isotonic_config();
    const TrialResult tr = run_trial(cfg, "reg_acss", 0.0, 7.0, 3);
    CHECK(tr.ssosp_ok);
    CHECK(tr.pvalue > 0.0);
    CHECK(tr.pvalue <= 1.0);
  }
  SUBCASE("sparse, both regularized and ridge-only") {
    ExperimentConfig cfg = isotonic_config();
    cfg.experiment = "sparse_regression";
    for (const char* method : {"reg_acss", "plain_acss"}) {
      const TrialResult tr = run_trial(cfg, method, 0.0, 7.0, 4);
      CHECK(tr.pvalue > 0.0);
      CHECK(tr.pvalue <= 1.0);
    }
  }
  SUBCASE("mixture (MCMC path)") {
    ExperimentConfig cfg = isotonic_config();
    cfg.experiment = "mixture_gof";
    cfg.methods = {"reg_acss"};
    cfg.m_copies = 10;
    const TrialResult tr = run_trial(cfg, "reg_acss", 0.0, 8.0, 5);
    CHECK(tr.pvalue > 0.0);
    CHECK(tr.pvalue <= 1.0);
    if (tr.ssosp_ok) {
      REQUIRE(tr.acceptance_rate.has_value());
      CHECK(*tr.acceptance_rate >= 0.0);
      CHECK(*tr.acceptance_rate <= 1.0);
    } else {
      CHECK(tr.pvalue == 1.0);
    }
  }
  SUBCASE("unsupported method") {
    ExperimentConfig cfg = isotonic_config();
    cfg.experiment = "mixture_gof";
    CHECK_THROWS(run_trial(cfg, "plain_acss", 0.0, 8.0, 1));
  }
}

TEST_CASE("run_experiment is deterministic and writes consistent artifacts") {
  ExperimentConfig cfg = isotonic_config();
  const fs::path dir1 = fresh_dir("acss_test_run1");
  const fs::path dir2 = fresh_dir("acss_test_run2");

  cfg.output_path = dir1.string();
  const SummaryTable t1 = run_experiment(cfg);
  cfg.output_path = dir2.string();
  const SummaryTable t2 = run_experiment(cfg);

  const std::string trials1 = read_file(dir1 / "trials.csv");
  const std::string trials2 = read_file(dir2 / "trials.csv");
  CHECK(trials1 == trials2);
  CHECK(read_file(dir1 / "summary.csv") == read_file(dir2 / "summary.csv"));

  CHECK(t1.rows.size() == 2);  // one per method
  for (const SummaryRow& row : t1.rows) {
    CHECK(row.n_trials == cfg.n_trials);
    CHECK(row.rejection_rate >= 0.0);
    CHECK(row.rejection_rate <= 1.0);
    CHECK(row.se == doctest::Approx(std::sqrt(row.rejection_rate *
                                              (1.0 - row.rejection_rate) / row.n_trials)));
  }

  // manifest hash matches the persisted trials.csv
  const std::string manifest = read_file(dir1 / "manifest.json");
  CHECK(manifest.find(content_hash_hex(trials1)) != std::string::npos);

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("oracle rejection rate sits at the nominal level") {
  ExperimentConfig cfg = isotonic_config();
  cfg.methods = {"oracle"};
  cfg.n_trials = 200;
  cfg.m_copies = 19;
  const fs::path dir = fresh_dir("acss_test_oracle");
  cfg.output_path = dir.string();
  const SummaryTable table = run_experiment(cfg);
  REQUIRE(table.rows.size() == 1);
  const double rate = table.rows[0].rejection_rate;
  CHECK(std::abs(rate - cfg.alpha) <= 3.0 * std::sqrt(cfg.alpha * (1 - cfg.alpha) / 200.0));
  fs::remove_all(dir);
}

TEST_CASE("histogram emission") {
  const fs::path dir = fresh_dir("acss_test_hist");
  fs::create_directories(dir);
  const fs::path csv = dir / "trials.csv";

  SUBCASE("uniform p-values fill the bins evenly") {
    Rng rng(111);
    const int n = 5000;
    std::ofstream out(csv);
    out << "trial_id,method,signal_level,sigma,pvalue,ssosp_ok,acceptance_rate\n";
    for (int i = 0; i < n; ++i)
      out << i << ",oracle,0,1," << (rng.uniform() * 0.999999 + 1e-9) << ",true,\n";
    out.close();
    std::ostringstream hist;
    emit_histogram_data(csv.string(), 10, hist);
    std::istringstream in(hist.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin_low,bin_high,count");
    int bins = 0;
    long total = 0;
    const double sd = std::sqrt(n * 0.1 * 0.9);
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      const long count = std::stol(line.substr(last + 1));
      CHECK(std::abs(count - n / 10.0) <= 4.0 * sd);
      total += count;
      ++bins;
    }
    CHECK(bins == 10);
    CHECK(total == n);
  }
  SUBCASE("degenerate all-ones mass lands in the last bin") {
    std::ofstream out(csv);
    out << "trial_id,method,signal_level,sigma,pvalue,ssosp_ok,acceptance_rate\n";
    for (int i = 0; i < 50; ++i) out << i << ",reg_acss,0,1,1,false,\n";
    out.close();
    std::ostringstream hist;
    emit_histogram_data(csv.string(), 10, hist);
    std::istringstream in(hist.str());
    std::string line;
    std::getline(in, line);
    for (int b = 0; b < 10; ++b) {
      std::getline(in, line);
      const long count = std::stol(line.substr(line.rfind(',') + 1));
      CHECK(count == (b == 9 ? 50 : 0));
    }
  }
  SUBCASE("malformed rows are reported with their line number") {
    std::ofstream out(csv);
    out << "trial_id,method,signal_level,sigma,pvalue,ssosp_ok,acceptance_rate\n";
    out << "0,oracle,0,1,0.5,true,\n";
    out << "1,oracle,0,1,not_a_number,true,\n";
    out.close();
    try {
      std::ostringstream hist;
      emit_histogram_data(csv.string(), 10, hist);
      FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    CHECK_THROWS_AS(
        [&] {
          std::ostringstream hist;
          emit_histogram_data("/nonexistent.csv", 10, hist);
        }(),
        std::invalid_argument);
  }

  fs::remove_all(dir);
}

TEST_CASE("content_hash_hex is the 64-bit FNV-1a digest") {
  CHECK(content_hash_hex("") == "cbf29ce484222325");
  CHECK(content_hash_hex("a") == "af63dc4c8601ec8c");
  CHECK(content_hash_hex("hello") != content_hash_hex("hellp"));
}
