#pragma once

#include "harp/algorithms.hpp"
#include "harp/asymptotics.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace harp {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "HARP_OUTPUT_DIR";

struct ProblemSpec {
  std::string name = "skew_quartic";  // skew_quartic | quadratic | finite_sum
  NoiseMode noise = NoiseMode::iid;
  double sigma = 1.0;
  std::optional<Matrix> hessian;  // quadratic
  std::size_t components = 100;   // finite_sum I
  std::size_t subsample = 1;      // finite_sum J
  double kappa = 0.1;
  std::uint64_t problem_seed = 1;
  SyntheticComponentOptions synthetic;
};

struct AlgorithmSpec {
  std::string label;
  PerturbationKind kind = PerturbationKind::spsa;
  GainSchedule schedule;
  Rational alpha{301, 500};
  Rational gamma{101, 1000};
  int queries = 2;
  LoopOptions loop;
};

struct PredictSpec {
  AsymptoticsSpec gains;
  bool has_gains = false;
  double epsilon = 0.01;
  int q = 2;
  std::size_t mc_samples = 1000000;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<AlgorithmSpec> algorithms;
  RunConfig run;
  std::filesystem::path output_dir;
  std::size_t rate_begin = 0;  // 0: default window [K/10, K]
  std::size_t rate_end = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::size_t record_every = 1;
  PredictSpec predict;
};

/// Sectioned key = value text. Sections: [experiment], [predict] and one
/// [algorithm.<label>] per optimizer. `overrides` are "section.key=value"
/// strings; a bare "key=value" targets [experiment]. Errors carry line numbers.
ExperimentConfig parse_config(std::istream& in, const std::string& source, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

ProblemPtr build_problem(const ProblemSpec& spec, Index dimension);

struct ReplicateOutcome {
  std::size_t replicate = 0;
  bool diverged = false;
  std::optional<std::size_t> diverged_at;
  std::string message;
  RunRecord record;
  std::optional<std::pair<double, double>> terminal_components;
};

struct AlgorithmResult {
  AlgorithmSpec spec;
  std::vector<ReplicateOutcome> replicates;
};

struct ExperimentResult {
  ProblemPtr problem;
  std::vector<AlgorithmResult> algorithms;
};

/// Runs every (algorithm, replicate) pair on a worker pool. Results are stored
/// by index, so the outcome does not depend on scheduling.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SummaryRow {
  std::string algorithm;
  std::size_t replicates = 0;
  std::size_t diverged = 0;
  double mean_terminal_loss = 0.0;
  std::optional<double> sd_terminal_loss;
  std::optional<double> mean_terminal_l1;
  std::optional<double> mean_terminal_l2;
  double mean_terminal_normalized_distance = 0.0;
  std::uint64_t queries_per_replicate = 0;
};

struct CurveRow {
  std::string algorithm;
  std::size_t iteration = 0;
  std::uint64_t cumulative_queries = 0;
  double mean_normalized_distance = 0.0;
  double rms_distance = 0.0;
  std::size_t replicates_used = 0;
};

std::vector<SummaryRow> summarize(const ExperimentResult& result);
std::vector<CurveRow> aggregate_curves(const ExperimentResult& result);

/// 17 significant digits, so values round-trip exactly.
std::string format_number(double value);

/// Writes iterations_<label>.csv, replicates.csv, curves.csv, summary.csv and
/// rate_fit.txt into config.output_dir.
void write_outputs(const ExperimentConfig& config, const ExperimentResult& result);

/// Human-readable summary table.
std::string summary_table(const std::vector<SummaryRow>& rows);

/// Rate fits of rms_distance against iteration, one per algorithm in a curves CSV.
struct CurveFit {
  std::string algorithm;
  RateFit fit;
};
std::vector<CurveFit> fit_curves_csv(const std::filesystem::path& path, std::size_t begin = 0, std::size_t end = 0);
std::string rate_fit_report(const std::vector<CurveFit>& fits);

/// Asymptotic predictions for the configured problem and gains.
std::string predict_report(const ExperimentConfig& config);

}  // namespace harp
