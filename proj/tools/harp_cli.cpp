// harp: run replicated zeroth-order optimization experiments, print
// asymptotic predictions, and fit convergence rates to curve files.

#include "harp/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::pair<std::size_t, std::size_t> parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw harp::ConfigError("window must look like begin:end");
  try {
    return {std::stoull(text.substr(0, colon)), std::stoull(text.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw harp::ConfigError("window must look like begin:end with integer bounds");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hessian-aided random perturbation experiments"};
  app.require_subcommand(1);

  std::string config_path, output_dir, curves_path, window;
  std::vector<std::string> overrides;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run every configured algorithm over R replicates and write CSV outputs");
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("overrides", overrides, "section.key=value overrides");
  run->add_option("-o,--output", output_dir,
                  std::string("Output directory (default: config output_dir, then $") + harp::kOutputDirEnv + ")");
  run->add_flag("-q,--quiet", quiet, "Do not print the summary table");

  auto* predict = app.add_subcommand("predict", "Print asymptotic mean, covariance traces and complexity");
  predict->add_option("config", config_path, "Experiment config file")->required();
  predict->add_option("overrides", overrides, "section.key=value overrides");

  auto* rate = app.add_subcommand("rate-fit", "Fit log RMS distance against log iteration for each algorithm");
  rate->add_option("curves", curves_path, "curves.csv written by 'run'")->required();
  rate->add_option("-w,--window", window, "Iteration window begin:end (default: last decade)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      if (!output_dir.empty()) overrides.push_back("experiment.output_dir=" + output_dir);
      const harp::ExperimentConfig config = harp::load_config(config_path, overrides);
      const harp::ExperimentResult result = harp::run_experiment(config);
      harp::write_outputs(config, result);
      const auto rows = harp::summarize(result);
      if (!quiet) std::cout << harp::summary_table(rows) << "outputs in " << config.output_dir.string() << '\n';
      bool any_ok = false;
      for (const auto& r : rows) any_ok = any_ok || r.diverged < r.replicates;
      if (!any_ok) {
        std::cerr << "error: every replicate diverged\n";
        return kExitNumerical;
      }
      return 0;
    }
    if (*predict) {
      const harp::ExperimentConfig config = harp::load_config(config_path, overrides);
      std::cout << harp::predict_report(config);
      return 0;
    }
    if (*rate) {
      std::size_t begin = 0, end = 0;
      if (!window.empty()) std::tie(begin, end) = parse_window(window);
      std::cout << harp::rate_fit_report(harp::fit_curves_csv(curves_path, begin, end));
      return 0;
    }
  } catch (const harp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const harp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
