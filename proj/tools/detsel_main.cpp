#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "detsel/error.hpp"
#include "detsel/harness.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Cost-aware sequential malware-detector selection"};
  app.require_subcommand(1);

  std::string spec, out, corpus, config, checkpoint_dir, results;
  std::uint64_t seed = 7;
  int folds = 10;
  std::uint64_t fold_seed = 1;

  auto* gen = app.add_subcommand("gen", "Generate a calibrated synthetic corpus");
  gen->add_option("--spec", spec, "Calibration spec (built-in defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Corpus file to write")->required();
  gen->add_option("--seed", seed, "Generator seed");

  auto* baseline = app.add_subcommand("baseline", "Evaluate the 28 detector-combination baselines");
  baseline->add_option("--corpus", corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  baseline->add_option("--seed", seed, "Forest seed");
  baseline->add_option("--out", out, "Table file to write")->required();
  baseline->add_option("--folds", folds, "Number of folds");
  baseline->add_option("--fold-seed", fold_seed, "Fold assignment seed");

  auto* train = app.add_subcommand("train", "Train one agent per fold");
  train->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of trained folds");
  eval->add_option("--checkpoint-dir", checkpoint_dir, "Directory written by train")->required();
  eval->add_option("--corpus", corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Summarize the five scheme experiments");
  report->add_option("--results", results, "Directory holding one eval output per scheme")->required();
  report->add_option("--out", out, "Summary file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? detsel::kExitOk : detsel::kExitUsage;
  }

  if (*gen) detsel::cmd_gen(spec, out, seed, std::cout);
  if (*baseline) detsel::cmd_baseline(corpus, seed, out, std::cout, folds, fold_seed);
  if (*train) detsel::cmd_train(std::filesystem::path(config), std::cout);
  if (*eval) detsel::cmd_eval(checkpoint_dir, corpus, out, std::cout);
  if (*report) detsel::cmd_report(results, out, std::cout);
  return detsel::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const detsel::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return detsel::kExitUsage;
  } catch (const detsel::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return detsel::kExitValidation;
  } catch (const detsel::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return detsel::kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return detsel::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return detsel::kExitNumerical;
  }
}
