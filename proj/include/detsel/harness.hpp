#ifndef DETSEL_HARNESS_HPP_
#define DETSEL_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "detsel/agent.hpp"
#include "detsel/baselines.hpp"
#include "detsel/corpus.hpp"
#include "detsel/env.hpp"

namespace detsel {

class KeyValueFile;

// "10", "-C(t)", "-10C(t)", "C(t)", "0.5*C(t)".
RewardEntry parse_reward_entry(const std::string& text);

// One reward-scheme experiment. Config file keys:
//
//   scheme            1..5 (required)
//   corpus            corpus file, relative to the config file (required)
//   out               output directory, relative to the config file (required)
//   folds             k for stratified k-fold (10)
//   fold_seed         fold assignment seed (1)
//   train_folds       comma-separated fold indices to train (all)
//   subsample         stratified subsample size, 0 = whole corpus (0)
//   subsample_seed    (1)
//   seed              training seed; fold f uses substream f (1)
//   episodes, hidden, learning_rate, rms_decay, rms_epsilon,
//   epsilon_start, epsilon_end, epsilon_horizon, replay_capacity,
//   replay_activation, replay_batch, truncation, entropy_beta,
//   max_grad_norm, convergence_window, convergence_threshold,
//   convergence_patience, log_every, max_steps, use_mean_times
//   advantage         return | critic
//   exploration_draw  valid | all
//   reward.tp, reward.tn, reward.fp, reward.fn, reward.invalid
//                     overrides of the scheme's entries
struct ExperimentConfig {
  int scheme_id = 5;
  std::filesystem::path corpus;
  std::filesystem::path out;
  int folds = 10;
  std::uint64_t fold_seed = 1;
  std::vector<int> train_folds;  // empty means all
  std::size_t subsample = 0;
  std::uint64_t subsample_seed = 1;
  TrainConfig train;

  static ExperimentConfig from_kv(const KeyValueFile& kv, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  std::vector<int> selected_folds() const;
};

// Identity of one trained fold, written next to its checkpoint.
struct FoldMeta {
  int fold = 0;
  int folds = 0;
  std::uint64_t fold_seed = 0;
  std::size_t subsample = 0;
  std::uint64_t subsample_seed = 0;
  std::size_t records = 0;
  std::string corpus_checksum;
  int scheme_id = 0;
  RewardScheme scheme;
  EnvConfig env;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  bool converged = false;

  std::string to_text() const;
  static FoldMeta parse(std::string_view text, const std::string& origin);
};

// Elapsed-time bucket edges (seconds) for the report histograms; the last
// bucket is open-ended.
const std::vector<double>& time_bucket_edges();

struct TimeBucket {
  double lo = 0.0;
  double hi = 0.0;  // +inf for the last bucket
  std::size_t files = 0;
  double share_pct = 0.0;
};

std::vector<TimeBucket> time_histogram(const std::vector<double>& elapsed);

// Command implementations. Each writes its outputs atomically and prints a
// human-readable summary to `log`. Errors surface as the exception types in
// error.hpp.
void cmd_gen(const std::filesystem::path& spec_path, const std::filesystem::path& out, std::uint64_t seed,
             std::ostream& log);
void cmd_baseline(const std::filesystem::path& corpus_path, std::uint64_t seed, const std::filesystem::path& out,
                  std::ostream& log, int folds = 10, std::uint64_t fold_seed = 1);
void cmd_train(const ExperimentConfig& config, std::ostream& log);
void cmd_train(const std::filesystem::path& config_path, std::ostream& log);
void cmd_eval(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& corpus_path,
              const std::filesystem::path& out, std::ostream& log);
void cmd_report(const std::filesystem::path& results_dir, const std::filesystem::path& out, std::ostream& log);

}  // namespace detsel

#endif  // DETSEL_HARNESS_HPP_
