#ifndef DETSEL_AGENT_HPP_
#define DETSEL_AGENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "detsel/corpus.hpp"
#include "detsel/env.hpp"
#include "detsel/mlp.hpp"
#include "detsel/replay_buffer.hpp"
#include "detsel/rmsprop.hpp"
#include "detsel/rng.hpp"

namespace detsel {

// Linear decay from `start` to `end` over `horizon` episodes, flat afterwards.
struct ExplorationSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t horizon = 50000;

  double epsilon(std::size_t episode) const;
};

enum class ExplorationDraw {
  kValidActions,  // the uniform epsilon draw picks among currently valid actions
  kAllActions,
};

enum class AdvantageForm {
  kReturn,  // A = G - V(s)
  kCritic,  // A = Q(s,a) - V(s)
};

struct LossConfig {
  AdvantageForm advantage = AdvantageForm::kReturn;
  double entropy_beta = 0.0;   // weight of the policy-entropy bonus
  double max_grad_norm = 1.0;  // per-network L2 clip; 0 disables
};

struct TrainConfig {
  RewardScheme scheme = RewardScheme::builtin(5);
  EnvConfig env;
  std::size_t total_episodes = 60000;
  std::uint64_t seed = 1;
  std::size_t hidden = 20;
  RmsPropConfig optimizer;
  ExplorationSchedule exploration;
  ExplorationDraw exploration_draw = ExplorationDraw::kValidActions;
  LossConfig loss;
  std::size_t replay_capacity = 5000;
  std::size_t replay_activation = 10000;  // episodes before replay updates begin
  std::size_t replay_batch = 16;          // traces per replay update
  double truncation = 10.0;               // importance-weight cap c
  // Stop once the mean return over consecutive windows moves by less than
  // `convergence_threshold` (relative) `convergence_patience` times in a row.
  // Only checked after the exploration horizon.
  std::size_t convergence_window = 2000;
  double convergence_threshold = 0.005;
  std::size_t convergence_patience = 3;
  std::size_t log_every = 1000;
};

// Action probabilities for a state; must be callable concurrently.
using PolicyFn = std::function<std::vector<double>(const StateVector&)>;

// Wraps an actor network. The network must outlive the returned function.
PolicyFn actor_policy(const Mlp& actor);

struct SelectedAction {
  Action action;
  std::size_t index = 0;
  double behavior_prob = 0.0;  // probability the epsilon-greedy behavior assigned to `index`
};

// Epsilon-greedy draw: with probability epsilon uniform over `mask` (all
// actions when empty), otherwise from `probs` renormalized over the mask.
SelectedAction select_action(std::span<const double> probs, double epsilon, std::span<const std::size_t> mask,
                             Rng& rng);
SelectedAction select_action(const Mlp& actor, const StateVector& state, double epsilon,
                             std::span<const std::size_t> mask, Rng& rng);
// As select_action, but only the epsilon branch is restricted to `explore`;
// the policy branch samples `probs` over all actions.
SelectedAction select_exploratory(std::span<const double> probs, double epsilon,
                                  std::span<const std::size_t> explore, Rng& rng);
// Highest-probability action in the mask (lowest index on ties).
std::size_t greedy_action(std::span<const double> probs, std::span<const std::size_t> mask);

enum class EpisodeMode {
  kExplore,  // epsilon-greedy sampling, unmasked policy draw (training)
  kGreedy,   // argmax over valid actions (evaluation)
};

struct EpisodeRun {
  EpisodeTrace trace;
  StoredTrace stored;
};

EpisodeRun run_episode(DetectorEnv& env, const ScoreRecord& record, const PolicyFn& policy, double epsilon,
                       EpisodeMode mode, Rng& rng, ExplorationDraw draw = ExplorationDraw::kValidActions);

// Undiscounted reward-to-go: G_i = sum_{j >= i} r_j.
std::vector<double> compute_returns(std::span<const double> rewards);
std::vector<double> compute_returns(const EpisodeTrace& trace);

struct UpdateDiagnostics {
  double critic_loss = 0.0;  // 0.5 * sum w (Q - G)^2
  double mean_advantage = 0.0;
  std::size_t steps = 0;    // steps that contributed
  std::size_t skipped = 0;  // steps with zero behavior probability
  bool aborted = false;
  std::string message;
};

// Critic: regress Q(s_i, a_i) toward G_i. Actor: descend
// -log pi(a_i|s_i) * A_i - beta * H(pi(.|s_i)), A_i held constant, with
// V(s) = sum_a pi(a|s) Q(s,a).
// Non-finite losses abort without touching parameters.
UpdateDiagnostics update_on_policy(Mlp& actor, Mlp& critic, RmsProp& actor_opt, RmsProp& critic_opt,
                                   const StoredTrace& trace, const LossConfig& loss = {});

// As update_on_policy, each step weighted by min(c, pi(a|s) / mu(a|s)).
// Gradients are averaged over the batch.
UpdateDiagnostics update_from_replay(Mlp& actor, Mlp& critic, RmsProp& actor_opt, RmsProp& critic_opt,
                                     std::span<const StoredTrace* const> batch, double truncation,
                                     const LossConfig& loss = {});

struct TrainedAgent {
  std::vector<std::string> detector_names;
  std::vector<double> mean_times;
  RewardScheme scheme;
  EnvConfig env;
  Mlp actor;
  Mlp critic;
};

struct CurvePoint {
  std::size_t episode = 0;
  double mean_return = 0.0;
  double epsilon = 0.0;
  double mean_time = 0.0;
  double accuracy = 0.0;  // percent
};

struct TrainResult {
  TrainedAgent agent;
  std::vector<CurvePoint> curve;
  std::size_t episodes = 0;
  bool converged = false;
  std::size_t replay_updates = 0;
  std::size_t skipped_steps = 0;
  std::size_t aborted_updates = 0;
};

// Throws NumericalError naming the episode if parameters become non-finite.
TrainResult train(const std::vector<ScoreRecord>& records, const std::vector<std::string>& detector_names,
                  const std::vector<double>& mean_times, const TrainConfig& config);

std::string curve_csv(const std::vector<CurvePoint>& curve);

struct SequenceShare {
  std::string sequence;  // "pefile+byte3g"
  std::size_t files = 0;
  double mean_time = 0.0;
  double share_pct = 0.0;
};

struct Metrics {
  std::size_t files = 0;
  double accuracy_pct = 0.0;
  double mean_time = 0.0;  // sampled per-file latencies
  double fp_pct = 0.0;     // of all files
  double fn_pct = 0.0;
  std::vector<SequenceShare> distribution;  // by share, descending
};

Metrics summarize(const std::vector<EpisodeTrace>& traces, const std::vector<std::string>& detector_names);

struct Evaluation {
  Metrics metrics;
  std::vector<EpisodeTrace> traces;  // one per record, input order
};

// Greedy, masked episode per record; parallel over records.
Evaluation evaluate(const PolicyFn& policy, std::span<const ScoreRecord> records,
                    const std::vector<std::string>& detector_names, const std::vector<double>& mean_times,
                    const RewardScheme& scheme, const EnvConfig& env_config = {});
Evaluation evaluate(const TrainedAgent& agent, std::span<const ScoreRecord> records);
// Single-threaded reference.
Evaluation evaluate_serial(const PolicyFn& policy, std::span<const ScoreRecord> records,
                           const std::vector<std::string>& detector_names, const std::vector<double>& mean_times,
                           const RewardScheme& scheme, const EnvConfig& env_config = {});

// Layer sizes then row-major parameters, 9 significant digits.
std::string checkpoint_text(const Mlp& actor, const Mlp& critic);
std::pair<Mlp, Mlp> parse_checkpoint(std::string_view text, const std::string& origin = "<checkpoint>");
void write_checkpoint(const Mlp& actor, const Mlp& critic, const std::filesystem::path& path);
std::pair<Mlp, Mlp> load_checkpoint(const std::filesystem::path& path);

}  // namespace detsel

#endif  // DETSEL_AGENT_HPP_
