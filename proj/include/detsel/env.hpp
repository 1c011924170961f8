#ifndef DETSEL_ENV_HPP_
#define DETSEL_ENV_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "detsel/corpus.hpp"

namespace detsel {

// Capped logarithmic cost of computing time:
//   C(t) = t                             for 0 <= t <= 1
//        = min(1 + log_base(t), cap)     for t > 1
// Throws ContractViolation for negative t.
double cost(double t, double cap = 6.0, double log_base = 2.0);

struct Action {
  enum class Kind : std::uint8_t { kQuery, kClassifyMalicious, kClassifyBenign };

  Kind kind = Kind::kQuery;
  std::size_t detector = 0;  // meaningful for kQuery only

  static Action query(std::size_t d) { return {Kind::kQuery, d}; }
  static Action classify_malicious() { return {Kind::kClassifyMalicious, 0}; }
  static Action classify_benign() { return {Kind::kClassifyBenign, 0}; }

  bool is_query() const { return kind == Kind::kQuery; }
  bool is_classify() const { return kind != Kind::kQuery; }

  // Flat index in [0, K+2): queries first, then ClassifyMalicious, ClassifyBenign.
  std::size_t index(std::size_t num_detectors) const;
  static Action from_index(std::size_t index, std::size_t num_detectors);

  bool operator==(const Action& o) const {
    return kind == o.kind && (kind != Kind::kQuery || detector == o.detector);
  }
};

inline std::size_t num_actions(std::size_t num_detectors) { return num_detectors + 2; }

// Observation: one slot per detector, -1 until that detector is queried.
struct StateVector {
  static constexpr double kUnqueried = -1.0;

  std::vector<double> values;

  static StateVector initial(std::size_t k) { return {std::vector<double>(k, kUnqueried)}; }
  std::size_t size() const { return values.size(); }
  bool queried(std::size_t d) const { return values[d] != kUnqueried; }
  std::size_t num_queried() const;
  bool operator==(const StateVector&) const = default;
};

enum class Outcome : std::uint8_t { kTruePositive, kTrueNegative, kFalsePositive, kFalseNegative };

const char* outcome_name(Outcome o);
bool outcome_correct(Outcome o);
Outcome outcome_of(Label label, Label decision);
// Outcome recorded when an episode ends without a legitimate classification.
Outcome forced_incorrect_outcome(Label label);

struct RewardEntry {
  enum class Kind : std::uint8_t { kFixed, kTimeScaled };

  Kind kind = Kind::kFixed;
  double value = 0.0;  // the fixed value, or the multiplier of C(t)

  static RewardEntry fixed(double v) { return {Kind::kFixed, v}; }
  static RewardEntry time_scaled(double m) { return {Kind::kTimeScaled, m}; }

  double evaluate(double cost_of_t) const { return kind == Kind::kFixed ? value : value * cost_of_t; }
  std::string to_string() const;
  bool operator==(const RewardEntry&) const = default;
};

struct RewardScheme {
  RewardEntry tp, tn, fp, fn;
  double invalid_penalty = -10000.0;

  // Experiments 1..5:
  //   1: ( C,  C,   -C,   -C)     2: ( C,  C, -10C, -10C)
  //   3: ( 1,  1,   -C,   -C)     4: (10, 10,   -C,   -C)
  //   5: (100, 100, -C,   -C)
  static RewardScheme builtin(int id);

  const RewardEntry& entry(Outcome o) const;
  double terminal_reward(Outcome o, double cost_of_t) const { return entry(o).evaluate(cost_of_t); }
  bool operator==(const RewardScheme&) const = default;
};

struct EnvConfig {
  bool use_mean_times_for_reward = true;
  std::size_t max_steps = 16;
  double cost_cap = 6.0;
  double cost_log_base = 2.0;
};

struct TraceStep {
  Action action;
  double reward = 0.0;
  bool invalid = false;
};

struct EpisodeTrace {
  std::uint64_t record_id = 0;
  std::vector<TraceStep> steps;
  std::vector<std::size_t> query_order;  // distinct detectors, in query order
  double elapsed_time = 0.0;             // sampled per-file latencies
  double reward_time = 0.0;              // t fed to C(t)
  std::optional<Label> final_label;      // the classification action taken, if any
  std::optional<Outcome> outcome;
  double total_return = 0.0;
  bool forced_terminal = false;  // premature classify or step cap

  std::size_t length() const { return steps.size(); }
  bool correct() const { return outcome && outcome_correct(*outcome); }
};

struct StepInfo {
  bool invalid = false;
  bool forced_terminal = false;
  std::optional<Outcome> outcome;
};

struct StepResult {
  StateVector state;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// The detector-selection MDP over one cached ScoreRecord at a time. The
// record passed to reset() must outlive the episode.
class DetectorEnv {
 public:
  DetectorEnv(std::vector<std::string> detector_names, std::vector<double> mean_times, RewardScheme scheme,
              EnvConfig config = {});

  const StateVector& reset(const ScoreRecord& record);
  StepResult step(Action action);

  // Unqueried detectors, plus both classifications once anything was queried.
  std::vector<Action> valid_actions() const;

  std::size_t num_detectors() const { return names_.size(); }
  std::size_t num_actions() const { return names_.size() + 2; }
  bool active() const { return record_ != nullptr && !done_; }
  const StateVector& state() const { return state_; }
  const EpisodeTrace& trace() const { return trace_; }
  const std::vector<std::string>& detector_names() const { return names_; }
  const std::vector<double>& mean_times() const { return mean_times_; }
  const RewardScheme& scheme() const { return scheme_; }
  const EnvConfig& config() const { return config_; }

 private:
  std::vector<std::string> names_;
  std::vector<double> mean_times_;
  RewardScheme scheme_;
  EnvConfig config_;
  const ScoreRecord* record_ = nullptr;
  StateVector state_;
  EpisodeTrace trace_;
  bool done_ = false;
};

// "pefile+byte3g" style name of a detector sequence.
std::string sequence_name(const std::vector<std::size_t>& order, const std::vector<std::string>& names);

// `record_id,action_sequence,elapsed_time,decision,outcome,return`
std::string trace_csv_header();
std::string trace_csv_row(const EpisodeTrace& trace, const std::vector<std::string>& names);

}  // namespace detsel

#endif  // DETSEL_ENV_HPP_
