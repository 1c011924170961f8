#include "detsel/env.hpp"

#include <algorithm>
#include <cmath>

#include "detsel/error.hpp"
#include "detsel/io.hpp"

namespace detsel {

double cost(double t, double cap, double log_base) {
  if (!(t >= 0.0)) throw ContractViolation("cost(t) requires t >= 0");
  if (t <= 1.0) return t;
  return std::min(1.0 + std::log(t) / std::log(log_base), cap);
}

std::size_t Action::index(std::size_t num_detectors) const {
  switch (kind) {
    case Kind::kQuery:
      return detector;
    case Kind::kClassifyMalicious:
      return num_detectors;
    case Kind::kClassifyBenign:
      return num_detectors + 1;
  }
  return 0;
}

Action Action::from_index(std::size_t index, std::size_t num_detectors) {
  if (index < num_detectors) return query(index);
  if (index == num_detectors) return classify_malicious();
  if (index == num_detectors + 1) return classify_benign();
  throw ContractViolation("action index out of range");
}

std::size_t StateVector::num_queried() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](double v) { return v != kUnqueried; }));
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kTruePositive:
      return "TP";
    case Outcome::kTrueNegative:
      return "TN";
    case Outcome::kFalsePositive:
      return "FP";
    case Outcome::kFalseNegative:
      return "FN";
  }
  return "?";
}

bool outcome_correct(Outcome o) { return o == Outcome::kTruePositive || o == Outcome::kTrueNegative; }

Outcome outcome_of(Label label, Label decision) {
  if (label == Label::kMalicious) {
    return decision == Label::kMalicious ? Outcome::kTruePositive : Outcome::kFalseNegative;
  }
  return decision == Label::kMalicious ? Outcome::kFalsePositive : Outcome::kTrueNegative;
}

Outcome forced_incorrect_outcome(Label label) {
  return label == Label::kMalicious ? Outcome::kFalseNegative : Outcome::kFalsePositive;
}

std::string RewardEntry::to_string() const {
  if (kind == Kind::kFixed) return format_sig(value, 9);
  if (value == 1.0) return "C(t)";
  if (value == -1.0) return "-C(t)";
  return format_sig(value, 9) + "C(t)";
}

RewardScheme RewardScheme::builtin(int id) {
  using E = RewardEntry;
  switch (id) {
    case 1:
      return {E::time_scaled(1), E::time_scaled(1), E::time_scaled(-1), E::time_scaled(-1)};
    case 2:
      return {E::time_scaled(1), E::time_scaled(1), E::time_scaled(-10), E::time_scaled(-10)};
    case 3:
      return {E::fixed(1), E::fixed(1), E::time_scaled(-1), E::time_scaled(-1)};
    case 4:
      return {E::fixed(10), E::fixed(10), E::time_scaled(-1), E::time_scaled(-1)};
    case 5:
      return {E::fixed(100), E::fixed(100), E::time_scaled(-1), E::time_scaled(-1)};
    default:
      throw ValidationError("reward scheme id must be 1..5, got " + std::to_string(id));
  }
}

const RewardEntry& RewardScheme::entry(Outcome o) const {
  switch (o) {
    case Outcome::kTruePositive:
      return tp;
    case Outcome::kTrueNegative:
      return tn;
    case Outcome::kFalsePositive:
      return fp;
    case Outcome::kFalseNegative:
      return fn;
  }
  return tp;
}

DetectorEnv::DetectorEnv(std::vector<std::string> detector_names, std::vector<double> mean_times,
                         RewardScheme scheme, EnvConfig config)
    : names_(std::move(detector_names)),
      mean_times_(std::move(mean_times)),
      scheme_(scheme),
      config_(config) {
  if (names_.empty()) throw ValidationError("environment needs at least one detector");
  if (mean_times_.size() != names_.size()) throw ValidationError("one mean time per detector required");
  if (config_.max_steps < names_.size() + 1) throw ValidationError("max_steps must be >= K + 1");
  state_ = StateVector::initial(names_.size());
}

const StateVector& DetectorEnv::reset(const ScoreRecord& record) {
  if (record.scores.size() != names_.size() || record.times.size() != names_.size()) {
    throw ContractViolation("record dimension does not match the environment");
  }
  record_ = &record;
  state_ = StateVector::initial(names_.size());
  trace_ = EpisodeTrace{};
  trace_.record_id = record.file_id;
  done_ = false;
  return state_;
}

StepResult DetectorEnv::step(Action action) {
  if (record_ == nullptr) throw ContractViolation("step() before reset()");
  if (done_) throw ContractViolation("step() after episode end");
  const std::size_t k = names_.size();

  StepResult result;
  switch (action.kind) {
    case Action::Kind::kQuery: {
      const std::size_t d = action.detector;
      if (d >= k) throw ContractViolation("query of unknown detector");
      if (state_.queried(d)) {
        result.reward = scheme_.invalid_penalty;
        result.info.invalid = true;
      } else {
        state_.values[d] = record_->scores[d];
        trace_.elapsed_time += record_->times[d];
        trace_.reward_time += config_.use_mean_times_for_reward ? mean_times_[d] : record_->times[d];
        trace_.query_order.push_back(d);
      }
      break;
    }
    case Action::Kind::kClassifyMalicious:
    case Action::Kind::kClassifyBenign: {
      const Label decision =
          action.kind == Action::Kind::kClassifyMalicious ? Label::kMalicious : Label::kBenign;
      trace_.final_label = decision;
      result.done = true;
      if (state_.num_queried() == 0) {
        result.reward = scheme_.invalid_penalty;
        result.info.invalid = true;
        result.info.forced_terminal = true;
        result.info.outcome = forced_incorrect_outcome(record_->label);
      } else {
        const Outcome o = outcome_of(record_->label, decision);
        result.reward =
            scheme_.terminal_reward(o, cost(trace_.reward_time, config_.cost_cap, config_.cost_log_base));
        result.info.outcome = o;
      }
      break;
    }
  }

  if (!result.done && trace_.steps.size() + 1 >= config_.max_steps) {
    // Step cap: the capping step carries the penalty in place of its own reward.
    result.done = true;
    result.reward = scheme_.invalid_penalty;
    result.info.forced_terminal = true;
    result.info.outcome = forced_incorrect_outcome(record_->label);
  }

  trace_.steps.push_back({action, result.reward, result.info.invalid});
  trace_.total_return += result.reward;
  if (result.done) {
    done_ = true;
    trace_.outcome = result.info.outcome;
    trace_.forced_terminal = result.info.forced_terminal;
  }
  result.state = state_;
  return result;
}

std::vector<Action> DetectorEnv::valid_actions() const {
  if (!active()) throw ContractViolation("valid_actions() requires an active episode");
  std::vector<Action> out;
  for (std::size_t d = 0; d < names_.size(); ++d) {
    if (!state_.queried(d)) out.push_back(Action::query(d));
  }
  if (state_.num_queried() > 0) {
    out.push_back(Action::classify_malicious());
    out.push_back(Action::classify_benign());
  }
  return out;
}

std::string sequence_name(const std::vector<std::size_t>& order, const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += "+";
    out += names.at(order[i]);
  }
  return out.empty() ? "(none)" : out;
}

std::string trace_csv_header() { return "record_id,action_sequence,elapsed_time,decision,outcome,return"; }

std::string trace_csv_row(const EpisodeTrace& trace, const std::vector<std::string>& names) {
  std::string seq;
  for (auto d : trace.query_order) {
    seq += names.at(d);
    seq += "+";
  }
  std::string decision = "none";
  if (trace.final_label) decision = *trace.final_label == Label::kMalicious ? "M" : "B";
  if (trace.final_label) {
    seq += decision;
  } else if (!seq.empty()) {
    seq.pop_back();
  }
  return std::to_string(trace.record_id) + "," + seq + "," + format_fixed(trace.elapsed_time, 6) + "," +
         decision + "," + (trace.outcome ? outcome_name(*trace.outcome) : "none") + "," +
         format_fixed(trace.total_return, 6);
}

}  // namespace detsel
