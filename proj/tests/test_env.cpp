#include <cmath>

#include "detsel/env.hpp"
#include "detsel/error.hpp"
#include "doctest.h"

using namespace detsel;

namespace {

const std::vector<std::string> kNames = {"manalyze", "pefile", "byte3g", "opcode2g"};
const std::vector<double> kMeans = {0.75, 0.70, 3.99, 44.29};

ScoreRecord record(Label label) { return {1, label, {0.9, 0.1, 0.8, 0.3}, {0.8, 0.6, 4.1, 43.0}}; }

DetectorEnv make_env(int scheme, EnvConfig config = {}) {
  return DetectorEnv(kNames, kMeans, RewardScheme::builtin(scheme), config);
}

}  // namespace

TEST_CASE("cost examples") {
  CHECK(cost(0.0) == 0.0);
  CHECK(cost(0.5) == 0.5);
  CHECK(cost(1.0) == 1.0);
  CHECK(cost(2.0) == doctest::Approx(2.0));
  CHECK(cost(4.0) == doctest::Approx(3.0));
  CHECK(cost(32.0) == doctest::Approx(6.0));
  CHECK(cost(48.28) == 6.0);
  CHECK(cost(1e9) == 6.0);
  CHECK_THROWS_AS(cost(-0.1), ContractViolation);
}

TEST_CASE("cost is continuous and nondecreasing") {
  double prev = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double t = 60.0 * i / 100000.0;
    const double c = cost(t);
    CHECK(c >= prev - 1e-12);
    CHECK(c <= 6.0);
    CHECK(c - prev <= 0.01);
    prev = c;
  }
}

TEST_CASE("action indices") {
  for (std::size_t i = 0; i < 6; ++i) CHECK(Action::from_index(i, 4).index(4) == i);
  CHECK(Action::classify_malicious().index(4) == 4);
  CHECK(Action::classify_benign().index(4) == 5);
  CHECK_THROWS_AS(Action::from_index(6, 4), ContractViolation);
}

TEST_CASE("reset gives the all-unqueried state") {
  auto env = make_env(5);
  const auto rec = record(Label::kMalicious);
  const auto& s = env.reset(rec);
  CHECK(s.values == std::vector<double>(4, -1.0));
  CHECK(env.active());
  CHECK(env.valid_actions().size() == 4);
}

TEST_CASE("one query then a correct benign call under scheme 3") {
  auto env = make_env(3);
  const auto rec = record(Label::kBenign);
  env.reset(rec);
  auto r = env.step(Action::query(1));
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
  CHECK(r.state.values == std::vector<double>{-1.0, 0.1, -1.0, -1.0});
  CHECK(env.valid_actions().size() == 5);
  r = env.step(Action::classify_benign());
  CHECK(r.done);
  CHECK(r.reward == 1.0);
  CHECK(*r.info.outcome == Outcome::kTrueNegative);
  CHECK(env.trace().elapsed_time == 0.6);
  CHECK(env.trace().reward_time == 0.70);
  CHECK_FALSE(env.active());
  CHECK_THROWS_AS(env.step(Action::query(0)), ContractViolation);
}

TEST_CASE("scheme 1 reward saturates at the cost cap") {
  auto env = make_env(1);
  const auto rec = record(Label::kMalicious);
  env.reset(rec);
  for (std::size_t d = 0; d < 4; ++d) env.step(Action::query(d));
  CHECK(env.trace().reward_time == doctest::Approx(49.73));
  const auto r = env.step(Action::classify_malicious());
  CHECK(*r.info.outcome == Outcome::kTruePositive);
  CHECK(r.reward == 6.0);
}

TEST_CASE("false negative under scheme 2 costs ten times C(t)") {
  auto env = make_env(2);
  const auto rec = record(Label::kMalicious);
  env.reset(rec);
  env.step(Action::query(2));
  const auto r = env.step(Action::classify_benign());
  CHECK(*r.info.outcome == Outcome::kFalseNegative);
  CHECK(r.reward == doctest::Approx(-10.0 * (1.0 + std::log2(3.99))));
}

TEST_CASE("sampled latencies can drive the reward") {
  EnvConfig config;
  config.use_mean_times_for_reward = false;
  auto env = make_env(1, config);
  const auto rec = record(Label::kMalicious);
  env.reset(rec);
  env.step(Action::query(2));
  const auto r = env.step(Action::classify_malicious());
  CHECK(r.reward == doctest::Approx(1.0 + std::log2(4.1)));
}

TEST_CASE("repeat query is penalized and does not end the episode") {
  auto env = make_env(5);
  const auto rec = record(Label::kMalicious);
  env.reset(rec);
  env.step(Action::query(0));
  const auto r = env.step(Action::query(0));
  CHECK(r.reward == -10000.0);
  CHECK(r.info.invalid);
  CHECK_FALSE(r.done);
  CHECK(env.trace().elapsed_time == 0.8);
  CHECK(env.trace().query_order == std::vector<std::size_t>{0});
}

TEST_CASE("classify before any query ends the episode as a miss") {
  for (const Label label : {Label::kMalicious, Label::kBenign}) {
    auto env = make_env(4);
    const auto rec = record(label);
    env.reset(rec);
    const auto r = env.step(label == Label::kMalicious ? Action::classify_malicious() : Action::classify_benign());
    CHECK(r.done);
    CHECK(r.reward == -10000.0);
    CHECK(r.info.forced_terminal);
    CHECK(*r.info.outcome == forced_incorrect_outcome(label));
    CHECK_FALSE(env.trace().correct());
  }
  CHECK(forced_incorrect_outcome(Label::kMalicious) == Outcome::kFalseNegative);
  CHECK(forced_incorrect_outcome(Label::kBenign) == Outcome::kFalsePositive);
}

TEST_CASE("step cap forces termination with the penalty") {
  auto env = make_env(5);
  const auto rec = record(Label::kBenign);
  env.reset(rec);
  env.step(Action::query(0));
  StepResult r;
  std::size_t steps = 1;
  do {
    r = env.step(Action::query(0));
    ++steps;
  } while (!r.done);
  CHECK(steps == 16);
  CHECK(r.reward == -10000.0);
  CHECK(r.info.forced_terminal);
  CHECK(*env.trace().outcome == Outcome::kFalsePositive);
  CHECK(env.trace().length() == 16);
  CHECK(env.trace().total_return == -150000.0);
}

TEST_CASE("outcome table") {
  CHECK(outcome_of(Label::kMalicious, Label::kMalicious) == Outcome::kTruePositive);
  CHECK(outcome_of(Label::kMalicious, Label::kBenign) == Outcome::kFalseNegative);
  CHECK(outcome_of(Label::kBenign, Label::kMalicious) == Outcome::kFalsePositive);
  CHECK(outcome_of(Label::kBenign, Label::kBenign) == Outcome::kTrueNegative);
}

TEST_CASE("builtin reward schemes") {
  const double c = 2.5;
  const double expected[5][4] = {{c, c, -c, -c}, {c, c, -10 * c, -10 * c}, {1, 1, -c, -c}, {10, 10, -c, -c},
                                 {100, 100, -c, -c}};
  for (int id = 1; id <= 5; ++id) {
    const auto s = RewardScheme::builtin(id);
    CHECK(s.terminal_reward(Outcome::kTruePositive, c) == expected[id - 1][0]);
    CHECK(s.terminal_reward(Outcome::kTrueNegative, c) == expected[id - 1][1]);
    CHECK(s.terminal_reward(Outcome::kFalsePositive, c) == expected[id - 1][2]);
    CHECK(s.terminal_reward(Outcome::kFalseNegative, c) == expected[id - 1][3]);
    CHECK(s.invalid_penalty == -10000.0);
  }
  CHECK_THROWS_AS(RewardScheme::builtin(6), ValidationError);
  CHECK(RewardScheme::builtin(2).fp.to_string() == "-10C(t)");
  CHECK(RewardScheme::builtin(3).fp.to_string() == "-C(t)");
  CHECK(RewardScheme::builtin(4).tp.to_string() == "10");
}

TEST_CASE("trace rows") {
  auto env = make_env(3);
  const auto rec = record(Label::kMalicious);
  env.reset(rec);
  env.step(Action::query(1));
  env.step(Action::query(2));
  env.step(Action::classify_malicious());
  CHECK(trace_csv_header() == "record_id,action_sequence,elapsed_time,decision,outcome,return");
  CHECK(trace_csv_row(env.trace(), kNames) == "1,pefile+byte3g+M,4.700000,M,TP,1.000000");
  CHECK(sequence_name(env.trace().query_order, kNames) == "pefile+byte3g");
  CHECK(sequence_name({}, kNames) == "(none)");
}

TEST_CASE("environment construction checks") {
  CHECK_THROWS_AS(DetectorEnv({}, {}, RewardScheme::builtin(1)), ValidationError);
  CHECK_THROWS_AS(DetectorEnv(kNames, {1.0}, RewardScheme::builtin(1)), ValidationError);
  EnvConfig tight;
  tight.max_steps = 4;
  CHECK_THROWS_AS(DetectorEnv(kNames, kMeans, RewardScheme::builtin(1), tight), ValidationError);
  auto env = make_env(1);
  CHECK_THROWS_AS(env.step(Action::query(0)), ContractViolation);
  const ScoreRecord short_rec{0, Label::kBenign, {0.5}, {1.0}};
  CHECK_THROWS_AS(env.reset(short_rec), ContractViolation);
}
