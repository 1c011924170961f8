#include "detsel/agent.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "detsel/error.hpp"
#include "detsel/io.hpp"

namespace detsel {

double ExplorationSchedule::epsilon(std::size_t episode) const {
  if (horizon == 0 || episode >= horizon) return end;
  const double frac = static_cast<double>(episode) / static_cast<double>(horizon);
  return start + (end - start) * frac;
}

PolicyFn actor_policy(const Mlp& actor) {
  return [&actor](const StateVector& s) { return actor.forward(s.values); };
}

namespace {

std::vector<std::size_t> all_actions(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

SelectedAction select_action(std::span<const double> probs, double epsilon, std::span<const std::size_t> mask,
                             Rng& rng) {
  std::vector<std::size_t> allowed = mask.empty() ? all_actions(probs.size())
                                                  : std::vector<std::size_t>(mask.begin(), mask.end());
  double mass = 0.0;
  for (auto a : allowed) mass += probs[a];
  const double m = static_cast<double>(allowed.size());
  const auto prob_of = [&](std::size_t a) {
    const double p = mass > 0.0 ? probs[a] / mass : 1.0 / m;
    return epsilon / m + (1.0 - epsilon) * p;
  };

  std::size_t chosen = allowed.back();
  if (rng.uniform() < epsilon) {
    chosen = allowed[rng.index(allowed.size())];
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    for (auto a : allowed) {
      acc += mass > 0.0 ? probs[a] / mass : 1.0 / m;
      if (u < acc) {
        chosen = a;
        break;
      }
    }
  }
  const std::size_t k = probs.size() - 2;
  return {Action::from_index(chosen, k), chosen, prob_of(chosen)};
}

SelectedAction select_exploratory(std::span<const double> probs, double epsilon,
                                  std::span<const std::size_t> explore, Rng& rng) {
  if (explore.empty()) return select_action(probs, epsilon, {}, rng);
  const double m = static_cast<double>(explore.size());
  std::size_t chosen = probs.size() - 1;
  if (rng.uniform() < epsilon) {
    chosen = explore[rng.index(explore.size())];
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
      acc += probs[a];
      if (u < acc) {
        chosen = a;
        break;
      }
    }
  }
  const bool in_explore = std::find(explore.begin(), explore.end(), chosen) != explore.end();
  const double behavior = (1.0 - epsilon) * probs[chosen] + (in_explore ? epsilon / m : 0.0);
  return {Action::from_index(chosen, probs.size() - 2), chosen, behavior};
}

SelectedAction select_action(const Mlp& actor, const StateVector& state, double epsilon,
                             std::span<const std::size_t> mask, Rng& rng) {
  const auto probs = actor.forward(state.values);
  return select_action(probs, epsilon, mask, rng);
}

std::size_t greedy_action(std::span<const double> probs, std::span<const std::size_t> mask) {
  if (mask.empty()) throw ContractViolation("greedy_action needs a nonempty mask");
  std::size_t best = mask[0];
  for (auto a : mask) {
    if (probs[a] > probs[best] || (probs[a] == probs[best] && a < best)) best = a;
  }
  return best;
}

EpisodeRun run_episode(DetectorEnv& env, const ScoreRecord& record, const PolicyFn& policy, double epsilon,
                       EpisodeMode mode, Rng& rng, ExplorationDraw draw) {
  env.reset(record);
  const std::size_t k = env.num_detectors();
  EpisodeRun run;
  run.stored.record_id = record.file_id;
  while (env.active()) {
    const StateVector& state = env.state();
    const auto probs = policy(state);
    if (probs.size() != k + 2) throw ContractViolation("policy returned the wrong number of actions");
    std::vector<std::size_t> valid;
    for (const auto& a : env.valid_actions()) valid.push_back(a.index(k));
    std::size_t index = 0;
    double behavior = 1.0;
    if (mode == EpisodeMode::kExplore) {
      const auto sel = draw == ExplorationDraw::kValidActions ? select_exploratory(probs, epsilon, valid, rng)
                                                              : select_action(probs, epsilon, {}, rng);
      index = sel.index;
      behavior = sel.behavior_prob;
    } else {
      index = greedy_action(probs, valid);
    }
    run.stored.states.push_back(state);
    run.stored.actions.push_back(index);
    run.stored.behavior_probs.push_back(behavior);
    const auto result = env.step(Action::from_index(index, k));
    run.stored.rewards.push_back(result.reward);
  }
  run.trace = env.trace();
  return run;
}

std::vector<double> compute_returns(std::span<const double> rewards) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc += rewards[i];
    out[i] = acc;
  }
  return out;
}

std::vector<double> compute_returns(const EpisodeTrace& trace) {
  std::vector<double> rewards;
  for (const auto& s : trace.steps) rewards.push_back(s.reward);
  return compute_returns(rewards);
}

namespace {

struct StepTerm {
  const StateVector* state;
  std::size_t action;
  double target;
  double weight;
};

UpdateDiagnostics apply_terms(Mlp& actor, Mlp& critic, RmsProp& actor_opt, RmsProp& critic_opt,
                              const std::vector<StepTerm>& terms, double scale, const LossConfig& loss,
                              UpdateDiagnostics diag) {
  std::vector<double> grad_actor(actor.num_params(), 0.0);
  std::vector<double> grad_critic(critic.num_params(), 0.0);
  const std::size_t n_out = actor.output_size();
  std::vector<double> g(n_out);
  double advantage_sum = 0.0;
  for (const auto& t : terms) {
    const auto critic_acts = critic.forward_cached(t.state->values);
    const auto actor_acts = actor.forward_cached(t.state->values);
    const auto& q = critic_acts.output;
    const auto& pi = actor_acts.output;
    double value = 0.0;
    for (std::size_t j = 0; j < n_out; ++j) value += pi[j] * q[j];
    const double advantage = (loss.advantage == AdvantageForm::kReturn ? t.target : q[t.action]) - value;
    const double residual = q[t.action] - t.target;
    diag.critic_loss += 0.5 * t.weight * residual * residual;
    advantage_sum += advantage;

    std::fill(g.begin(), g.end(), 0.0);
    g[t.action] = scale * t.weight * residual;
    critic.backward_logits(critic_acts, g, grad_critic);

    // d/dz of -log softmax(z)_a * A - beta * H(softmax(z)).
    double entropy = 0.0;
    for (double p : pi) entropy -= p > 0.0 ? p * std::log(p) : 0.0;
    for (std::size_t j = 0; j < n_out; ++j) {
      const double h_grad = pi[j] > 0.0 ? pi[j] * (std::log(pi[j]) + entropy) : 0.0;
      g[j] = scale * t.weight * (advantage * (pi[j] - (j == t.action ? 1.0 : 0.0)) + loss.entropy_beta * h_grad);
    }
    actor.backward_logits(actor_acts, g, grad_actor);
    ++diag.steps;
  }
  if (diag.steps > 0) diag.mean_advantage = advantage_sum / static_cast<double>(diag.steps);

  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!std::isfinite(diag.critic_loss) || !finite(grad_actor) || !finite(grad_critic)) {
    diag.aborted = true;
    diag.message = "non-finite loss or gradient; update skipped";
    return diag;
  }
  if (diag.steps == 0) return diag;
  if (loss.max_grad_norm > 0.0) {
    for (auto* grad : {&grad_actor, &grad_critic}) {
      double sq = 0.0;
      for (double x : *grad) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > loss.max_grad_norm) {
        for (double& x : *grad) x *= loss.max_grad_norm / norm;
      }
    }
  }
  critic_opt.update(critic.params(), grad_critic);
  actor_opt.update(actor.params(), grad_actor);
  return diag;
}

}  // namespace

UpdateDiagnostics update_on_policy(Mlp& actor, Mlp& critic, RmsProp& actor_opt, RmsProp& critic_opt,
                                   const StoredTrace& trace, const LossConfig& loss) {
  const auto returns = compute_returns(trace.rewards);
  std::vector<StepTerm> terms;
  for (std::size_t i = 0; i < trace.length(); ++i) {
    terms.push_back({&trace.states[i], trace.actions[i], returns[i], 1.0});
  }
  return apply_terms(actor, critic, actor_opt, critic_opt, terms, 1.0, loss, {});
}

UpdateDiagnostics update_from_replay(Mlp& actor, Mlp& critic, RmsProp& actor_opt, RmsProp& critic_opt,
                                     std::span<const StoredTrace* const> batch, double truncation,
                                     const LossConfig& loss) {
  UpdateDiagnostics diag;
  if (batch.empty()) return diag;
  std::vector<std::vector<double>> returns;
  returns.reserve(batch.size());
  for (const auto* t : batch) returns.push_back(compute_returns(t->rewards));
  std::vector<StepTerm> terms;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = *batch[b];
    for (std::size_t i = 0; i < t.length(); ++i) {
      const double behavior = t.behavior_probs[i];
      if (!(behavior > 0.0)) {
        ++diag.skipped;
        continue;
      }
      const double now = actor.forward(t.states[i].values)[t.actions[i]];
      terms.push_back({&t.states[i], t.actions[i], returns[b][i], std::min(truncation, now / behavior)});
    }
  }
  return apply_terms(actor, critic, actor_opt, critic_opt, terms, 1.0 / static_cast<double>(batch.size()), loss,
                     diag);
}

TrainResult train(const std::vector<ScoreRecord>& records, const std::vector<std::string>& detector_names,
                  const std::vector<double>& mean_times, const TrainConfig& config) {
  if (records.empty()) throw ValidationError("cannot train on an empty corpus");
  const std::size_t k = detector_names.size();
  Rng rng(config.seed);

  TrainResult result;
  auto& agent = result.agent;
  agent.detector_names = detector_names;
  agent.mean_times = mean_times;
  agent.scheme = config.scheme;
  agent.env = config.env;
  agent.actor = Mlp::random(k, config.hidden, k + 2, OutputHead::kSoftmax, rng, 0.01);
  agent.critic = Mlp::random(k, config.hidden, k + 2, OutputHead::kLinear, rng, 1.0);
  RmsProp actor_opt(agent.actor.num_params(), config.optimizer);
  RmsProp critic_opt(agent.critic.num_params(), config.optimizer);
  ReplayBuffer buffer(config.replay_capacity);
  DetectorEnv env(detector_names, mean_times, config.scheme, config.env);
  const PolicyFn policy = actor_policy(agent.actor);

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;

  double win_return = 0.0, win_time = 0.0, win_correct = 0.0;
  std::size_t win_count = 0;
  double conv_sum = 0.0;
  std::size_t conv_count = 0;
  std::optional<double> previous_window;
  std::size_t stable_windows = 0;

  for (std::size_t episode = 0; episode < config.total_episodes; ++episode) {
    const double eps = config.exploration.epsilon(episode);
    if (cursor == order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const auto& record = records[order[cursor++]];
    auto run = run_episode(env, record, policy, eps, EpisodeMode::kExplore, rng, config.exploration_draw);

    const auto diag =
        update_on_policy(agent.actor, agent.critic, actor_opt, critic_opt, run.stored, config.loss);
    if (diag.aborted) ++result.aborted_updates;
    buffer.push(std::move(run.stored));
    if (episode + 1 >= config.replay_activation && config.replay_batch > 0) {
      const auto batch = buffer.sample(config.replay_batch, rng);
      const auto rd = update_from_replay(agent.actor, agent.critic, actor_opt, critic_opt, batch,
                                         config.truncation, config.loss);
      ++result.replay_updates;
      result.skipped_steps += rd.skipped;
      if (rd.aborted) ++result.aborted_updates;
    }
    if (!agent.actor.all_finite() || !agent.critic.all_finite()) {
      throw NumericalError("training diverged at episode " + std::to_string(episode));
    }

    win_return += run.trace.total_return;
    win_time += run.trace.elapsed_time;
    win_correct += run.trace.correct() ? 1.0 : 0.0;
    ++win_count;
    result.episodes = episode + 1;
    if (config.log_every > 0 && win_count == config.log_every) {
      const double n = static_cast<double>(win_count);
      result.curve.push_back({episode + 1, win_return / n, eps, win_time / n, 100.0 * win_correct / n});
      win_return = win_time = win_correct = 0.0;
      win_count = 0;
    }

    conv_sum += run.trace.total_return;
    ++conv_count;
    if (config.convergence_window > 0 && conv_count == config.convergence_window) {
      const double mean = conv_sum / static_cast<double>(conv_count);
      conv_sum = 0.0;
      conv_count = 0;
      if (episode + 1 > config.exploration.horizon && previous_window) {
        const double rel = std::abs(mean - *previous_window) / std::max(std::abs(*previous_window), 1e-9);
        stable_windows = rel < config.convergence_threshold ? stable_windows + 1 : 0;
      }
      previous_window = mean;
      if (config.convergence_patience > 0 && stable_windows >= config.convergence_patience) {
        result.converged = true;
        break;
      }
    }
  }
  if (win_count > 0) {
    const double n = static_cast<double>(win_count);
    result.curve.push_back({result.episodes, win_return / n, config.exploration.epsilon(result.episodes - 1),
                            win_time / n, 100.0 * win_correct / n});
  }
  return result;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "episode,mean_return,epsilon,mean_time,accuracy\n";
  for (const auto& p : curve) {
    out += std::to_string(p.episode) + "," + format_fixed(p.mean_return, 6) + "," + format_fixed(p.epsilon, 6) +
           "," + format_fixed(p.mean_time, 6) + "," + format_fixed(p.accuracy, 4) + "\n";
  }
  return out;
}

Metrics summarize(const std::vector<EpisodeTrace>& traces, const std::vector<std::string>& detector_names) {
  Metrics m;
  m.files = traces.size();
  if (traces.empty()) return m;
  std::size_t correct = 0, fp = 0, fn = 0;
  double time = 0.0;
  std::map<std::string, std::pair<std::size_t, double>> groups;
  for (const auto& t : traces) {
    time += t.elapsed_time;
    if (t.outcome) {
      switch (*t.outcome) {
        case Outcome::kTruePositive:
        case Outcome::kTrueNegative:
          ++correct;
          break;
        case Outcome::kFalsePositive:
          ++fp;
          break;
        case Outcome::kFalseNegative:
          ++fn;
          break;
      }
    }
    auto& g = groups[sequence_name(t.query_order, detector_names)];
    ++g.first;
    g.second += t.elapsed_time;
  }
  const double n = static_cast<double>(traces.size());
  m.accuracy_pct = 100.0 * static_cast<double>(correct) / n;
  m.fp_pct = 100.0 * static_cast<double>(fp) / n;
  m.fn_pct = 100.0 * static_cast<double>(fn) / n;
  m.mean_time = time / n;
  for (const auto& [seq, g] : groups) {
    m.distribution.push_back(
        {seq, g.first, g.second / static_cast<double>(g.first), 100.0 * static_cast<double>(g.first) / n});
  }
  std::stable_sort(m.distribution.begin(), m.distribution.end(),
                   [](const SequenceShare& a, const SequenceShare& b) { return a.files > b.files; });
  return m;
}

Evaluation evaluate(const PolicyFn& policy, std::span<const ScoreRecord> records,
                    const std::vector<std::string>& detector_names, const std::vector<double>& mean_times,
                    const RewardScheme& scheme, const EnvConfig& env_config) {
  Evaluation ev;
  ev.traces.resize(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel
  {
    DetectorEnv env(detector_names, mean_times, scheme, env_config);
    Rng rng(0);  // greedy episodes draw nothing
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      ev.traces[idx] = run_episode(env, records[idx], policy, 0.0, EpisodeMode::kGreedy, rng).trace;
    }
  }
  ev.metrics = summarize(ev.traces, detector_names);
  return ev;
}

Evaluation evaluate_serial(const PolicyFn& policy, std::span<const ScoreRecord> records,
                           const std::vector<std::string>& detector_names, const std::vector<double>& mean_times,
                           const RewardScheme& scheme, const EnvConfig& env_config) {
  Evaluation ev;
  DetectorEnv env(detector_names, mean_times, scheme, env_config);
  Rng rng(0);
  for (const auto& rec : records) {
    ev.traces.push_back(run_episode(env, rec, policy, 0.0, EpisodeMode::kGreedy, rng).trace);
  }
  ev.metrics = summarize(ev.traces, detector_names);
  return ev;
}

Evaluation evaluate(const TrainedAgent& agent, std::span<const ScoreRecord> records) {
  return evaluate(actor_policy(agent.actor), records, agent.detector_names, agent.mean_times, agent.scheme,
                  agent.env);
}

namespace {

void append_net(std::string& out, const char* role, const Mlp& net) {
  out += role;
  out += net.head() == OutputHead::kSoftmax ? " softmax\n" : " linear\n";
  out += "layers " + std::to_string(net.input_size()) + " " + std::to_string(net.hidden_size()) + " " +
         std::to_string(net.output_size()) + "\n";
  const auto p = net.params();
  const auto row = [&](std::size_t offset, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      if (i) out += " ";
      out += format_sig(p[offset + i], 9);
    }
    out += "\n";
  };
  for (std::size_t h = 0; h < net.hidden_size(); ++h) row(net.w1_offset() + h * net.input_size(), net.input_size());
  row(net.b1_offset(), net.hidden_size());
  for (std::size_t o = 0; o < net.output_size(); ++o) {
    row(net.w2_offset() + o * net.hidden_size(), net.hidden_size());
  }
  row(net.b2_offset(), net.output_size());
}

Mlp read_net(std::istringstream& in, const std::string& role, const std::string& origin) {
  std::string tag, head, layers;
  std::size_t a = 0, b = 0, c = 0;
  if (!(in >> tag >> head) || tag != role || (head != "softmax" && head != "linear")) {
    throw ValidationError(origin + ": expected '" + role + " softmax|linear'");
  }
  if (!(in >> layers >> a >> b >> c) || layers != "layers" || a == 0 || b == 0 || c == 0) {
    throw ValidationError(origin + ": bad layer dimensions for " + role);
  }
  Mlp net(a, b, c, head == "softmax" ? OutputHead::kSoftmax : OutputHead::kLinear);
  for (auto& v : net.params()) {
    std::string tok;
    if (!(in >> tok)) throw ValidationError(origin + ": truncated " + role + " parameters");
    const auto d = parse_double(tok);
    if (!d || !std::isfinite(*d)) throw ValidationError(origin + ": bad parameter '" + tok + "'");
    v = *d;
  }
  return net;
}

}  // namespace

std::string checkpoint_text(const Mlp& actor, const Mlp& critic) {
  std::string out;
  append_net(out, "actor", actor);
  append_net(out, "critic", critic);
  return out;
}

std::pair<Mlp, Mlp> parse_checkpoint(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  auto actor = read_net(in, "actor", origin);
  auto critic = read_net(in, "critic", origin);
  std::string extra;
  if (in >> extra) throw ValidationError(origin + ": trailing data after critic parameters");
  return {std::move(actor), std::move(critic)};
}

void write_checkpoint(const Mlp& actor, const Mlp& critic, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_text(actor, critic));
}

std::pair<Mlp, Mlp> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace detsel
