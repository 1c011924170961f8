#include "detsel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "detsel/error.hpp"
#include "detsel/io.hpp"

namespace detsel {

namespace fs = std::filesystem;

RewardEntry parse_reward_entry(const std::string& text) {
  const std::string t(trim(text));
  const std::string suffix = "C(t)";
  if (t.size() >= suffix.size() && t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0) {
    std::string prefix(trim(std::string_view(t).substr(0, t.size() - suffix.size())));
    if (!prefix.empty() && prefix.back() == '*') prefix = std::string(trim(prefix.substr(0, prefix.size() - 1)));
    if (prefix.empty() || prefix == "+") return RewardEntry::time_scaled(1.0);
    if (prefix == "-") return RewardEntry::time_scaled(-1.0);
    if (const auto v = parse_double(prefix)) return RewardEntry::time_scaled(*v);
  } else if (const auto v = parse_double(t)) {
    return RewardEntry::fixed(*v);
  }
  throw ValidationError("bad reward entry '" + text + "' (expected a number or a multiple of C(t))");
}

namespace {

const std::set<std::string> kConfigKeys = {
    "scheme",          "corpus",           "out",
    "folds",           "fold_seed",        "train_folds",
    "subsample",       "subsample_seed",   "seed",
    "episodes",        "hidden",           "learning_rate",
    "rms_decay",       "rms_epsilon",      "epsilon_start",
    "epsilon_end",     "epsilon_horizon",  "replay_capacity",
    "replay_activation", "replay_batch",   "truncation",
    "entropy_beta",    "max_grad_norm",    "convergence_window",
    "convergence_threshold", "convergence_patience", "log_every",
    "max_steps",       "use_mean_times",   "advantage",
    "exploration_draw", "reward.tp",       "reward.tn",
    "reward.fp",       "reward.fn",        "reward.invalid",
};

std::size_t get_count(const KeyValueFile& kv, const std::string& key, std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ValidationError(kv.origin() + ": '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string fold_dir_name(int fold) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "fold_%02d", fold);
  return buf;
}

std::string pct(double v) { return format_fixed(v, 6); }

Corpus prepare_corpus(const fs::path& path, std::size_t subsample, std::uint64_t seed) {
  Corpus corpus = load_corpus(path);
  if (subsample > 0) corpus = subsample_corpus(corpus, subsample, seed);
  return corpus;
}

std::vector<double> empirical_mean_times(const Corpus& corpus) {
  std::vector<double> out(corpus.num_detectors(), 0.0);
  for (const auto& r : corpus.records) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += r.times[d];
  }
  for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(corpus.size(), 1));
  return out;
}

std::vector<ScoreRecord> gather(const Corpus& corpus, const std::vector<std::size_t>& idx) {
  std::vector<ScoreRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(corpus.records[i]);
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KeyValueFile& kv, const fs::path& base_dir) {
  kv.reject_unknown(kConfigKeys);
  ExperimentConfig c;
  c.scheme_id = static_cast<int>(kv.get_int("scheme"));
  c.train.scheme = RewardScheme::builtin(c.scheme_id);
  c.corpus = resolve(base_dir, kv.get_string("corpus"));
  c.out = resolve(base_dir, kv.get_string("out"));
  c.folds = static_cast<int>(kv.get_int("folds", 10));
  if (c.folds < 2) throw ValidationError(kv.origin() + ": folds must be >= 2");
  c.fold_seed = get_count(kv, "fold_seed", 1);
  if (kv.has("train_folds")) {
    for (const auto& s : kv.get_strings("train_folds")) {
      const auto f = parse_int(s);
      if (!f || *f < 0 || *f >= c.folds) {
        throw ValidationError(kv.origin() + ": train_folds entry '" + s + "' is not a fold index");
      }
      c.train_folds.push_back(static_cast<int>(*f));
    }
  }
  c.subsample = get_count(kv, "subsample", 0);
  c.subsample_seed = get_count(kv, "subsample_seed", 1);

  auto& t = c.train;
  t.seed = get_count(kv, "seed", t.seed);
  t.total_episodes = get_count(kv, "episodes", t.total_episodes);
  if (t.total_episodes == 0) throw ValidationError(kv.origin() + ": episodes must be > 0");
  t.hidden = get_count(kv, "hidden", t.hidden);
  if (t.hidden == 0) throw ValidationError(kv.origin() + ": hidden must be > 0");
  t.optimizer.learning_rate = kv.get_double("learning_rate", t.optimizer.learning_rate);
  t.optimizer.decay = kv.get_double("rms_decay", t.optimizer.decay);
  t.optimizer.epsilon = kv.get_double("rms_epsilon", t.optimizer.epsilon);
  if (!(t.optimizer.learning_rate > 0.0) || !(t.optimizer.decay >= 0.0 && t.optimizer.decay < 1.0) ||
      !(t.optimizer.epsilon > 0.0)) {
    throw ValidationError(kv.origin() + ": optimizer needs learning_rate > 0, 0 <= rms_decay < 1, rms_epsilon > 0");
  }
  t.exploration.start = kv.get_double("epsilon_start", t.exploration.start);
  t.exploration.end = kv.get_double("epsilon_end", t.exploration.end);
  t.exploration.horizon = get_count(kv, "epsilon_horizon", t.exploration.horizon);
  if (!(t.exploration.end >= 0.0 && t.exploration.end <= t.exploration.start && t.exploration.start <= 1.0)) {
    throw ValidationError(kv.origin() + ": need 0 <= epsilon_end <= epsilon_start <= 1");
  }
  t.replay_capacity = get_count(kv, "replay_capacity", t.replay_capacity);
  if (t.replay_capacity == 0) throw ValidationError(kv.origin() + ": replay_capacity must be > 0");
  t.replay_activation = get_count(kv, "replay_activation", t.replay_activation);
  t.replay_batch = get_count(kv, "replay_batch", t.replay_batch);
  t.truncation = kv.get_double("truncation", t.truncation);
  t.loss.entropy_beta = kv.get_double("entropy_beta", t.loss.entropy_beta);
  t.loss.max_grad_norm = kv.get_double("max_grad_norm", t.loss.max_grad_norm);
  t.convergence_window = get_count(kv, "convergence_window", t.convergence_window);
  t.convergence_threshold = kv.get_double("convergence_threshold", t.convergence_threshold);
  t.convergence_patience = get_count(kv, "convergence_patience", t.convergence_patience);
  t.log_every = get_count(kv, "log_every", t.log_every);
  t.env.max_steps = get_count(kv, "max_steps", t.env.max_steps);
  t.env.use_mean_times_for_reward = kv.get_bool("use_mean_times", t.env.use_mean_times_for_reward);

  const std::string advantage = kv.get_string("advantage", "return");
  if (advantage == "return") {
    t.loss.advantage = AdvantageForm::kReturn;
  } else if (advantage == "critic") {
    t.loss.advantage = AdvantageForm::kCritic;
  } else {
    throw ValidationError(kv.origin() + ": advantage must be 'return' or 'critic'");
  }
  const std::string draw = kv.get_string("exploration_draw", "valid");
  if (draw == "valid") {
    t.exploration_draw = ExplorationDraw::kValidActions;
  } else if (draw == "all") {
    t.exploration_draw = ExplorationDraw::kAllActions;
  } else {
    throw ValidationError(kv.origin() + ": exploration_draw must be 'valid' or 'all'");
  }

  if (kv.has("reward.tp")) t.scheme.tp = parse_reward_entry(kv.get_string("reward.tp"));
  if (kv.has("reward.tn")) t.scheme.tn = parse_reward_entry(kv.get_string("reward.tn"));
  if (kv.has("reward.fp")) t.scheme.fp = parse_reward_entry(kv.get_string("reward.fp"));
  if (kv.has("reward.fn")) t.scheme.fn = parse_reward_entry(kv.get_string("reward.fn"));
  t.scheme.invalid_penalty = kv.get_double("reward.invalid", t.scheme.invalid_penalty);
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_kv(KeyValueFile::load(path), path.parent_path());
}

std::vector<int> ExperimentConfig::selected_folds() const {
  if (!train_folds.empty()) {
    std::vector<int> out = train_folds;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  std::vector<int> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) out[static_cast<std::size_t>(f)] = f;
  return out;
}

std::string FoldMeta::to_text() const {
  std::ostringstream out;
  out << "fold = " << fold << "\n";
  out << "folds = " << folds << "\n";
  out << "fold_seed = " << fold_seed << "\n";
  out << "subsample = " << subsample << "\n";
  out << "subsample_seed = " << subsample_seed << "\n";
  out << "records = " << records << "\n";
  out << "corpus_checksum = " << corpus_checksum << "\n";
  out << "scheme = " << scheme_id << "\n";
  out << "reward.tp = " << scheme.tp.to_string() << "\n";
  out << "reward.tn = " << scheme.tn.to_string() << "\n";
  out << "reward.fp = " << scheme.fp.to_string() << "\n";
  out << "reward.fn = " << scheme.fn.to_string() << "\n";
  out << "reward.invalid = " << format_sig(scheme.invalid_penalty, 17) << "\n";
  out << "max_steps = " << env.max_steps << "\n";
  out << "use_mean_times = " << (env.use_mean_times_for_reward ? "true" : "false") << "\n";
  out << "cost_cap = " << format_sig(env.cost_cap, 17) << "\n";
  out << "cost_log_base = " << format_sig(env.cost_log_base, 17) << "\n";
  out << "seed = " << seed << "\n";
  out << "episodes = " << episodes << "\n";
  out << "converged = " << (converged ? "true" : "false") << "\n";
  return out.str();
}

FoldMeta FoldMeta::parse(std::string_view text, const std::string& origin) {
  const auto kv = KeyValueFile::parse(text, origin);
  kv.reject_unknown({"fold", "folds", "fold_seed", "subsample", "subsample_seed", "records", "corpus_checksum",
                     "scheme", "reward.tp", "reward.tn", "reward.fp", "reward.fn", "reward.invalid", "max_steps",
                     "use_mean_times", "cost_cap", "cost_log_base", "seed", "episodes", "converged"});
  FoldMeta m;
  m.fold = static_cast<int>(kv.get_int("fold"));
  m.folds = static_cast<int>(kv.get_int("folds"));
  m.fold_seed = static_cast<std::uint64_t>(kv.get_int("fold_seed"));
  m.subsample = static_cast<std::size_t>(kv.get_int("subsample"));
  m.subsample_seed = static_cast<std::uint64_t>(kv.get_int("subsample_seed"));
  m.records = static_cast<std::size_t>(kv.get_int("records"));
  m.corpus_checksum = kv.get_string("corpus_checksum");
  m.scheme_id = static_cast<int>(kv.get_int("scheme"));
  m.scheme.tp = parse_reward_entry(kv.get_string("reward.tp"));
  m.scheme.tn = parse_reward_entry(kv.get_string("reward.tn"));
  m.scheme.fp = parse_reward_entry(kv.get_string("reward.fp"));
  m.scheme.fn = parse_reward_entry(kv.get_string("reward.fn"));
  m.scheme.invalid_penalty = kv.get_double("reward.invalid");
  m.env.max_steps = static_cast<std::size_t>(kv.get_int("max_steps"));
  m.env.use_mean_times_for_reward = kv.get_bool("use_mean_times", true);
  m.env.cost_cap = kv.get_double("cost_cap");
  m.env.cost_log_base = kv.get_double("cost_log_base");
  m.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  m.episodes = static_cast<std::size_t>(kv.get_int("episodes"));
  m.converged = kv.get_bool("converged", false);
  if (m.folds < 2 || m.fold < 0 || m.fold >= m.folds) throw ValidationError(origin + ": fold index out of range");
  return m;
}

const std::vector<double>& time_bucket_edges() {
  static const std::vector<double> edges = {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 45.0, 50.0};
  return edges;
}

std::vector<TimeBucket> time_histogram(const std::vector<double>& elapsed) {
  const auto& edges = time_bucket_edges();
  std::vector<TimeBucket> out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double hi = i + 1 < edges.size() ? edges[i + 1] : std::numeric_limits<double>::infinity();
    out.push_back({edges[i], hi, 0, 0.0});
  }
  for (double t : elapsed) {
    auto it = std::upper_bound(edges.begin(), edges.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - edges.begin() - 1, 0));
    ++out[idx].files;
  }
  const double n = static_cast<double>(elapsed.size());
  for (auto& b : out) b.share_pct = n > 0 ? 100.0 * static_cast<double>(b.files) / n : 0.0;
  return out;
}

void cmd_gen(const fs::path& spec_path, const fs::path& out, std::uint64_t seed, std::ostream& log) {
  const CalibrationSpec spec = spec_path.empty() ? CalibrationSpec::defaults() : CalibrationSpec::load(spec_path);
  const Corpus corpus = generate_corpus(spec, seed);
  write_corpus(corpus, out);
  log << "wrote " << corpus.size() << " records to " << out.string() << " (checksum "
      << hex64(corpus_checksum(corpus)) << ")\n";
  log << format_calibration_report(calibration_report(corpus), spec);
}

void cmd_baseline(const fs::path& corpus_path, std::uint64_t seed, const fs::path& out, std::ostream& log,
                  int folds, std::uint64_t fold_seed) {
  const Corpus corpus = load_corpus(corpus_path);
  const FoldSplit split = stratified_folds(corpus.records, folds, fold_seed);
  const auto rows = enumerate_baselines(corpus, split, seed);
  write_file_atomic(out, baseline_csv(rows, corpus.detector_names));
  log << "wrote " << rows.size() << " baseline rows to " << out.string() << "\n";
  log << "top 5 by accuracy:\n";
  for (std::size_t i = 0; i < rows.size() && i < 5; ++i) {
    const auto& r = rows[i];
    log << "  " << r.combination(corpus.detector_names) << " / " << r.rule.name() << ": accuracy "
        << format_fixed(r.accuracy_pct, 2) << "%, time " << format_fixed(r.mean_time, 2) << " s, fp "
        << format_fixed(r.fp_pct, 2) << "%, fn " << format_fixed(r.fn_pct, 2) << "%\n";
  }
}

void cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const Corpus corpus = prepare_corpus(config.corpus, config.subsample, config.subsample_seed);
  const FoldSplit split = stratified_folds(corpus.records, config.folds, config.fold_seed);
  const std::string checksum = hex64(corpus_checksum(corpus));
  const auto mean_times = empirical_mean_times(corpus);
  const auto selected = config.selected_folds();
  fs::create_directories(config.out);

  std::vector<TrainResult> results(selected.size());
  std::vector<std::exception_ptr> errors(selected.size());
  const auto n = static_cast<std::ptrdiff_t>(selected.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    const int fold = selected[slot];
    try {
      const auto train_records = gather(corpus, split.train_indices(fold));
      TrainConfig tc = config.train;
      tc.seed = Rng::substream(config.train.seed, static_cast<std::uint64_t>(fold)).next_u64();
      results[slot] = train(train_records, corpus.detector_names, mean_times, tc);

      FoldMeta meta;
      meta.fold = fold;
      meta.folds = config.folds;
      meta.fold_seed = config.fold_seed;
      meta.subsample = config.subsample;
      meta.subsample_seed = config.subsample_seed;
      meta.records = corpus.size();
      meta.corpus_checksum = checksum;
      meta.scheme_id = config.scheme_id;
      meta.scheme = config.train.scheme;
      meta.env = config.train.env;
      meta.seed = config.train.seed;
      meta.episodes = results[slot].episodes;
      meta.converged = results[slot].converged;

      const fs::path dir = config.out / fold_dir_name(fold);
      fs::create_directories(dir);
      write_checkpoint(results[slot].agent.actor, results[slot].agent.critic, dir / "checkpoint.txt");
      write_file_atomic(dir / "curve.csv", curve_csv(results[slot].curve));
      write_file_atomic(dir / "meta.txt", meta.to_text());
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  }

  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!errors[i]) continue;
    const std::string where = "fold " + std::to_string(selected[i]) + ": ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }

  log << "scheme " << config.scheme_id << ", " << corpus.size() << " records, " << config.folds << " folds\n";
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto& r = results[i];
    log << "  fold " << selected[i] << ": " << r.episodes << " episodes" << (r.converged ? " (converged)" : "");
    if (!r.curve.empty()) {
      const auto& last = r.curve.back();
      log << ", last window return " << format_fixed(last.mean_return, 3) << ", accuracy "
          << format_fixed(last.accuracy, 2) << "%, time " << format_fixed(last.mean_time, 3) << " s";
    }
    log << "\n";
  }
}

void cmd_train(const fs::path& config_path, std::ostream& log) { cmd_train(ExperimentConfig::load(config_path), log); }

void cmd_eval(const fs::path& checkpoint_dir, const fs::path& corpus_path, const fs::path& out, std::ostream& log) {
  if (!fs::is_directory(checkpoint_dir)) {
    throw ValidationError("checkpoint directory not found: " + checkpoint_dir.string());
  }
  std::vector<fs::path> fold_dirs;
  for (const auto& entry : fs::directory_iterator(checkpoint_dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("fold_", 0) == 0 &&
        fs::exists(entry.path() / "meta.txt")) {
      fold_dirs.push_back(entry.path());
    }
  }
  if (fold_dirs.empty()) throw ValidationError("no trained folds under " + checkpoint_dir.string());

  std::vector<FoldMeta> metas;
  for (const auto& dir : fold_dirs) {
    metas.push_back(FoldMeta::parse(read_file(dir / "meta.txt"), (dir / "meta.txt").string()));
  }
  std::vector<std::size_t> order(metas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return metas[a].fold < metas[b].fold; });

  const FoldMeta& ref = metas[order[0]];
  for (const auto& m : metas) {
    if (m.folds != ref.folds || m.fold_seed != ref.fold_seed || m.subsample != ref.subsample ||
        m.subsample_seed != ref.subsample_seed || m.corpus_checksum != ref.corpus_checksum ||
        !(m.scheme == ref.scheme) || m.scheme_id != ref.scheme_id) {
      throw ValidationError("fold mismatch: checkpoints under " + checkpoint_dir.string() +
                            " come from different experiments");
    }
  }

  const Corpus corpus = prepare_corpus(corpus_path, ref.subsample, ref.subsample_seed);
  const std::string checksum = hex64(corpus_checksum(corpus));
  if (checksum != ref.corpus_checksum || corpus.size() != ref.records) {
    throw ValidationError("fold mismatch: corpus " + corpus_path.string() + " (" + std::to_string(corpus.size()) +
                          " records, checksum " + checksum + ") is not the one the checkpoints were trained on (" +
                          std::to_string(ref.records) + " records, checksum " + ref.corpus_checksum + ")");
  }
  const FoldSplit split = stratified_folds(corpus.records, ref.folds, ref.fold_seed);
  const auto mean_times = empirical_mean_times(corpus);

  std::vector<int> fold_ids;
  std::vector<Metrics> fold_metrics;
  std::vector<EpisodeTrace> all_traces;
  for (auto i : order) {
    const auto& meta = metas[i];
    auto [actor, critic] = load_checkpoint(fold_dirs[i] / "checkpoint.txt");
    if (actor.input_size() != corpus.num_detectors()) {
      throw ValidationError("fold mismatch: checkpoint in " + fold_dirs[i].string() + " expects " +
                            std::to_string(actor.input_size()) + " detectors");
    }
    const auto test = gather(corpus, split.test_indices(meta.fold));
    const auto ev = evaluate(actor_policy(actor), test, corpus.detector_names, mean_times, meta.scheme, meta.env);
    fold_ids.push_back(meta.fold);
    fold_metrics.push_back(ev.metrics);
    all_traces.insert(all_traces.end(), ev.traces.begin(), ev.traces.end());
  }
  std::stable_sort(all_traces.begin(), all_traces.end(),
                   [](const EpisodeTrace& a, const EpisodeTrace& b) { return a.record_id < b.record_id; });

  const double nf = static_cast<double>(fold_metrics.size());
  double acc = 0.0, time = 0.0, fp = 0.0, fn = 0.0;
  for (const auto& m : fold_metrics) {
    acc += m.accuracy_pct;
    time += m.mean_time;
    fp += m.fp_pct;
    fn += m.fn_pct;
  }
  acc /= nf;
  time /= nf;
  fp /= nf;
  fn /= nf;
  const Metrics pooled = summarize(all_traces, corpus.detector_names);

  fs::create_directories(out);

  std::string metrics = "fold,files,accuracy,mean_time,fp_pct,fn_pct\n";
  for (std::size_t i = 0; i < fold_metrics.size(); ++i) {
    const auto& m = fold_metrics[i];
    metrics += std::to_string(fold_ids[i]) + "," + std::to_string(m.files) + "," + pct(m.accuracy_pct) + "," +
               pct(m.mean_time) + "," + pct(m.fp_pct) + "," + pct(m.fn_pct) + "\n";
  }
  metrics += "mean," + std::to_string(all_traces.size()) + "," + pct(acc) + "," + pct(time) + "," + pct(fp) + "," +
             pct(fn) + "\n";
  write_file_atomic(out / "metrics.csv", metrics);

  std::string dist = "sequence,files,mean_time,share_pct\n";
  for (const auto& s : pooled.distribution) {
    dist += s.sequence + "," + std::to_string(s.files) + "," + pct(s.mean_time) + "," + pct(s.share_pct) + "\n";
  }
  write_file_atomic(out / "distribution.csv", dist);

  std::string traces = trace_csv_header() + "\n";
  for (const auto& t : all_traces) traces += trace_csv_row(t, corpus.detector_names) + "\n";
  write_file_atomic(out / "traces.csv", traces);

  // Baselines averaged over the same folds the agent was evaluated on.
  auto rows = enumerate_baselines(corpus, split, ref.seed);
  for (auto& r : rows) {
    double ra = 0.0, rt = 0.0, rfp = 0.0, rfn = 0.0;
    for (int f : fold_ids) {
      const auto& m = r.folds[static_cast<std::size_t>(f)];
      ra += m.accuracy_pct;
      rt += m.mean_time;
      rfp += m.fp_pct;
      rfn += m.fn_pct;
    }
    r.accuracy_pct = ra / nf;
    r.mean_time = rt / nf;
    r.fp_pct = rfp / nf;
    r.fn_pct = rfn / nf;
  }
  struct Row {
    std::string combination, aggregation;
    double accuracy, time, fp, fn;
  };
  std::vector<Row> merged;
  for (const auto& r : rows) {
    merged.push_back({r.combination(corpus.detector_names), r.rule.name(), r.accuracy_pct, r.mean_time, r.fp_pct,
                      r.fn_pct});
  }
  const std::string agent_label = "scheme_" + std::to_string(ref.scheme_id);
  merged.push_back({"agent", agent_label, acc, time, fp, fn});
  std::stable_sort(merged.begin(), merged.end(), [](const Row& a, const Row& b) { return a.accuracy > b.accuracy; });
  std::string comparison = baseline_csv_header() + "\n";
  for (const auto& r : merged) {
    comparison += r.combination + "," + r.aggregation + "," + format_fixed(r.accuracy, 4) + "," +
                  format_fixed(r.time, 4) + "," + format_fixed(r.fp, 4) + "," + format_fixed(r.fn, 4) + "\n";
  }
  write_file_atomic(out / "comparison.csv", comparison);

  std::ostringstream exp;
  exp << "scheme = " << ref.scheme_id << "\n";
  exp << "reward.tp = " << ref.scheme.tp.to_string() << "\n";
  exp << "reward.tn = " << ref.scheme.tn.to_string() << "\n";
  exp << "reward.fp = " << ref.scheme.fp.to_string() << "\n";
  exp << "reward.fn = " << ref.scheme.fn.to_string() << "\n";
  std::vector<std::string> ids;
  for (int f : fold_ids) ids.push_back(std::to_string(f));
  exp << "folds = " << join(ids, ",") << "\n";
  exp << "corpus_checksum = " << ref.corpus_checksum << "\n";
  write_file_atomic(out / "experiment.txt", exp.str());

  log << "scheme " << ref.scheme_id << " over " << fold_ids.size() << " fold(s), " << all_traces.size()
      << " files: accuracy " << format_fixed(acc, 2) << "%, time " << format_fixed(time, 3) << " s, fp "
      << format_fixed(fp, 2) << "%, fn " << format_fixed(fn, 2) << "%\n";
  log << "action sequences:\n";
  for (std::size_t i = 0; i < pooled.distribution.size() && i < 8; ++i) {
    const auto& s = pooled.distribution[i];
    log << "  " << s.sequence << ": " << format_fixed(s.share_pct, 2) << "% (" << format_fixed(s.mean_time, 2)
        << " s)\n";
  }
}

void cmd_report(const fs::path& results_dir, const fs::path& out, std::ostream& log) {
  std::map<int, fs::path> found;
  if (fs::is_directory(results_dir)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(results_dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "experiment.txt")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      const auto kv = KeyValueFile::load(dir / "experiment.txt");
      const int id = static_cast<int>(kv.get_int("scheme"));
      if (found.count(id)) {
        throw ValidationError("scheme " + std::to_string(id) + " appears in both " + found[id].string() + " and " +
                              dir.string());
      }
      found[id] = dir;
    }
  }
  std::vector<std::string> missing;
  for (int id = 1; id <= 5; ++id) {
    if (!found.count(id)) missing.push_back(std::to_string(id));
  }
  if (!missing.empty()) {
    throw ValidationError("missing experiment outputs under " + results_dir.string() + " for scheme(s) " +
                          join(missing, ", "));
  }

  std::string summary = "scheme,tp,tn,fp,fn,accuracy,mean_time,fp_pct,fn_pct\n";
  const fs::path stem = out.parent_path() / out.stem();
  for (const auto& [id, dir] : found) {
    const auto exp = KeyValueFile::load(dir / "experiment.txt");
    const std::string metrics = read_file(dir / "metrics.csv");
    std::vector<std::string> mean_row;
    for (const auto& line : split(metrics, '\n')) {
      if (line.rfind("mean,", 0) == 0) mean_row = split(line, ',');
    }
    if (mean_row.size() != 6) throw ValidationError((dir / "metrics.csv").string() + ": no mean row");
    summary += std::to_string(id) + "," + exp.get_string("reward.tp") + "," + exp.get_string("reward.tn") + "," +
               exp.get_string("reward.fp") + "," + exp.get_string("reward.fn") + "," + mean_row[2] + "," +
               mean_row[3] + "," + mean_row[4] + "," + mean_row[5] + "\n";

    std::vector<double> elapsed;
    const auto lines = split(read_file(dir / "traces.csv"), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto fields = split(lines[i], ',');
      const auto t = fields.size() == 6 ? parse_double(fields[2]) : std::nullopt;
      if (!t) throw ParseError((dir / "traces.csv").string() + ": bad trace row", i + 1, 1);
      elapsed.push_back(*t);
    }
    std::string hist = "bucket_lo,bucket_hi,files,share_pct\n";
    for (const auto& b : time_histogram(elapsed)) {
      hist += format_fixed(b.lo, 1) + "," + (std::isinf(b.hi) ? std::string("inf") : format_fixed(b.hi, 1)) + "," +
              std::to_string(b.files) + "," + pct(b.share_pct) + "\n";
    }
    const fs::path hist_path = stem.string() + "_hist_scheme" + std::to_string(id) + ".csv";
    write_file_atomic(hist_path, hist);
    log << "scheme " << id << ": accuracy " << mean_row[2] << "%, time " << mean_row[3] << " s -> "
        << hist_path.string() << "\n";
  }
  write_file_atomic(out, summary);
  log << "wrote " << out.string() << "\n";
}

}  // namespace detsel
