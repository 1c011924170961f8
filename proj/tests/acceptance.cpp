// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "detsel/agent.hpp"
#include "detsel/baselines.hpp"
#include "detsel/corpus.hpp"
#include "detsel/env.hpp"
#include "detsel/error.hpp"
#include "detsel/harness.hpp"
#include "detsel/io.hpp"
#include "detsel/mlp.hpp"

using namespace detsel;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string f2(double v) { return format_fixed(v, 2); }

const std::vector<double> kTableAccuracy = {82.88, 90.59, 94.89, 95.50};
const std::vector<double> kTableHistogram = {73.02, 20.81, 3.92, 1.60, 0.65};

// ---------------------------------------------------------------------------

Verdict criterion_cost() {
  Verdict r;
  r.require(cost(0.7) == 0.7, "cost(0.7)");
  r.require(cost(1.0) == 1.0, "cost(1)");
  r.require(cost(32.0) == 6.0, "cost(32)");
  r.require(cost(48.28) == 6.0, "cost(48.28)");
  r.require(std::abs(cost(3.99) - 2.9964) <= 1e-3, "cost(3.99) = " + format_fixed(cost(3.99), 6));
  double prev = cost(0.0);
  bool monotone = true;
  for (int i = 1; i <= 100000; ++i) {
    const double c = cost(64.0 * i / 100000.0);
    monotone = monotone && c >= prev;
    prev = c;
  }
  r.require(monotone, "not monotone on the grid");
  if (r.pass) r.detail = "cost(3.99) = " + format_fixed(cost(3.99), 6);
  return r;
}

Verdict criterion_calibration() {
  Verdict r;
  const auto spec = CalibrationSpec::defaults();
  std::ostringstream summary;
  for (const std::uint64_t seed : {7ULL, 8ULL, 9ULL}) {
    const auto rep = calibration_report(generate_corpus(spec, seed));
    summary << "seed " << seed << " acc";
    for (std::size_t d = 0; d < 4; ++d) {
      const double acc = 100.0 * rep.accuracy[d];
      summary << " " << f2(acc);
      r.require(std::abs(acc - kTableAccuracy[d]) <= 0.5, "seed " + std::to_string(seed) + " accuracy " +
                                                              rep.names[d] + " = " + f2(acc));
      const double rel = std::abs(rep.mean_time[d] - spec.detectors[d].mean_time) / spec.detectors[d].mean_time;
      r.require(rel <= 0.02, "seed " + std::to_string(seed) + " mean time " + rep.names[d]);
    }
    summary << " hist";
    for (std::size_t m = 0; m < 5; ++m) {
      const double h = 100.0 * rep.misclass_histogram[m];
      summary << " " << f2(h);
      r.require(std::abs(h - kTableHistogram[m]) <= 1.0,
                "seed " + std::to_string(seed) + " histogram[" + std::to_string(m) + "] = " + f2(h));
    }
    summary << "; ";
  }
  if (r.pass) r.detail = summary.str();
  return r;
}

Verdict criterion_baselines() {
  Verdict r;
  const auto corpus = generate_corpus(CalibrationSpec::defaults(), 7);
  const auto folds = stratified_folds(corpus.records, 10, 1);
  const auto rows = enumerate_baselines(corpus, folds, 1);
  r.require(rows.size() == 28, "row count " + std::to_string(rows.size()));
  std::map<std::vector<std::size_t>, const BaselineRow*> any, maj;
  double full_time = -1.0;
  for (const auto& row : rows) {
    switch (row.rule.kind) {
      case AggregationRule::Kind::kNone: {
        const auto d = row.subset.at(0);
        r.require(std::abs(row.accuracy_pct - kTableAccuracy[d]) <= 0.5,
                  "single " + corpus.detector_names[d] + " accuracy " + f2(row.accuracy_pct));
        break;
      }
      case AggregationRule::Kind::kOr:
        any[row.subset] = &row;
        break;
      case AggregationRule::Kind::kMajority:
        maj[row.subset] = &row;
        if (row.subset.size() == 4) full_time = row.mean_time;
        break;
      default:
        break;
    }
  }
  r.require(any.size() == 11 && maj.size() == 11, "missing or/majority rows");
  for (const auto& [subset, o] : any) {
    const auto it = maj.find(subset);
    if (it == maj.end()) continue;
    const std::string name = o->combination(corpus.detector_names);
    r.require(o->fn_pct <= it->second->fn_pct, "or FN > majority FN for " + name);
    r.require(o->fp_pct >= it->second->fp_pct, "or FP < majority FP for " + name);
  }
  r.require(std::abs(full_time - 49.73) <= 0.5, "full-set time " + f2(full_time));
  if (r.pass) r.detail = "28 rows, full-set time " + f2(full_time) + " s";
  return r;
}

// Loss sum_o c_o y_o; returns the worst relative error over the probes.
double probe_layer(Mlp& net, std::size_t offset, std::size_t count, Rng& rng, std::size_t probes) {
  std::vector<double> x(net.input_size()), c(net.output_size());
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  const auto loss = [&] {
    const auto y = net.forward(x);
    double s = 0.0;
    for (std::size_t o = 0; o < y.size(); ++o) s += c[o] * y[o];
    return s;
  };
  std::vector<double> grads(net.num_params(), 0.0);
  net.backward(net.forward_cached(x), c, grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t i = offset + rng.index(count);
    const double saved = net.params()[i];
    net.params()[i] = saved + h;
    const double up = loss();
    net.params()[i] = saved - h;
    const double down = loss();
    net.params()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grads[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - grads[i]) / denom);
  }
  return worst;
}

Verdict criterion_gradients() {
  Verdict r;
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    for (const auto head : {OutputHead::kSoftmax, OutputHead::kLinear}) {
      Mlp net = Mlp::random(4, 20, 6, head, rng);
      for (auto& p : net.params()) p += rng.uniform(-0.1, 0.1);
      // Hidden layer (W1, b1) and output layer (W2, b2).
      worst = std::max(worst, probe_layer(net, net.w1_offset(), net.w2_offset(), rng, 100));
      worst = std::max(worst, probe_layer(net, net.w2_offset(), net.num_params() - net.w2_offset(), rng, 100));
    }
  }
  r.require(worst <= 1e-4, "max relative error " + format_sig(worst, 3));
  if (r.pass) r.detail = "max relative error " + format_sig(worst, 3);
  return r;
}

// Brute-force 2-detector simulator, written from the rules rather than the
// environment code.
struct SimStep {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
  bool invalid = false;
};

std::vector<SimStep> simulate(const ScoreRecord& rec, const RewardScheme& scheme, const EnvConfig& cfg,
                              const std::vector<double>& means, const std::vector<std::size_t>& seq) {
  std::vector<SimStep> out;
  std::vector<double> state = {-1.0, -1.0};
  double t = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    SimStep s;
    const std::size_t a = seq[i];
    if (a < 2) {
      if (state[a] >= 0.0) {
        s.reward = scheme.invalid_penalty;
        s.invalid = true;
      } else {
        state[a] = rec.scores[a];
        t += cfg.use_mean_times_for_reward ? means[a] : rec.times[a];
      }
    } else {
      s.done = true;
      const bool said_malicious = a == 2;
      if (state[0] < 0.0 && state[1] < 0.0) {
        s.reward = scheme.invalid_penalty;
        s.invalid = true;
      } else {
        const bool mal = rec.label == Label::kMalicious;
        const RewardEntry& e = said_malicious ? (mal ? scheme.tp : scheme.fp) : (mal ? scheme.fn : scheme.tn);
        const double c = t <= 1.0 ? t : std::min(1.0 + std::log2(t), 6.0);
        s.reward = e.kind == RewardEntry::Kind::kFixed ? e.value : e.value * c;
      }
    }
    if (!s.done && i + 1 >= cfg.max_steps) {
      s.done = true;
      s.reward = scheme.invalid_penalty;
    }
    s.state = state;
    out.push_back(s);
    if (s.done) break;
  }
  return out;
}

Verdict criterion_environment() {
  Verdict r;
  const std::vector<std::string> names = {"a", "b"};
  const std::vector<double> means = {0.5, 3.0};
  const std::vector<ScoreRecord> records = {
      {0, Label::kMalicious, {0.9, 0.2}, {0.4, 3.5}},
      {1, Label::kBenign, {0.7, 0.1}, {0.6, 2.0}},
      {2, Label::kMalicious, {0.0, 1.0}, {1.5, 40.0}},
  };
  std::vector<std::vector<std::size_t>> sequences;
  for (std::size_t len = 1; len <= 3; ++len) {
    std::vector<std::size_t> seq(len, 0);
    for (;;) {
      sequences.push_back(seq);
      std::size_t i = 0;
      while (i < len && ++seq[i] == 4) seq[i++] = 0;
      if (i == len) break;
    }
  }
  std::size_t compared = 0;
  for (int id = 1; id <= 5; ++id) {
    for (const bool mean_times : {true, false}) {
      for (const std::size_t max_steps : {16UL, 3UL}) {
        EnvConfig cfg;
        cfg.use_mean_times_for_reward = mean_times;
        cfg.max_steps = max_steps;
        const auto scheme = RewardScheme::builtin(id);
        DetectorEnv env(names, means, scheme, cfg);
        for (const auto& rec : records) {
          for (const auto& seq : sequences) {
            const auto expected = simulate(rec, scheme, cfg, means, seq);
            env.reset(rec);
            for (std::size_t i = 0; i < expected.size(); ++i) {
              const auto got = env.step(Action::from_index(seq[i], 2));
              const auto& e = expected[i];
              const bool same = got.state.values == e.state && std::abs(got.reward - e.reward) <= 1e-12 &&
                                got.done == e.done && got.info.invalid == e.invalid;
              if (!same) {
                r.require(false, "scheme " + std::to_string(id) + " record " + std::to_string(rec.file_id) +
                                     " diverges at step " + std::to_string(i));
              }
              ++compared;
            }
            r.require(env.active() == !expected.back().done, "termination mismatch");
          }
        }
      }
    }
  }
  if (r.pass) r.detail = std::to_string(sequences.size()) + " sequences, " + std::to_string(compared) + " steps";
  return r;
}

Verdict criterion_toy_learning() {
  Verdict r;
  CalibrationSpec spec;
  DetectorProfile a;
  a.name = "a";
  a.accuracy = 1.0;
  a.tpr = 1.0;
  a.fpr = 0.0;
  a.mean_time = 0.5;
  a.time_jitter = 0.0;
  DetectorProfile b;
  b.name = "b";
  b.accuracy = 0.5;
  b.tpr = 0.5;
  b.fpr = 0.5;
  b.mean_time = 40.0;
  b.time_jitter = 0.0;
  spec.detectors = {a, b};
  spec.misclass_histogram = {0.5, 0.5, 0.0};
  spec.n_files = 500;
  const auto corpus = generate_corpus(spec, 5);
  const auto folds = stratified_folds(corpus.records, 5, 1);
  std::vector<ScoreRecord> train_set, test_set;
  for (auto i : folds.train_indices(0)) train_set.push_back(corpus.records[i]);
  for (auto i : folds.test_indices(0)) test_set.push_back(corpus.records[i]);

  TrainConfig cfg;
  cfg.scheme = RewardScheme::builtin(4);
  cfg.total_episodes = 60000;
  cfg.exploration.horizon = 50000;
  cfg.seed = 1;
  const auto result = train(train_set, corpus.detector_names, spec.mean_times(), cfg);
  const auto ev = evaluate(result.agent, test_set);
  double only_a = 0.0;
  for (const auto& t : ev.traces) only_a += t.query_order == std::vector<std::size_t>{0} ? 1.0 : 0.0;
  const double share = 100.0 * only_a / static_cast<double>(ev.traces.size());
  const std::string summary = "A-only " + f2(share) + "%, accuracy " + f2(ev.metrics.accuracy_pct) + "% on " +
                              std::to_string(ev.traces.size()) + " held-out files";
  r.require(share >= 95.0, summary);
  r.require(ev.metrics.accuracy_pct >= 99.0, summary);
  if (r.pass) r.detail = summary;
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline: gen, baseline, train and eval for all five schemes, then report.

struct PipelineRun {
  fs::path root;
  std::map<int, double> accuracy, time;
  double pefile_accuracy = 0.0;
};

std::string experiment_config(int scheme) {
  return "scheme = " + std::to_string(scheme) +
         "\ncorpus = corpus.csv\nout = train/scheme" + std::to_string(scheme) +
         "\nfolds = 10\ntrain_folds = 0\nsubsample = 5000\nseed = 1\nepisodes = 60000\n";
}

PipelineRun run_pipeline(const fs::path& root, std::ostream& log) {
  PipelineRun run;
  run.root = root;
  fs::remove_all(root);
  fs::create_directories(root);
  cmd_gen({}, root / "corpus.csv", 7, log);
  cmd_baseline(root / "corpus.csv", 1, root / "baselines.csv", log);
  for (int id = 1; id <= 5; ++id) {
    const std::string name = "scheme" + std::to_string(id);
    write_file_atomic(root / (name + ".txt"), experiment_config(id));
    cmd_train(root / (name + ".txt"), log);
    cmd_eval(root / "train" / name, root / "corpus.csv", root / "results" / name, log);
    for (const auto& line : split(read_file(root / "results" / name / "metrics.csv"), '\n')) {
      if (line.rfind("mean,", 0) != 0) continue;
      const auto f = split(line, ',');
      run.accuracy[id] = *parse_double(f[2]);
      run.time[id] = *parse_double(f[3]);
    }
    for (const auto& line : split(read_file(root / "results" / name / "comparison.csv"), '\n')) {
      if (line.rfind("pefile,none,", 0) == 0) run.pefile_accuracy = *parse_double(split(line, ',')[2]);
    }
  }
  cmd_report(root / "results", root / "summary.csv", log);
  return run;
}

Verdict criterion_trends(const PipelineRun& run) {
  Verdict r;
  const double t3 = run.time.at(3), t4 = run.time.at(4), t5 = run.time.at(5);
  const double a3 = run.accuracy.at(3), a4 = run.accuracy.at(4), a5 = run.accuracy.at(5);
  const std::string summary = "T3/T4/T5 = " + f2(t3) + "/" + f2(t4) + "/" + f2(t5) + " s, acc3/acc4/acc5 = " +
                              f2(a3) + "/" + f2(a4) + "/" + f2(a5) + ", pefile " + f2(run.pefile_accuracy);
  r.detail = summary;
  r.pass = t3 > t4 && t4 > t5 && a3 >= a4 && a4 >= a5 - 0.3 && t5 < 2.0 &&
           std::abs(a5 - run.pefile_accuracy) <= 3.0;
  return r;
}

Verdict check_shares(const fs::path& file, std::size_t column, Verdict& r) {
  const auto lines = split(read_file(file), '\n');
  double sum = 0.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!lines[i].empty()) sum += *parse_double(split(lines[i], ',').at(column));
  }
  r.require(std::abs(sum - 100.0) <= 0.01, file.string() + " shares sum to " + format_fixed(sum, 6));
  return r;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

Verdict criterion_report(const PipelineRun& first, const PipelineRun& second) {
  Verdict r;
  std::size_t checked = 0;
  for (const auto& e : fs::recursive_directory_iterator(first.root)) {
    const auto name = e.path().filename().string();
    if (name == "distribution.csv") {
      check_shares(e.path(), 3, r);
      ++checked;
    } else if (name.find("_hist_scheme") != std::string::npos) {
      check_shares(e.path(), 3, r);
      ++checked;
    } else if (name == "metrics.csv") {
      const auto lines = split(read_file(e.path()), '\n');
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split(lines[i], ',');
        const double acc = *parse_double(f[2]), fp = *parse_double(f[4]), fn = *parse_double(f[5]);
        r.require(std::abs(fp + fn - (100.0 - acc)) <= 0.01, e.path().string() + " row " + f[0]);
      }
      ++checked;
    }
  }
  const auto a = snapshot(first.root), b = snapshot(second.root);
  r.require(a.size() == b.size(), "file sets differ");
  for (const auto& [path, bytes] : a) {
    const auto it = b.find(path);
    if (it == b.end() || it->second != bytes) {
      r.require(false, path + " not byte-identical");
    }
  }
  if (r.pass) r.detail = std::to_string(checked) + " files checked, " + std::to_string(a.size()) + " outputs byte-identical";
  return r;
}

void print(int id, const Verdict& r, double secs, double budget) {
  Verdict out = r;
  if (secs > budget) out.require(false, "runtime " + f2(secs) + " s over budget " + f2(budget) + " s");
  std::printf("criterion %d: %s  (%.1f s)  %s\n", id, out.pass ? "PASS" : "FAIL", secs, out.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main() {
  bool all = true;
  const auto run = [&](int id, double budget, const std::function<Verdict()>& fn, double prior_secs = 0.0) {
    const auto t0 = Clock::now();
    Verdict r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.require(false, std::string("exception: ") + e.what());
    }
    const double secs = prior_secs + seconds_since(t0);
    const bool ok = r.pass && secs <= budget;
    print(id, r, secs, budget);
    all = all && ok;
  };

  run(1, 1.0, criterion_cost);
  run(2, 30.0, criterion_calibration);
  run(3, 300.0, criterion_baselines);
  run(4, 10.0, criterion_gradients);
  run(5, 1.0, criterion_environment);
  run(6, 600.0, criterion_toy_learning);

  std::ostringstream log;
  const fs::path base = fs::temp_directory_path() / "detsel_acceptance";
  PipelineRun first, second;
  double first_secs = 0.0, second_secs = 0.0;
  std::string pipeline_error;
  try {
    auto t0 = Clock::now();
    first = run_pipeline(base / "run_a", log);
    first_secs = seconds_since(t0);
    t0 = Clock::now();
    second = run_pipeline(base / "run_b", log);
    second_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  run(7, 7200.0, [&] {
    if (!pipeline_error.empty()) throw std::runtime_error(pipeline_error);
    return criterion_trends(first);
  }, first_secs);
  // No runtime bound for 8; it is charged for the repeat run.
  run(8, std::numeric_limits<double>::infinity(), [&] {
    if (!pipeline_error.empty()) throw std::runtime_error(pipeline_error);
    return criterion_report(first, second);
  }, second_secs);
  fs::remove_all(base);
  return all ? 0 : 1;
}
