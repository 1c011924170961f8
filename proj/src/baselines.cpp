#include "detsel/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "detsel/error.hpp"
#include "detsel/io.hpp"

namespace detsel {

Label aggregate_or(std::span<const double> scores) {
  if (scores.empty()) throw ContractViolation("aggregate_or needs a nonempty subset");
  for (double s : scores) {
    if (predict_label(s) == Label::kMalicious) return Label::kMalicious;
  }
  return Label::kBenign;
}

Label aggregate_majority(std::span<const double> scores) {
  if (scores.empty()) throw ContractViolation("aggregate_majority needs a nonempty subset");
  std::size_t votes = 0;
  double sum = 0.0;
  for (double s : scores) {
    if (predict_label(s) == Label::kMalicious) ++votes;
    sum += s;
  }
  const std::size_t against = scores.size() - votes;
  if (votes != against) return votes > against ? Label::kMalicious : Label::kBenign;
  return predict_label(sum / static_cast<double>(scores.size()));
}

std::string AggregationRule::name() const {
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kOr:
      return "or";
    case Kind::kMajority:
      return "majority";
    case Kind::kStackingTree:
      return "stacking_dt";
    case Kind::kStackingForest:
      return "stacking_rf";
  }
  return "?";
}

std::string BaselineRow::combination(const std::vector<std::string>& names) const {
  std::string out;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) out += "+";
    out += names.at(subset[i]);
  }
  return out;
}

namespace {

std::vector<double> subset_scores(const ScoreRecord& rec, const std::vector<std::size_t>& subset) {
  std::vector<double> out;
  out.reserve(subset.size());
  for (auto d : subset) out.push_back(rec.scores[d]);
  return out;
}

}  // namespace

BaselineRow evaluate_combination(const Corpus& corpus, const FoldSplit& folds, std::vector<std::size_t> subset,
                                 const AggregationRule& rule, std::uint64_t seed) {
  std::sort(subset.begin(), subset.end());
  if (subset.empty() || std::adjacent_find(subset.begin(), subset.end()) != subset.end() ||
      subset.back() >= corpus.num_detectors()) {
    throw ValidationError("invalid detector subset");
  }
  if (rule.kind == AggregationRule::Kind::kNone && subset.size() != 1) {
    throw ValidationError("aggregation 'none' requires a single detector");
  }
  if (folds.assignments.size() != corpus.size()) throw ValidationError("fold split does not match corpus");

  BaselineRow row;
  row.subset = subset;
  row.rule = rule;
  for (int f = 0; f < folds.k; ++f) {
    const auto test = folds.test_indices(f);
    TreeModel tree;
    ForestModel forest;
    if (rule.is_stacking()) {
      FeatureRows x;
      std::vector<Label> y;
      for (auto i : folds.train_indices(f)) {
        x.push_back(subset_scores(corpus.records[i], subset));
        y.push_back(corpus.records[i].label);
      }
      if (rule.kind == AggregationRule::Kind::kStackingTree) {
        tree = train_tree(x, y, rule.max_depth);
      } else {
        forest = train_forest(x, y, rule.forest, Rng::substream(seed, static_cast<std::uint64_t>(f)).next_u64());
      }
    }

    FoldMetrics m;
    m.files = test.size();
    std::size_t correct = 0, fp = 0, fn = 0;
    double time = 0.0;
    for (auto i : test) {
      const auto& rec = corpus.records[i];
      const auto s = subset_scores(rec, subset);
      Label decision = Label::kBenign;
      switch (rule.kind) {
        case AggregationRule::Kind::kNone:
          decision = predict_label(s[0]);
          break;
        case AggregationRule::Kind::kOr:
          decision = aggregate_or(s);
          break;
        case AggregationRule::Kind::kMajority:
          decision = aggregate_majority(s);
          break;
        case AggregationRule::Kind::kStackingTree:
          decision = tree.predict(s);
          break;
        case AggregationRule::Kind::kStackingForest:
          decision = forest.predict(s);
          break;
      }
      if (decision == rec.label) {
        ++correct;
      } else if (decision == Label::kMalicious) {
        ++fp;
      } else {
        ++fn;
      }
      for (auto d : subset) time += rec.times[d];
    }
    const double n = static_cast<double>(std::max<std::size_t>(test.size(), 1));
    m.accuracy_pct = 100.0 * static_cast<double>(correct) / n;
    m.fp_pct = 100.0 * static_cast<double>(fp) / n;
    m.fn_pct = 100.0 * static_cast<double>(fn) / n;
    m.mean_time = time / n;
    row.folds.push_back(m);
  }
  const double k = static_cast<double>(row.folds.size());
  for (const auto& m : row.folds) {
    row.accuracy_pct += m.accuracy_pct / k;
    row.mean_time += m.mean_time / k;
    row.fp_pct += m.fp_pct / k;
    row.fn_pct += m.fn_pct / k;
  }
  return row;
}

namespace {

struct Job {
  std::vector<std::size_t> subset;
  AggregationRule rule;
};

std::vector<Job> baseline_jobs(std::size_t k) {
  std::vector<Job> jobs;
  const std::size_t full = (std::size_t{1} << k) - 1;
  for (std::size_t d = 0; d < k; ++d) jobs.push_back({{d}, AggregationRule::none()});
  for (std::size_t mask = 1; mask <= full; ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t d = 0; d < k; ++d) {
      if ((mask >> d) & 1U) subset.push_back(d);
    }
    if (subset.size() < 2) continue;
    jobs.push_back({subset, AggregationRule::any()});
    jobs.push_back({subset, AggregationRule::majority()});
  }
  std::vector<std::size_t> all(k);
  std::iota(all.begin(), all.end(), 0);
  jobs.push_back({all, AggregationRule::stacking_tree()});
  jobs.push_back({all, AggregationRule::stacking_forest()});
  return jobs;
}

void sort_rows(std::vector<BaselineRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BaselineRow& a, const BaselineRow& b) { return a.accuracy_pct > b.accuracy_pct; });
}

}  // namespace

std::vector<BaselineRow> enumerate_baselines(const Corpus& corpus, const FoldSplit& folds, std::uint64_t seed) {
  const auto jobs = baseline_jobs(corpus.num_detectors());
  std::vector<BaselineRow> rows(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    rows[static_cast<std::size_t>(i)] = evaluate_combination(corpus, folds, job.subset, job.rule, seed);
  }
  sort_rows(rows);
  return rows;
}

std::vector<BaselineRow> enumerate_baselines_serial(const Corpus& corpus, const FoldSplit& folds,
                                                    std::uint64_t seed) {
  std::vector<BaselineRow> rows;
  for (const auto& job : baseline_jobs(corpus.num_detectors())) {
    rows.push_back(evaluate_combination(corpus, folds, job.subset, job.rule, seed));
  }
  sort_rows(rows);
  return rows;
}

std::string baseline_csv_header() { return "combination,aggregation,mean_accuracy,mean_time,fp_pct,fn_pct"; }

std::string baseline_csv(const std::vector<BaselineRow>& rows, const std::vector<std::string>& names) {
  std::string out = baseline_csv_header() + "\n";
  for (const auto& r : rows) {
    out += r.combination(names) + "," + r.rule.name() + "," + format_fixed(r.accuracy_pct, 4) + "," +
           format_fixed(r.mean_time, 4) + "," + format_fixed(r.fp_pct, 4) + "," + format_fixed(r.fn_pct, 4) + "\n";
  }
  return out;
}

}  // namespace detsel
