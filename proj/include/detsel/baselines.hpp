#ifndef DETSEL_BASELINES_HPP_
#define DETSEL_BASELINES_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detsel/corpus.hpp"
#include "detsel/tree.hpp"

namespace detsel {

// Global decision convention: malicious iff score > 0.5.
inline Label predict_label(double score) { return score > 0.5 ? Label::kMalicious : Label::kBenign; }

// Malicious iff any detector flags the file.
Label aggregate_or(std::span<const double> scores);
// Majority of per-detector labels; ties go to mean score > 0.5.
Label aggregate_majority(std::span<const double> scores);

struct AggregationRule {
  enum class Kind { kNone, kOr, kMajority, kStackingTree, kStackingForest };

  Kind kind = Kind::kNone;
  std::size_t max_depth = 4;
  ForestParams forest;

  static AggregationRule none() { return {Kind::kNone, 4, {}}; }
  static AggregationRule any() { return {Kind::kOr, 4, {}}; }
  static AggregationRule majority() { return {Kind::kMajority, 4, {}}; }
  static AggregationRule stacking_tree(std::size_t depth = 4) { return {Kind::kStackingTree, depth, {}}; }
  static AggregationRule stacking_forest(ForestParams p = {}) { return {Kind::kStackingForest, p.max_depth, p}; }

  bool is_stacking() const { return kind == Kind::kStackingTree || kind == Kind::kStackingForest; }
  // "none", "or", "majority", "stacking_dt", "stacking_rf"
  std::string name() const;
};

struct FoldMetrics {
  std::size_t files = 0;
  double accuracy_pct = 0.0;
  double mean_time = 0.0;
  double fp_pct = 0.0;
  double fn_pct = 0.0;
};

struct BaselineRow {
  std::vector<std::size_t> subset;  // detector indices, ascending
  AggregationRule rule;
  double accuracy_pct = 0.0;  // fold average
  double mean_time = 0.0;     // fold average of per-file subset time sums
  double fp_pct = 0.0;
  double fn_pct = 0.0;
  std::vector<FoldMetrics> folds;

  std::string combination(const std::vector<std::string>& names) const;
};

// k-fold evaluation of one subset/rule pair. Stacking rules fit on the
// training folds only; `seed` drives forest bootstraps (one substream per fold).
BaselineRow evaluate_combination(const Corpus& corpus, const FoldSplit& folds, std::vector<std::size_t> subset,
                                 const AggregationRule& rule, std::uint64_t seed = 0);

// Singles (none), every multi-detector subset under or and majority, and the
// full set under tree and forest stacking; sorted by accuracy, descending.
// For K = 4 this is 28 rows. Rows are evaluated in parallel.
std::vector<BaselineRow> enumerate_baselines(const Corpus& corpus, const FoldSplit& folds, std::uint64_t seed = 0);
// Single-threaded reference.
std::vector<BaselineRow> enumerate_baselines_serial(const Corpus& corpus, const FoldSplit& folds,
                                                    std::uint64_t seed = 0);

// `combination,aggregation,mean_accuracy,mean_time,fp_pct,fn_pct`
std::string baseline_csv_header();
std::string baseline_csv(const std::vector<BaselineRow>& rows, const std::vector<std::string>& names);

}  // namespace detsel

#endif  // DETSEL_BASELINES_HPP_
