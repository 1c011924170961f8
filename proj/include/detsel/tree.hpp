#ifndef DETSEL_TREE_HPP_
#define DETSEL_TREE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "detsel/corpus.hpp"
#include "detsel/rng.hpp"

namespace detsel {

// Row-major sample matrix: one row of score features per sample.
using FeatureRows = std::vector<std::vector<double>>;

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left iff x[feature] <= threshold
  int left = -1;
  int right = -1;
  double posterior = 0.0;  // fraction of malicious training samples
  std::size_t samples = 0;
  std::size_t depth = 0;

  bool is_leaf() const { return feature < 0; }
};

// Binary CART classifier over score features.
class TreeModel {
 public:
  double predict_proba(std::span<const double> x) const;
  Label predict(std::span<const double> x) const { return predict_proba(x) > 0.5 ? Label::kMalicious : Label::kBenign; }

  std::size_t depth() const;
  std::size_t num_leaves() const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  friend class TreeBuilder;
  std::vector<TreeNode> nodes_;
};

// Greedy CART on Gini impurity. Candidate thresholds are midpoints between
// consecutive distinct feature values; equal-impurity candidates prefer the
// more balanced split, then the lower feature index and threshold. A node
// becomes a leaf when pure, at max_depth, or when no feature varies.
// Single-class input yields a depth-0 constant model.
TreeModel train_tree(const FeatureRows& features, const std::vector<Label>& labels, std::size_t max_depth = 4);

struct ForestParams {
  std::size_t n_trees = 25;
  std::size_t max_depth = 4;
  double bag_fraction = 1.0;  // bootstrap sample size relative to n
  bool bootstrap = true;
  std::size_t max_features = 0;  // per split; 0 means ceil(sqrt(K))
};

class ForestModel {
 public:
  // Majority of tree votes; ties fall back to mean posterior > 0.5.
  Label predict(std::span<const double> x) const;
  const std::vector<TreeModel>& trees() const { return trees_; }

 private:
  friend ForestModel train_forest(const FeatureRows&, const std::vector<Label>&, const ForestParams&,
                                  std::uint64_t);
  std::vector<TreeModel> trees_;
};

ForestModel train_forest(const FeatureRows& features, const std::vector<Label>& labels,
                         const ForestParams& params, std::uint64_t seed);

}  // namespace detsel

#endif  // DETSEL_TREE_HPP_
