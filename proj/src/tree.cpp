#include "detsel/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "detsel/error.hpp"

namespace detsel {

namespace {

double gini(double malicious, double total) {
  if (total <= 0.0) return 0.0;
  const double p = malicious / total;
  return 2.0 * p * (1.0 - p);
}

}  // namespace

class TreeBuilder {
 public:
  TreeBuilder(const FeatureRows& x, const std::vector<Label>& y, std::size_t max_depth, std::size_t max_features,
              Rng* rng)
      : x_(x), y_(y), max_depth_(max_depth), max_features_(max_features), rng_(rng) {
    num_features_ = x.empty() ? 0 : x.front().size();
  }

  TreeModel build(std::vector<std::size_t> indices) {
    TreeModel model;
    grow(model, std::move(indices), 0);
    return model;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
    std::size_t imbalance = 0;
  };

  int grow(TreeModel& model, std::vector<std::size_t> idx, std::size_t depth) {
    const int id = static_cast<int>(model.nodes_.size());
    model.nodes_.emplace_back();
    double malicious = 0.0;
    for (auto i : idx) malicious += y_[i] == Label::kMalicious ? 1.0 : 0.0;
    const double n = static_cast<double>(idx.size());
    {
      auto& node = model.nodes_[static_cast<std::size_t>(id)];
      node.samples = idx.size();
      node.depth = depth;
      node.posterior = n > 0.0 ? malicious / n : 0.0;
    }
    if (depth >= max_depth_ || malicious == 0.0 || malicious == n) return id;

    const auto split = best_split(idx);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x_[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
    }
    const int l = grow(model, std::move(left), depth + 1);
    const int r = grow(model, std::move(right), depth + 1);
    auto& node = model.nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> feats(num_features_);
    std::iota(feats.begin(), feats.end(), 0);
    if (max_features_ == 0 || max_features_ >= num_features_ || rng_ == nullptr) return feats;
    for (std::size_t i = 0; i < max_features_; ++i) {
      std::swap(feats[i], feats[i + rng_->index(num_features_ - i)]);
    }
    feats.resize(max_features_);
    std::sort(feats.begin(), feats.end());
    return feats;
  }

  Split best_split(const std::vector<std::size_t>& idx) {
    Split best;
    double total_mal = 0.0;
    for (auto i : idx) total_mal += y_[i] == Label::kMalicious ? 1.0 : 0.0;
    const double n = static_cast<double>(idx.size());
    std::vector<std::pair<double, Label>> col(idx.size());
    for (const auto f : candidate_features()) {
      for (std::size_t j = 0; j < idx.size(); ++j) col[j] = {x_[idx[j]][f], y_[idx[j]]};
      std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_mal = 0.0;
      for (std::size_t j = 0; j + 1 < col.size(); ++j) {
        left_mal += col[j].second == Label::kMalicious ? 1.0 : 0.0;
        if (col[j].first == col[j + 1].first) continue;
        const double nl = static_cast<double>(j + 1);
        const double nr = n - nl;
        const double impurity = nl * gini(left_mal, nl) + nr * gini(total_mal - left_mal, nr);
        const auto imbalance = static_cast<std::size_t>(std::abs(nl - nr));
        const double threshold = 0.5 * (col[j].first + col[j + 1].first);
        const bool better = best.feature < 0 || impurity < best.impurity - 1e-12 ||
                            (std::abs(impurity - best.impurity) <= 1e-12 && imbalance < best.imbalance);
        if (better) best = {static_cast<int>(f), threshold, impurity, imbalance};
      }
    }
    return best;
  }

  const FeatureRows& x_;
  const std::vector<Label>& y_;
  std::size_t max_depth_;
  std::size_t max_features_;
  Rng* rng_;
  std::size_t num_features_ = 0;
};

double TreeModel::predict_proba(std::span<const double> x) const {
  if (nodes_.empty()) return 0.0;
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes_[i].posterior;
}

std::size_t TreeModel::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::size_t TreeModel::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

void check_training_set(const FeatureRows& features, const std::vector<Label>& labels) {
  if (features.size() != labels.size()) throw ContractViolation("feature/label count mismatch");
  if (features.empty()) throw ValidationError("cannot train on an empty sample");
  const std::size_t k = features.front().size();
  for (const auto& row : features) {
    if (row.size() != k) throw ContractViolation("ragged feature rows");
  }
}

}  // namespace

TreeModel train_tree(const FeatureRows& features, const std::vector<Label>& labels, std::size_t max_depth) {
  check_training_set(features, labels);
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  return TreeBuilder(features, labels, max_depth, 0, nullptr).build(std::move(idx));
}

ForestModel train_forest(const FeatureRows& features, const std::vector<Label>& labels, const ForestParams& params,
                         std::uint64_t seed) {
  check_training_set(features, labels);
  if (params.n_trees == 0) throw ValidationError("forest needs at least one tree");
  const std::size_t n = features.size();
  const std::size_t k = features.front().size();
  const std::size_t max_features =
      params.max_features == 0 ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))))
                               : params.max_features;
  const auto bag = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.bag_fraction * static_cast<double>(n))));
  Rng rng(seed);
  ForestModel forest;
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    std::vector<std::size_t> idx;
    if (params.bootstrap) {
      idx.reserve(bag);
      for (std::size_t i = 0; i < bag; ++i) idx.push_back(rng.index(n));
    } else {
      idx.resize(n);
      std::iota(idx.begin(), idx.end(), 0);
    }
    forest.trees_.push_back(TreeBuilder(features, labels, params.max_depth, max_features, &rng).build(std::move(idx)));
  }
  return forest;
}

Label ForestModel::predict(std::span<const double> x) const {
  std::size_t votes = 0;
  double posterior = 0.0;
  for (const auto& t : trees_) {
    const double p = t.predict_proba(x);
    posterior += p;
    if (p > 0.5) ++votes;
  }
  const std::size_t against = trees_.size() - votes;
  if (votes != against) return votes > against ? Label::kMalicious : Label::kBenign;
  return posterior / static_cast<double>(trees_.size()) > 0.5 ? Label::kMalicious : Label::kBenign;
}

}  // namespace detsel
