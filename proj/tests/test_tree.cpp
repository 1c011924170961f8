#include <algorithm>
#include <cmath>

#include "detsel/error.hpp"
#include "detsel/tree.hpp"
#include "doctest.h"

using namespace detsel;

namespace {

double gini_weighted(const std::vector<Label>& y, const std::vector<bool>& left) {
  double nl = 0, ml = 0, nr = 0, mr = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double m = y[i] == Label::kMalicious ? 1.0 : 0.0;
    if (left[i]) {
      nl += 1;
      ml += m;
    } else {
      nr += 1;
      mr += m;
    }
  }
  const auto g = [](double m, double n) { return n > 0 ? 2 * (m / n) * (1 - m / n) : 0.0; };
  return nl * g(ml, nl) + nr * g(mr, nr);
}

}  // namespace

TEST_CASE("XOR needs two levels and gets them") {
  FeatureRows x;
  std::vector<Label> y;
  for (int rep = 0; rep < 5; ++rep) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        x.push_back({0.1 + 0.8 * a + 0.01 * rep, 0.1 + 0.8 * b + 0.01 * rep});
        y.push_back((a ^ b) ? Label::kMalicious : Label::kBenign);
      }
    }
  }
  // No single split reduces impurity: every exhaustive depth-1 split keeps
  // each side half malicious.
  const double root = gini_weighted(y, std::vector<bool>(y.size(), true));
  for (std::size_t f = 0; f < 2; ++f) {
    for (const auto& row : x) {
      std::vector<bool> left;
      for (const auto& r : x) left.push_back(r[f] <= row[f]);
      CHECK(gini_weighted(y, left) >= root - 0.5);
    }
  }
  const auto tree = train_tree(x, y, 2);
  CHECK(tree.depth() == 2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(tree.predict(x[i]) == y[i]);
  const auto stump = train_tree(x, y, 1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < x.size(); ++i) wrong += stump.predict(x[i]) != y[i];
  CHECK(wrong >= 5);
}

TEST_CASE("eight-point XOR is fit by some depth-2 split pair, and by the tree") {
  const FeatureRows x = {{0.1, 0.1}, {0.2, 0.2}, {0.1, 0.8}, {0.2, 0.9}, {0.8, 0.1}, {0.9, 0.2}, {0.8, 0.8}, {0.9, 0.9}};
  const std::vector<Label> y = {Label::kBenign,    Label::kBenign,    Label::kMalicious, Label::kMalicious,
                                Label::kMalicious, Label::kMalicious, Label::kBenign,    Label::kBenign};
  // Exhaustive search: root cut, then one cut per side, each side labelled by majority.
  std::vector<std::pair<std::size_t, double>> cuts;
  for (std::size_t f = 0; f < 2; ++f) {
    for (double t : {0.15, 0.5, 0.85}) cuts.push_back({f, t});
  }
  bool separable = false;
  for (const auto& root : cuts) {
    for (const auto& lc : cuts) {
      for (const auto& rc : cuts) {
        std::size_t counts[4][2] = {};
        std::vector<std::size_t> leaf(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const bool left = x[i][root.first] <= root.second;
          const auto& c = left ? lc : rc;
          leaf[i] = (left ? 0 : 2) + (x[i][c.first] <= c.second ? 0 : 1);
          ++counts[leaf[i]][y[i] == Label::kMalicious];
        }
        bool pure = true;
        for (auto& c : counts) pure = pure && (c[0] == 0 || c[1] == 0);
        separable = separable || pure;
      }
    }
  }
  CHECK(separable);
  const auto tree = train_tree(x, y, 2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(tree.predict(x[i]) == y[i]);
}

TEST_CASE("root split matches the exhaustive Gini optimum") {
  Rng rng(12);
  FeatureRows x;
  std::vector<Label> y;
  for (int i = 0; i < 120; ++i) {
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    x.push_back({a, b, c});
    const double noise = rng.uniform(-0.2, 0.2);
    y.push_back(0.6 * b + 0.4 * c + noise > 0.5 ? Label::kMalicious : Label::kBenign);
  }
  double best = 1e300;
  for (std::size_t f = 0; f < 3; ++f) {
    for (const auto& row : x) {
      std::vector<bool> left;
      for (const auto& r : x) left.push_back(r[f] <= row[f]);
      best = std::min(best, gini_weighted(y, left));
    }
  }
  const auto tree = train_tree(x, y, 1);
  const auto& root = tree.nodes().at(0);
  REQUIRE_FALSE(root.is_leaf());
  std::vector<bool> left;
  for (const auto& r : x) left.push_back(r[static_cast<std::size_t>(root.feature)] <= root.threshold);
  CHECK(gini_weighted(y, left) == doctest::Approx(best));
}

TEST_CASE("separable data is fit exactly at depth one") {
  FeatureRows x = {{0.1}, {0.2}, {0.3}, {0.7}, {0.8}, {0.9}};
  std::vector<Label> y = {Label::kBenign, Label::kBenign, Label::kBenign,
                          Label::kMalicious, Label::kMalicious, Label::kMalicious};
  const auto tree = train_tree(x, y, 4);
  CHECK(tree.depth() == 1);
  CHECK(tree.num_leaves() == 2);
  CHECK(tree.nodes()[0].threshold == doctest::Approx(0.5));
  CHECK(tree.predict_proba(std::vector<double>{0.45}) == 0.0);
  CHECK(tree.predict_proba(std::vector<double>{0.55}) == 1.0);
}

TEST_CASE("ties on impurity prefer balance, then feature, then threshold") {
  // Small integer grids make impurity ties common; compare the root against
  // a lexicographic search over every candidate cut.
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    FeatureRows x;
    std::vector<Label> y;
    for (int i = 0; i < 8; ++i) {
      x.push_back({static_cast<double>(rng.index(4)), static_cast<double>(rng.index(4))});
      y.push_back(rng.bernoulli(0.5) ? Label::kMalicious : Label::kBenign);
    }
    struct Cut {
      double impurity;
      double imbalance;
      std::size_t feature;
      double threshold;
    };
    std::vector<Cut> cuts;
    for (std::size_t f = 0; f < 2; ++f) {
      std::vector<double> values;
      for (const auto& r : x) values.push_back(r[f]);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (std::size_t j = 0; j + 1 < values.size(); ++j) {
        const double v = 0.5 * (values[j] + values[j + 1]);
        std::vector<bool> left;
        double nl = 0;
        for (const auto& r : x) {
          left.push_back(r[f] <= v);
          nl += r[f] <= v;
        }
        if (nl == 0 || nl == 8) continue;
        cuts.push_back({gini_weighted(y, left), std::abs(2 * nl - 8), f, v});
      }
    }
    const auto tree = train_tree(x, y, 1);
    const auto& root = tree.nodes()[0];
    const bool pure = std::all_of(y.begin(), y.end(), [&](Label l) { return l == y[0]; });
    if (pure || cuts.empty()) {
      CHECK(root.is_leaf());
      continue;
    }
    const auto best = *std::min_element(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
      if (std::abs(a.impurity - b.impurity) > 1e-12) return a.impurity < b.impurity;
      if (a.imbalance != b.imbalance) return a.imbalance < b.imbalance;
      if (a.feature != b.feature) return a.feature < b.feature;
      return a.threshold < b.threshold;
    });
    REQUIRE_FALSE(root.is_leaf());
    CHECK(static_cast<std::size_t>(root.feature) == best.feature);
    CHECK(root.threshold == best.threshold);
  }
}

TEST_CASE("single-class input gives a constant model") {
  FeatureRows x = {{0.1, 0.2}, {0.9, 0.3}};
  const auto tree = train_tree(x, {Label::kMalicious, Label::kMalicious});
  CHECK(tree.depth() == 0);
  CHECK(tree.predict(std::vector<double>{0.0, 0.0}) == Label::kMalicious);
  CHECK_THROWS_AS(train_tree({}, {}), ValidationError);
}

TEST_CASE("a one-tree forest without bagging is the plain tree") {
  Rng rng(13);
  FeatureRows x;
  std::vector<Label> y;
  for (int i = 0; i < 200; ++i) {
    x.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    y.push_back(x.back()[0] + x.back()[3] > 1.0 ? Label::kMalicious : Label::kBenign);
  }
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.max_features = 4;
  const auto forest = train_forest(x, y, p, 5);
  const auto tree = train_tree(x, y, p.max_depth);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> q = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    CHECK(forest.predict(q) == tree.predict(q));
  }
}

TEST_CASE("forest training accuracy is close to the single tree's") {
  auto spec = CalibrationSpec::defaults();
  spec.n_files = 4000;
  const auto corpus = generate_corpus(spec, 7);
  FeatureRows x;
  std::vector<Label> y;
  for (const auto& r : corpus.records) {
    x.push_back(r.scores);
    y.push_back(r.label);
  }
  const auto tree = train_tree(x, y, 4);
  const auto forest = train_forest(x, y, {}, 3);
  double tree_ok = 0.0, forest_ok = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    tree_ok += tree.predict(x[i]) == y[i];
    forest_ok += forest.predict(x[i]) == y[i];
  }
  const double n = static_cast<double>(x.size());
  CHECK(100.0 * forest_ok / n >= 100.0 * tree_ok / n - 2.0);
}

TEST_CASE("forest training is deterministic in the seed") {
  Rng rng(14);
  FeatureRows x;
  std::vector<Label> y;
  for (int i = 0; i < 300; ++i) {
    x.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    y.push_back(x.back()[1] > 0.4 ? Label::kMalicious : Label::kBenign);
  }
  const auto a = train_forest(x, y, {}, 77);
  const auto b = train_forest(x, y, {}, 77);
  REQUIRE(a.trees().size() == 25);
  for (std::size_t t = 0; t < 25; ++t) {
    const auto& na = a.trees()[t].nodes();
    const auto& nb = b.trees()[t].nodes();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
      CHECK(na[i].feature == nb[i].feature);
      CHECK(na[i].threshold == nb[i].threshold);
    }
  }
}
