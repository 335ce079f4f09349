#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "driftlens/error.hpp"
#include "driftlens/model.hpp"
#include "driftlens/parallel.hpp"
#include "helpers.hpp"

using namespace driftlens;
using driftlens::testing::make_dataset;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

double training_mse(const TimeModel& m, const Dataset& ds) {
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto target = embed_time(ds.time(i), m.embedding());
    const auto pred = predict_moments(m, ds.row(i)).moments;
    for (std::size_t c = 0; c < target.size(); ++c) total += (target[c] - pred[c]) * (target[c] - pred[c]);
  }
  return total / static_cast<double>(ds.size());
}

// Independent oracle: best single split over all midpoints of a 1-D
// dataset, scored by the mean squared error of the two-leaf fit.
double best_single_split_mse(const std::vector<double>& x, const std::vector<double>& y, std::size_t min_leaf) {
  std::vector<double> values = x;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  double best = 1e300;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    const double thr = 0.5 * (values[k] + values[k + 1]);
    std::vector<double> l, r;
    for (std::size_t i = 0; i < x.size(); ++i) (x[i] < thr ? l : r).push_back(y[i]);
    if (l.size() < min_leaf || r.size() < min_leaf) continue;
    auto sse = [](const std::vector<double>& v) {
      const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double s = 0;
      for (double e : v) s += (e - mu) * (e - mu);
      return s;
    };
    best = std::min(best, (sse(l) + sse(r)) / x.size());
  }
  return best;
}

Dataset seeded_blob_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  const auto grid = uniform_time_grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = grid[i];
    rows.push_back({rng.normal() + (t > 0.5 ? 2.0 : 0.0), rng.normal(), rng.normal() + 3.0 * t});
    times.push_back(t);
  }
  return make_dataset(rows, times);
}

}  // namespace

TEST_CASE("moment tree: identical targets give a single leaf") {
  const auto ds = make_dataset({{0}, {1}, {2}, {3}, {4}, {5}}, {0.3, 0.3, 0.3, 0.3, 0.3, 0.3});
  FitConfig cfg;
  cfg.min_leaf = 1;
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(2), cfg);
  REQUIRE(m.trees().front().nodes().size() == 1);
  const auto p = predict_moments(m, std::vector<double>{2.0});
  CHECK(p.segment_id == 0);
  CHECK(p.moments[0] == doctest::Approx(0.3));
  CHECK(p.moments[1] == doctest::Approx(0.09));
}

TEST_CASE("moment tree: perfectly separable 1-D data") {
  const auto ds = make_dataset({{0}, {0}, {1}, {1}}, {0, 0, 1, 1});
  FitConfig cfg;
  cfg.min_leaf = 1;
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg);
  const auto& nodes = m.trees().front().nodes();
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[0].feature == 0);
  CHECK(nodes[0].threshold == 0.5);
  const auto a = predict_moments(m, std::vector<double>{0.0});
  const auto b = predict_moments(m, std::vector<double>{1.0});
  CHECK(a.segment_id == 0);
  CHECK(a.moments == std::vector<double>{0.0});
  CHECK(b.segment_id == 1);
  CHECK(b.moments == std::vector<double>{1.0});
}

TEST_CASE("moment tree of depth 2 is at least as good as the best single split") {
  Rng rng(20);
  std::vector<std::vector<double>> rows;
  std::vector<double> xs, ys, ts;
  for (int i = 0; i < 20; ++i) {
    const double x = rng.uniform();
    const double t = x > 0.3 ? 1.0 : 0.0;
    rows.push_back({x});
    xs.push_back(x);
    ys.push_back(t);
    ts.push_back(t);
  }
  const auto ds = make_dataset(rows, ts);
  FitConfig cfg;
  cfg.max_depth = 2;
  cfg.min_leaf = 2;
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg);
  const double oracle = best_single_split_mse(xs, ys, 2);
  CHECK(training_mse(m, ds) <= oracle + 1e-12);
}

TEST_CASE("moment tree: leaf ids follow depth-first left-first order") {
  const auto ds = seeded_blob_dataset(120, 4);
  FitConfig cfg;
  cfg.max_depth = 2;
  cfg.min_leaf = 10;
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(2), cfg);
  const auto& tree = m.trees().front();
  REQUIRE(tree.leaf_count() >= 3);

  // Oracle: walk the serialized node array recursively.
  const auto json = tree.to_json();
  std::vector<int> expected_order;
  std::function<void(int)> walk = [&](int i) {
    const auto& node = json["nodes"][static_cast<std::size_t>(i)];
    if (node.contains("feature")) {
      walk(node["left"].get<int>());
      walk(node["right"].get<int>());
    } else {
      expected_order.push_back(node["leaf_id"].get<int>());
    }
  };
  walk(0);
  std::vector<int> natural(expected_order.size());
  std::iota(natural.begin(), natural.end(), 0);
  CHECK(expected_order == natural);

  // And routing a sample reproduces the manual traversal.
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int node = 0;
    while (json["nodes"][static_cast<std::size_t>(node)].contains("feature")) {
      const auto& jn = json["nodes"][static_cast<std::size_t>(node)];
      node = ds.row(i)[jn["feature"].get<std::size_t>()] < jn["threshold"].get<double>() ? jn["left"].get<int>()
                                                                                        : jn["right"].get<int>();
    }
    CHECK(predict_moments(m, ds.row(i)).segment_id == json["nodes"][static_cast<std::size_t>(node)]["leaf_id"]);
  }
}

TEST_CASE("tree prediction partitions the training set") {
  const auto ds = seeded_blob_dataset(300, 8);
  const auto m = fit_moment_tree(ds, TimeEmbedding::fourier(3, 1.0), FitConfig{});
  const auto& tree = m.trees().front();
  std::map<int, std::int64_t> counts;
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[tree.leaf_id(ds.row(i))];
  std::int64_t total = 0;
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) {
      CHECK(counts[node.leaf_id] == node.n);
      total += node.n;
    }
  }
  CHECK(total == static_cast<std::int64_t>(ds.size()));
}

TEST_CASE("moment tree training MSE is non-increasing in depth") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = seeded_blob_dataset(250, seed);
    double previous = 1e300;
    for (int depth = 0; depth <= 8; ++depth) {
      FitConfig cfg;
      cfg.max_depth = depth;
      cfg.min_leaf = 5;
      const double mse = training_mse(fit_moment_tree(ds, TimeEmbedding::polynomial(3), cfg), ds);
      CHECK(mse <= previous + 1e-12);
      previous = mse;
    }
  }
}

TEST_CASE("moment tree rejects too few samples") {
  const auto ds = make_dataset({{0}, {1}, {2}}, {0, 0.5, 1});
  FitConfig cfg;
  cfg.min_leaf = 2;
  CHECK(code_of([&] { fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg); }) == ErrorCode::kTooFewSamples);
}

TEST_CASE("Laplace-smoothed probabilities of a single leaf") {
  TreeNode leaf;
  leaf.n = 4;
  leaf.target_mean = {0.75, 0.25};
  leaf.class_counts = {3, 1};
  const auto tree = DecisionTree::from_nodes(DecisionTree::Task::kClassification, 1, 2, 4, {leaf});
  const auto m = make_tree_model(ModelKind::kProbTree, tree, TimeEmbedding::binary(0.5));
  const auto p = predict_proba(m, std::vector<double>{0.0});
  CHECK(p[0] == doctest::Approx(4.0 / 6.0));
  CHECK(p[1] == doctest::Approx(2.0 / 6.0));
  CHECK(code_of([&] { predict_proba(m, std::vector<double>{0.0, 1.0}); }) == ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { predict_moments(m, std::vector<double>{0.0}); }) == ErrorCode::kWrongModelKind);
}

TEST_CASE("forest on separable data is confident on the training points") {
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    // Two tight groups with a wide gap between the classes.
    const int y = i >= 20 ? 1 : 0;
    rows.push_back({10.0 * y + (i % 20) / 20.0});
    times.push_back(i / 39.0);
    labels.push_back(y);
  }
  const auto ds = make_dataset(rows, times);
  FitConfig cfg;
  cfg.n_trees = 50;
  cfg.min_leaf = 1;
  cfg.seed = 5;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kForest);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto p = predict_proba(m, ds.row(i));
    CHECK(p[static_cast<std::size_t>(labels[i])] >= 0.9);
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("forest probabilities stay near 0.5 when labels ignore the features") {
  // 5-fold cross-fitting on n = 200 pure-noise labels.
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto ds = driftlens::testing::null_stream(200, 3, 100 + seed);
    Rng rng(seed);
    std::vector<int> labels(200);
    for (auto& y : labels) y = rng.uniform() < 0.5 ? 1 : 0;
    const auto folds = rng.permutation(200);
    double total = 0.0;
    for (std::size_t f = 0; f < 5; ++f) {
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t r = 0; r < 200; ++r) (r % 5 == f ? test_idx : train_idx).push_back(folds[r]);
      std::vector<int> train_labels;
      for (auto i : train_idx) train_labels.push_back(labels[i]);
      FitConfig cfg;
      cfg.n_trees = 30;
      cfg.seed = seed * 10 + f;
      const auto m = fit_prob_classifier(ds.subset(train_idx), train_labels, cfg, ClassifierKind::kForest);
      for (auto i : test_idx) total += std::abs(predict_proba(m, ds.row(i))[1] - 0.5);
    }
    CHECK(total / 200.0 < 0.15);
  }
}

TEST_CASE("linear classifier separates linearly separable data") {
  Rng rng(11);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    const double margin = a - 0.5 * b;
    if (std::abs(margin) < 0.2) continue;
    rows.push_back({a, b});
    labels.push_back(margin > 0 ? 1 : 0);
  }
  const auto ds = make_dataset(rows, uniform_time_grid(rows.size()));
  FitConfig cfg;
  cfg.l1_strength = 0.0;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kLinear);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    correct += (predict_proba(m, ds.row(i))[1] >= 0.5 ? 1 : 0) == labels[i];
  }
  CHECK(correct == ds.size());
}

TEST_CASE("strong L1 penalty zeroes every weight") {
  const auto ds = seeded_blob_dataset(150, 2);
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) > 0.5 ? 1 : 0);
  FitConfig cfg;
  cfg.l1_strength = 1e6;
  const auto logistic = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kLinear);
  for (double w : logistic.linear().weights[0]) CHECK(w == 0.0);
  const auto lasso = fit_linear_regressor(ds, TimeEmbedding::fourier(2, 1.0), cfg);
  for (const auto& ws : lasso.linear().weights) {
    for (double w : ws) CHECK(w == 0.0);
  }
}

TEST_CASE("classifier error paths") {
  const auto ds = make_dataset({{0}, {1}, {2}}, {0, 0.5, 1});
  const std::vector<int> single{1, 1, 1};
  CHECK(code_of([&] { fit_prob_classifier(ds, single, FitConfig{}, ClassifierKind::kTree); }) ==
        ErrorCode::kSingleClass);
  const std::vector<int> short_labels{0, 1};
  CHECK(code_of([&] { fit_prob_classifier(ds, short_labels, FitConfig{}, ClassifierKind::kTree); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("forest probability is the mean of member-tree probabilities") {
  const auto ds = seeded_blob_dataset(90, 6);
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) >= 0.5 ? 1 : 0);
  FitConfig cfg;
  cfg.n_trees = 3;
  cfg.seed = 17;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kForest);
  REQUIRE(m.trees().size() == 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double mean = 0.0;
    for (const auto& tree : m.trees()) mean += tree.class_probabilities(ds.row(i))[1];
    CHECK(predict_proba(m, ds.row(i))[1] == doctest::Approx(mean / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("rf_kernel") {
  const auto ds = seeded_blob_dataset(200, 12);
  FitConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 3;
  const auto forest = fit_moment_forest(ds, TimeEmbedding::polynomial(2), cfg);
  const auto x = ds.row(10);
  const auto y = ds.row(150);
  CHECK(rf_kernel(forest, x, x) == 1.0);

  // Oracle: enumerate leaf assignments tree by tree from the serialized model.
  const auto json = forest.to_json();
  int shared = 0;
  for (const auto& jt : json["trees"]) {
    auto route = [&](std::span<const double> v) {
      std::size_t node = 0;
      while (jt["nodes"][node].contains("feature")) {
        const auto& jn = jt["nodes"][node];
        node = v[jn["feature"].get<std::size_t>()] < jn["threshold"].get<double>() ? jn["left"].get<std::size_t>()
                                                                                  : jn["right"].get<std::size_t>();
      }
      return node;
    };
    shared += route(x) == route(y);
  }
  CHECK(rf_kernel(forest, x, y) == shared / 10.0);

  FitConfig one = cfg;
  one.n_trees = 1;
  const auto single = fit_moment_forest(ds, TimeEmbedding::polynomial(2), one);
  const auto& tree = single.trees().front();
  for (std::size_t j = 1; j < ds.size(); ++j) {
    if (tree.leaf_id(ds.row(0)) != tree.leaf_id(ds.row(j))) {
      CHECK(rf_kernel(single, ds.row(0), ds.row(j)) == 0.0);
      break;
    }
  }
  const auto plain = fit_moment_tree(ds, TimeEmbedding::polynomial(2), cfg);
  CHECK(code_of([&] { rf_kernel(plain, x, y); }) == ErrorCode::kWrongModelKind);
}

TEST_CASE("model feature importance") {
  SUBCASE("single leaf gives zeros") {
    const auto ds = make_dataset({{0, 1}, {1, 2}, {2, 3}}, {0.5, 0.5, 0.5});
    FitConfig cfg;
    cfg.min_leaf = 1;
    const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg);
    CHECK(model_feature_importance(m) == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("only feature 2 informative") {
    Rng rng(1);
    std::vector<std::vector<double>> rows;
    std::vector<double> times;
    for (int i = 0; i < 60; ++i) {
      const double t = i / 59.0;
      rows.push_back({rng.normal(), rng.normal(), t > 0.5 ? 5.0 : -5.0});
      times.push_back(t);
    }
    FitConfig cfg;
    cfg.max_depth = 1;
    const auto m = fit_moment_tree(make_dataset(rows, times), TimeEmbedding::binary(0.5), cfg);
    CHECK(model_feature_importance(m) == std::vector<double>{0.0, 0.0, 1.0});
  }
  SUBCASE("two-split tree matches hand-computed gain shares") {
    const auto ds = seeded_blob_dataset(100, 21);
    FitConfig cfg;
    cfg.max_depth = 2;
    cfg.min_leaf = 20;
    const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg);
    const auto json = m.trees().front().to_json();
    // Oracle: recompute each split's SSE reduction from the data by routing.
    std::vector<double> gains(3, 0.0);
    std::function<void(std::size_t, std::vector<std::size_t>)> visit = [&](std::size_t node,
                                                                          std::vector<std::size_t> rows) {
      const auto& jn = json["nodes"][node];
      if (!jn.contains("feature")) return;
      auto sse = [&](const std::vector<std::size_t>& r) {
        double mu = 0;
        for (auto i : r) mu += ds.time(i);
        mu /= r.size();
        double s = 0;
        for (auto i : r) s += (ds.time(i) - mu) * (ds.time(i) - mu);
        return s;
      };
      std::vector<std::size_t> l, r;
      const auto f = jn["feature"].get<std::size_t>();
      for (auto i : rows) (ds.row(i)[f] < jn["threshold"].get<double>() ? l : r).push_back(i);
      gains[f] += sse(rows) - sse(l) - sse(r);
      visit(jn["left"].get<std::size_t>(), l);
      visit(jn["right"].get<std::size_t>(), r);
    };
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    visit(0, all);
    const double total = gains[0] + gains[1] + gains[2];
    const auto fi = model_feature_importance(m);
    REQUIRE(total > 0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(fi[j] == doctest::Approx(gains[j] / total).epsilon(1e-9));
  }
  SUBCASE("linear models use weights") {
    const auto ds = seeded_blob_dataset(80, 2);
    const auto m = fit_linear_regressor(ds, TimeEmbedding::polynomial(1), FitConfig{});
    CHECK(code_of([&] { model_feature_importance(m); }) == ErrorCode::kWrongModelKind);
    CHECK(linear_weight_importance(m).size() == 3);
  }
}

TEST_CASE("serialization is lossless and deterministic across thread counts") {
  const auto ds = seeded_blob_dataset(200, 33);
  FitConfig cfg;
  cfg.n_trees = 12;
  cfg.seed = 99;
  set_thread_count(1);
  const auto a = fit_moment_forest(ds, TimeEmbedding::fourier(2, 1.0), cfg).to_json().dump();
  set_thread_count(4);
  const auto b = fit_moment_forest(ds, TimeEmbedding::fourier(2, 1.0), cfg).to_json().dump();
  set_thread_count(0);
  CHECK(a == b);

  const auto model = TimeModel::from_json(nlohmann::json::parse(a));
  CHECK(model.to_json().dump() == a);
  const auto original = fit_moment_forest(ds, TimeEmbedding::fourier(2, 1.0), cfg);
  for (std::size_t i = 0; i < ds.size(); i += 7) {
    CHECK(predict_moments(model, ds.row(i)).moments == predict_moments(original, ds.row(i)).moments);
  }

  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) >= 0.5);
  const auto logistic = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kLinear);
  const auto back = TimeModel::from_json(logistic.to_json());
  CHECK(predict_proba(back, ds.row(3)) == predict_proba(logistic, ds.row(3)));
}

TEST_CASE("forest segment ids hash leaf tuples and resolve through the registry") {
  const auto ds = seeded_blob_dataset(150, 40);
  FitConfig cfg;
  cfg.n_trees = 5;
  const auto m = fit_moment_forest(ds, TimeEmbedding::polynomial(2), cfg);
  SegmentRegistry registry;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto tuple = leaf_tuple(m, ds.row(i));
    const auto id = registry.add(tuple);
    CHECK(predict_moments(m, ds.row(i)).segment_id == id);
    CHECK(*registry.find(id) == tuple);
  }
  CHECK(registry.size() > 1);
}

TEST_CASE("binary moment tree and probability tree share splits") {
  // Variance on a 0/1 target is p(1-p), Gini is 2p(1-p): same split order.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = seeded_blob_dataset(200, 50 + seed);
    std::vector<int> labels;
    for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) >= 0.5 ? 1 : 0);
    FitConfig cfg;
    cfg.max_depth = 4;
    const auto moment = fit_moment_tree(ds, TimeEmbedding::binary(0.5), cfg);
    const auto prob = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kTree);
    const auto& a = moment.trees().front().nodes();
    const auto& b = prob.trees().front().nodes();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].feature == b[k].feature);
      CHECK(a[k].threshold == b[k].threshold);
      if (a[k].is_leaf()) {
        const double freq = static_cast<double>(b[k].class_counts[1]) / static_cast<double>(b[k].n);
        CHECK(a[k].target_mean[0] == doctest::Approx(freq).epsilon(1e-12));
      }
    }
  }
}
