#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "driftlens/error.hpp"
#include "driftlens/prototypes.hpp"
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

std::vector<std::vector<double>> two_blobs(std::size_t per_blob, std::uint64_t seed, std::vector<int>& label) {
  Rng rng(seed);
  std::vector<std::vector<double>> pts;
  label.clear();
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const int b = i % 2;
    pts.push_back({rng.normal(b ? 6.0 : 0.0, 0.7), rng.normal(b ? -3.0 : 0.0, 0.7)});
    label.push_back(b);
  }
  return pts;
}

std::vector<std::vector<double>> rows_of(const Dataset& ds) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.emplace_back(ds.row(i).begin(), ds.row(i).end());
  return out;
}

// Blob A present throughout; blob B at (4, 0) before 0.5 and (0, 4) after.
Dataset swap_stream(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows;
  for (double t : grid) {
    if (rng.uniform() < 0.5) {
      rows.push_back({rng.normal(0, 0.4), rng.normal(0, 0.4)});
    } else if (t < 0.5) {
      rows.push_back({rng.normal(4, 0.4), rng.normal(0, 0.4)});
    } else {
      rows.push_back({rng.normal(0, 0.4), rng.normal(4, 0.4)});
    }
  }
  return make_dataset(rows, grid);
}

void check_partition(const PrototypeGroup& g) {
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& p : g.prototypes) {
    total += p.members.size();
    seen.insert(p.members.begin(), p.members.end());
  }
  CHECK(total == g.members.size());
  CHECK(seen == std::set<std::size_t>(g.members.begin(), g.members.end()));
}

}  // namespace

TEST_CASE("shortest paths on a hand-built 4-node graph") {
  // 0 -1- 1 -2- 2 -4- 3, plus a long direct edge 0 -10- 3 and 0 -5- 2.
  const std::vector<WeightedEdge> edges{{0, 1, 1}, {1, 2, 2}, {2, 3, 4}, {0, 3, 10}, {0, 2, 5}};
  const auto d = all_pairs_shortest_paths(4, edges);
  const double expected[4][4] = {{0, 1, 3, 7}, {1, 0, 2, 6}, {3, 2, 0, 4}, {7, 6, 4, 0}};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) CHECK(d(a, b) == expected[a][b]);
  }
  CHECK(code_of([] { all_pairs_shortest_paths(3, {{0, 1, 1.0}}); }) == ErrorCode::kDisconnectedGraph);
}

TEST_CASE("distance matrices are symmetric with zero diagonal") {
  const auto ds = swap_stream(120, 3);
  const auto pts = rows_of(ds);
  FitConfig cfg;
  cfg.n_trees = 15;
  const auto forest = fit_moment_forest(ds, TimeEmbedding::polynomial(2), cfg);
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) >= 0.5);
  const auto clf = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kForest);

  for (auto kind : {MetricKind::kEuclidean, MetricKind::kGeodesic, MetricKind::kForestKernel}) {
    for (const TimeModel* m : {&forest, &clf}) {
      DriftMetricConfig mc;
      mc.kind = kind;
      const auto d = pairwise_drift_distance(pts, m, mc);
      for (std::size_t a = 0; a < pts.size(); ++a) {
        CHECK(d(a, a) == 0.0);
        for (std::size_t b = 0; b < pts.size(); ++b) CHECK(d(a, b) == d(b, a));
      }
      if (kind == MetricKind::kGeodesic) {
        Rng rng(7);
        for (int trial = 0; trial < 300; ++trial) {
          const auto a = rng.below(pts.size()), b = rng.below(pts.size()), c = rng.below(pts.size());
          CHECK(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("forest kernel distance is zero for points sharing every leaf") {
  const auto ds = swap_stream(100, 1);
  FitConfig cfg;
  cfg.n_trees = 10;
  const auto forest = fit_moment_forest(ds, TimeEmbedding::polynomial(2), cfg);
  std::vector<std::vector<double>> pts{rows_of(ds)[5], rows_of(ds)[5], rows_of(ds)[60]};
  DriftMetricConfig mc;
  mc.kind = MetricKind::kForestKernel;
  const auto d = pairwise_drift_distance(pts, &forest, mc);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == doctest::Approx(1.0 - rf_kernel(forest, pts[0], pts[2])));
  const auto tree = fit_moment_tree(ds, TimeEmbedding::polynomial(2), cfg);
  CHECK(code_of([&] { pairwise_drift_distance(pts, &tree, mc); }) == ErrorCode::kWrongModelKind);
  mc.kind = MetricKind::kGeodesic;
  CHECK(code_of([&] { pairwise_drift_distance(pts, nullptr, mc); }) == ErrorCode::kWrongModelKind);
}

TEST_CASE("geodesic graph is repaired when k-NN leaves it disconnected") {
  std::vector<int> label;
  const auto pts = two_blobs(20, 2, label);
  std::vector<TimedSample> samples;
  for (std::size_t i = 0; i < pts.size(); ++i) samples.push_back({pts[i], label[i] ? 1.0 : 0.0});
  const Dataset ds({"a", "b"}, samples);
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) > 0.5);
  const auto clf = fit_prob_classifier(ds, labels, FitConfig{}, ClassifierKind::kTree);
  const auto edges = drift_knn_graph(pts, clf, 2, 1.0);
  const auto d = all_pairs_shortest_paths(pts.size(), edges);
  for (double v : d.data()) CHECK(std::isfinite(v));
  // The bridge crosses the model boundary, so d_L contributes to cross-blob paths.
  CHECK(prediction_distance(clf, pts[0], pts[1]) > 0.5);
}

TEST_CASE("k-means") {
  SUBCASE("k equals group size gives zero cost") {
    std::vector<int> label;
    const auto pts = two_blobs(5, 1, label);
    const auto r = kmeans(pts, static_cast<int>(pts.size()), 3);
    CHECK(r.cost == 0.0);
    for (const auto& p : r.prototypes) CHECK(p.members.size() == 1);
  }
  SUBCASE("k = 1 returns the centroid") {
    std::vector<int> label;
    const auto pts = two_blobs(30, 4, label);
    const auto r = kmeans(pts, 1, 0);
    for (std::size_t j = 0; j < 2; ++j) {
      double mean = 0.0;
      for (const auto& p : pts) mean += p[j];
      mean /= pts.size();
      CHECK(std::abs(r.prototypes[0].features[j] - mean) <= 1e-9);
    }
  }
  SUBCASE("two separated blobs are recovered exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<int> label;
      const auto pts = two_blobs(40, 100 + seed, label);
      const auto r = kmeans(pts, 2, seed);
      for (const auto& p : r.prototypes) {
        std::set<int> blobs;
        for (auto i : p.members) blobs.insert(label[i]);
        CHECK(blobs.size() == 1);
      }
      CHECK(r.prototypes[0].members.size() + r.prototypes[1].members.size() == pts.size());
    }
  }
  SUBCASE("errors") {
    std::vector<std::vector<double>> none;
    CHECK(code_of([&] { kmeans(none, 1, 0); }) == ErrorCode::kEmptyGroup);
    std::vector<std::vector<double>> two{{0.0}, {1.0}};
    CHECK(code_of([&] { kmeans(two, 3, 0); }) == ErrorCode::kKTooLarge);
  }
}

TEST_CASE("k-medoids") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<int> label;
    const auto pts = two_blobs(30, 200 + seed, label);
    DriftMetricConfig mc;
    const auto d = pairwise_drift_distance(pts, nullptr, mc);
    const auto r = k_medoids(pts, d, 2);
    for (std::size_t k = 1; k < r.cost_trace.size(); ++k) CHECK(r.cost_trace[k] <= r.cost_trace[k - 1]);
    for (const auto& p : r.prototypes) {
      REQUIRE(p.medoid.has_value());
      CHECK(p.features == pts[*p.medoid]);
      std::set<int> blobs;
      for (auto i : p.members) blobs.insert(label[i]);
      CHECK(blobs.size() == 1);
    }
  }
  std::vector<int> label;
  const auto pts = two_blobs(4, 9, label);
  const auto d = pairwise_drift_distance(pts, nullptr, DriftMetricConfig{});
  const auto all = k_medoids(pts, d, static_cast<int>(pts.size()));
  CHECK(all.cost == 0.0);
}

TEST_CASE("build_prototypes from a locus report") {
  const auto ds = swap_stream(300, 11);
  LocalizeOptions lopt;
  FitConfig cfg;
  cfg.n_trees = 30;
  const auto locus = localize(ds, 0.5, cfg, lopt);
  const auto labels = time_labels(ds, 0.5);
  const auto clf = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kForest);
  for (auto kind : {MetricKind::kEuclidean, MetricKind::kGeodesic, MetricKind::kForestKernel}) {
    // One prototype per side: a calibrated locus also admits ~5% of the
    // static blob, which larger k would give its own prototype.
    PrototypeOptions opt;
    opt.metric.kind = kind;
    opt.k_per_group = 1;
    const auto set = build_prototypes(ds, locus, &clf, opt);
    REQUIRE(set.groups.size() == 2);
    CHECK(set.groups[0].name == "before");
    CHECK(set.groups[1].name == "after");
    for (const auto& g : set.groups) {
      check_partition(g);
      for (const auto& p : g.prototypes) {
        // before prototypes sit in the (4, 0) blob, after ones in (0, 4)
        if (g.name == "before") CHECK(p.features[0] > 2.0);
        if (g.name == "after") CHECK(p.features[1] > 2.0);
        std::size_t occ = 0;
        for (auto c : p.occurrence) occ += c;
        CHECK(occ == p.members.size());
      }
    }
    CHECK(set.to_json()["groups"].size() == 2);

    opt.k_per_group = 3;
    const auto wide = build_prototypes(ds, locus, &clf, opt);
    for (const auto& g : wide.groups) {
      check_partition(g);
      const auto& main = *std::max_element(g.prototypes.begin(), g.prototypes.end(), [](const auto& a, const auto& b) {
        return a.members.size() < b.members.size();
      });
      if (g.name == "before") CHECK(main.features[0] > 2.0);
      if (g.name == "after") CHECK(main.features[1] > 2.0);
    }
  }
}

TEST_CASE("build_prototypes from a segmentation") {
  const auto ds = swap_stream(300, 5);
  FitConfig cfg;
  cfg.max_depth = 3;
  cfg.min_leaf = 10;
  const auto seg = segment(ds, TimeEmbedding::polynomial(2), cfg);
  REQUIRE(seg.flagged_count() > 0);
  PrototypeOptions opt;
  opt.metric.kind = MetricKind::kGeodesic;
  const auto set = build_prototypes(ds, seg, opt);
  CHECK(set.groups.size() == seg.flagged_count());
  for (const auto& g : set.groups) {
    check_partition(g);
    const auto id = std::stoll(g.name.substr(g.name.find(':') + 1));
    for (const auto& p : g.prototypes) {
      for (auto i : p.members) CHECK(seg.assignments[i] == id);
    }
  }

  const auto none = build_prototypes(ds, flag_drifting_segments(seg, 2.0), opt);
  CHECK(none.groups.empty());
  CHECK(!none.warnings.empty());
}

TEST_CASE("k is clamped for small groups") {
  const auto ds = make_dataset({{0, 0}, {1, 1}, {5, 5}}, {0.0, 0.5, 1.0});
  PrototypeOptions opt;
  opt.k_per_group = 3;
  const std::vector<std::pair<std::string, std::vector<std::size_t>>> groups{{"small", {0, 1}}, {"empty", {}}};
  const auto set = build_prototypes(ds, groups, nullptr, opt);
  REQUIRE(set.groups.size() == 1);
  CHECK(set.groups[0].prototypes.size() == 2);
  CHECK(set.warnings.size() == 2);
}
