#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "driftlens/config.hpp"
#include "driftlens/error.hpp"
#include "driftlens/generators.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/pipeline.hpp"
#include "helpers.hpp"

using namespace driftlens;

namespace {

std::size_t argmax_abs(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (std::abs(v[j]) > std::abs(v[best])) best = j;
  }
  return best;
}

// A static cluster at the origin and a cluster that jumps from x0 = +4 to
// x0 = -4 at t = 0.5; x1 and x2 are noise everywhere.
Dataset one_feature_swap(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const bool moving = rng.uniform() < 0.5;
    const double center = moving ? (grid[i] < 0.5 ? 4.0 : -4.0) : 0.0;
    rows.push_back({center + 0.5 * rng.normal(), rng.normal(), rng.normal()});
  }
  return testing::make_dataset(rows, grid);
}

// x0 jumps by 4 for the last fifth of the stream.
Dataset late_burst(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back({(grid[i] >= 0.8 ? 4.0 : 0.0) + rng.normal(), rng.normal(), rng.normal()});
  }
  return testing::make_dataset(rows, grid);
}

MethodPlan small_plan(const std::string& grouping, std::vector<std::string> methods, std::uint64_t seed) {
  MethodPlan p;
  p.set_grouping(grouping);
  p.methods = std::move(methods);
  p.fit.n_trees = 20;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("localize@0.5 with pfi yields one importance report and no prototypes") {
  const auto stream = perturb(gen_base(BaseKind::kMixed, 600, 3), Perturbation::parse("shift:5"), 1, 4);
  const auto bundle = explain_drift(stream.dataset, small_plan("localize@0.5", {"pfi"}, 1));
  CHECK(bundle.importances.size() == 1);
  CHECK(bundle.importances[0].method == ImportanceMethod::kPfi);
  CHECK_FALSE(bundle.prototypes.has_value());
  CHECK(bundle.surrogates.empty());
  CHECK(bundle.counterfactuals.empty());
  CHECK(bundle.errors.empty());
  REQUIRE(bundle.locus.has_value());
  CHECK(bundle.locus->change_point == 0.5);
  const auto j = bundle.to_json();
  CHECK(j["status"] == "ok");
  CHECK(j["prototypes"].is_null());
  CHECK(j["seed"] == 1);
  CHECK(j["config"]["grouping"] == "localize@0.5");
  CHECK(j["importances"].size() == 1);
}

TEST_CASE("segment counterfactuals without a complement are recorded per prototype") {
  auto plan = small_plan("segment@poly:5", {"counterfactuals"}, 2);
  plan.fit.max_depth = 1;
  plan.segment.threshold = 0.5;  // only the burst segment is flagged
  const auto bundle = explain_drift(late_burst(800, 5), plan);
  REQUIRE(bundle.segmentation.has_value());
  REQUIRE(bundle.prototypes.has_value());
  CHECK(std::count(bundle.regions.begin(), bundle.regions.end(), Region::kBefore) == 0);
  CHECK(std::count(bundle.regions.begin(), bundle.regions.end(), Region::kAfter) > 0);
  std::size_t n_prototypes = 0;
  for (const auto& g : bundle.prototypes->groups) n_prototypes += g.prototypes.size();
  REQUIRE(n_prototypes > 0);
  CHECK(bundle.counterfactuals.empty());
  REQUIRE(bundle.errors.size() == n_prototypes);
  for (const auto& e : bundle.errors) {
    CHECK(e.method == "counterfactuals");
    CHECK(e.code == ErrorCode::kNoTargetSamples);
    CHECK(e.target.rfind("segment:", 0) == 0);
    CHECK(e.target.find('#') != std::string::npos);
  }
  const auto j = bundle.to_json();
  CHECK(j["status"] == "partial");
  CHECK(j["errors"][0]["code"] == "NoTargetSamples");
  CHECK(j["grouping"]["kind"] == "segment");
}

TEST_CASE("pfi, surrogate and counterfactuals agree on a single informative feature") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ds = one_feature_swap(800, seed);
    const auto bundle = explain_drift(ds, small_plan("localize@0.5", {"pfi", "surrogate", "counterfactuals"}, seed));
    CHECK(bundle.errors.empty());
    const auto* pfi = bundle.importance(ImportanceMethod::kPfi);
    REQUIRE(pfi != nullptr);
    CHECK(pfi->ranking().front() == 0);
    REQUIRE_FALSE(bundle.surrogates.empty());
    for (const auto& [target, s] : bundle.surrogates) {
      CHECK_MESSAGE(argmax_abs(s.coefficients) == pfi->ranking().front(), target.group, "#", target.prototype);
    }
    REQUIRE_FALSE(bundle.counterfactuals.empty());
    for (const auto& [target, c] : bundle.counterfactuals) {
      CHECK(c.original_region != c.target_region);
      CHECK(bundle.regions[c.counterfactual_index] == c.target_region);
    }
  }
}

TEST_CASE("two-cluster stream: counterfactuals are optimal and land in the swapped cluster") {
  const auto stream = two_cluster_swap(600, 9);
  const auto bundle = explain_drift(stream.dataset, small_plan("localize@0.5", {"counterfactuals"}, 9));
  REQUIRE_FALSE(bundle.counterfactuals.empty());
  const auto ds = standardize(stream.dataset);
  for (const auto& [target, c] : bundle.counterfactuals) {
    const auto x = ds.row(c.original_index);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (bundle.regions[i] != c.target_region) continue;
      const auto y = ds.row(i);
      double d = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - y[j]) * (x[j] - y[j]);
      CHECK(std::sqrt(d) >= c.distance - 1e-12);
    }
  }
}

TEST_CASE("bundle is deterministic across thread counts") {
  const auto ds = one_feature_swap(500, 4);
  auto plan = small_plan("localize@0.5", {"pfi", "ipfi", "model_fi", "surrogate", "counterfactuals"}, 4);
  set_thread_count(1);
  const auto a = explain_drift(ds, plan).to_json().dump();
  set_thread_count(3);
  const auto b = explain_drift(ds, plan).to_json().dump();
  set_thread_count(0);
  CHECK(a == b);
}

TEST_CASE("segment grouping runs every method") {
  auto plan = small_plan("segment@poly:5", {"pfi", "ipfi", "model_fi", "surrogate"}, 3);
  plan.fit.max_depth = 3;
  const auto bundle = explain_drift(late_burst(600, 3), plan);
  CHECK(bundle.importances.size() == 3);
  for (const auto& r : bundle.importances) CHECK(r.ranking().front() == 0);
}

TEST_CASE("auto change point scans candidates") {
  const auto stream = perturb(gen_base(BaseKind::kRandomRbf, 600, 1), Perturbation::parse("shift:5"), 1, 2);
  const auto bundle = explain_drift(stream.dataset, small_plan("localize@auto", {"model_fi"}, 1));
  REQUIRE(bundle.locus.has_value());
  CHECK(std::abs(bundle.locus->change_point - *stream.change_point) <= 0.1 + 1e-9);
}

TEST_CASE("plan parsing, echo and validation") {
  MethodPlan p;
  p.set_grouping("segment@fourier:5:0.25");
  CHECK(p.grouping == MethodPlan::Grouping::kSegment);
  CHECK(p.embedding == "fourier:5:0.25");
  CHECK(p.grouping_string() == "segment@fourier:5:0.25");
  p.set_grouping("localize@0.4");
  CHECK(p.change_point == 0.4);
  p.set_grouping("localize@auto");
  CHECK_FALSE(p.change_point.has_value());
  CHECK_THROWS_AS(p.set_grouping("cluster@3"), Error);
  CHECK_THROWS_AS(p.set_grouping("localize@half"), Error);

  const auto text = R"(
grouping = "localize@0.3"
methods = ["pfi", "surrogate"]
seed = 11
[fit]
n_trees = 7
[localize]
classifier = "tree"
theta = 0.6
[prototypes]
k = 2
metric = "euclidean"
[surrogate]
sigma = 0.25
)";
  const auto plan = MethodPlan::from_json(parse_config(text));
  CHECK(plan.change_point == 0.3);
  CHECK(plan.methods == std::vector<std::string>{"pfi", "surrogate"});
  CHECK(plan.seed == 11);
  CHECK(plan.fit.n_trees == 7);
  CHECK(plan.fit.max_depth == FitConfig{}.max_depth);
  CHECK(plan.localize.theta == 0.6);
  CHECK(plan.prototypes.k_per_group == 2);
  CHECK(plan.surrogate.sigma == 0.25);
  const auto back = MethodPlan::from_json(plan.to_json());
  CHECK(back.to_json() == plan.to_json());

  CHECK_THROWS_AS(MethodPlan::from_json({{"methods", {"shap"}}}), Error);
  CHECK_THROWS_AS(MethodPlan::from_json({{"methods", nlohmann::json::array()}}), Error);
  CHECK_THROWS_AS(MethodPlan::from_json({{"grouping", "localize@1.5"}}), Error);
  CHECK_THROWS_AS(MethodPlan::from_json({{"fit", {{"max_dpeth", 3}}}}), Error);
  CHECK_THROWS_AS(MethodPlan::from_json({{"seed", "x"}}), Error);
}

TEST_CASE("explain_drift rejects empty input") {
  CHECK_THROWS_AS(explain_drift(Dataset{}, MethodPlan{}), Error);
}
