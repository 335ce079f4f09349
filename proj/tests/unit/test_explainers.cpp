#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "driftlens/error.hpp"
#include "driftlens/explainers.hpp"
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

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Two informative features: t = sigmoid(1.5 x0 + 0.7 x1 + noise).
Dataset regression_stream(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(), b = rng.normal();
    rows.push_back({a, b});
    times.push_back(sigmoid(1.5 * a + 0.7 * b + 0.3 * rng.normal()));
  }
  return make_dataset(rows, times);
}

// Labels 1[t >= 0.5] where only x0 matters.
Dataset class_stream(std::size_t n, std::uint64_t seed, std::vector<int>& labels, double scale1 = 1.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal();
    rows.push_back({a, scale1 * rng.normal(), rng.normal()});
    times.push_back(a + 0.4 * rng.normal() > 0 ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.49));
  }
  const auto ds = make_dataset(rows, times);
  labels.clear();
  for (std::size_t i = 0; i < ds.size(); ++i) labels.push_back(ds.time(i) >= 0.5);
  return ds;
}

std::vector<std::size_t> order_by_score(const std::vector<double>& s) {
  ImportanceReport r;
  r.scores = s;
  return r.ranking();
}

}  // namespace

TEST_CASE("pfi: unused features score exactly zero") {
  std::vector<int> labels;
  const auto ds = class_stream(200, 1, labels);
  FitConfig cfg;
  cfg.max_depth = 1;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kTree);
  REQUIRE(m.trees().front().nodes().front().feature == 0);
  const auto r = permutation_importance(m, ds, labels, 5, 3);
  CHECK(r.scores[1] == 0.0);
  CHECK(r.scores[2] == 0.0);
  CHECK(r.std_errors[1] == 0.0);
  CHECK(r.scores[0] > 0.2);
  CHECK(r.ranking().front() == 0);
}

TEST_CASE("pfi on a 4-point perfect classifier matches the exact permutation expectation") {
  const auto ds = make_dataset({{0}, {1}, {2}, {3}}, {0.0, 0.1, 0.9, 1.0});
  const std::vector<int> labels{0, 0, 1, 1};
  FitConfig cfg;
  cfg.min_leaf = 1;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kTree);

  // Oracle: enumerate all 24 permutations of the column under the rule x >= 1.5.
  std::vector<int> perm{0, 1, 2, 3};
  double total_acc = 0.0;
  int count = 0;
  do {
    int correct = 0;
    for (int i = 0; i < 4; ++i) correct += (perm[i] >= 2 ? 1 : 0) == labels[i];
    total_acc += correct / 4.0;
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double exact = 1.0 - total_acc / count;
  CHECK(exact == doctest::Approx(0.5));

  const auto r = permutation_importance(m, ds, labels, 4000, 11);
  CHECK(r.baseline_metric == 1.0);
  CHECK(std::abs(r.scores[0] - exact) <= 3.0 * r.std_errors[0]);
}

TEST_CASE("pfi: more repeats shrink the spread of the estimate") {
  std::vector<int> labels;
  const auto ds = class_stream(150, 2, labels);
  const auto m = fit_prob_classifier(ds, labels, FitConfig{}, ClassifierKind::kTree);
  auto spread = [&](int repeats) {
    std::vector<double> est;
    for (std::uint64_t s = 0; s < 20; ++s) est.push_back(permutation_importance(m, ds, labels, repeats, s).scores[0]);
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
    double ss = 0;
    for (double e : est) ss += (e - mean) * (e - mean);
    return std::sqrt(ss / (est.size() - 1));
  };
  CHECK(spread(10) < spread(1));
  const auto one = permutation_importance(m, ds, labels, 1, 0);
  CHECK(std::isnan(one.std_errors[0]));
}

TEST_CASE("pfi rankings are invariant to rescaling a feature before training") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<int> la, lb;
    const auto a = class_stream(120, 40 + seed, la, 1.0);
    const auto b = class_stream(120, 40 + seed, lb, 7.3);
    REQUIRE(la == lb);
    FitConfig cfg;
    cfg.seed = seed;
    const auto ma = fit_prob_classifier(a, la, cfg, ClassifierKind::kTree);
    const auto mb = fit_prob_classifier(b, lb, cfg, ClassifierKind::kTree);
    CHECK(permutation_importance(ma, a, la, 5, seed).ranking() ==
          permutation_importance(mb, b, lb, 5, seed).ranking());
  }
}

TEST_CASE("pfi neg_mse and dimension errors") {
  const auto ds = regression_stream(300, 4);
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(2), FitConfig{});
  const auto targets = embed_targets(ds, TimeEmbedding::polynomial(2));
  const auto r = permutation_importance(m, ds, targets, 5, 1);
  CHECK(r.baseline_metric <= 0.0);
  CHECK(r.ranking() == std::vector<std::size_t>{0, 1});
  const Matrix wrong(ds.size(), 1);
  CHECK(code_of([&] { permutation_importance(m, ds, wrong, 5, 1); }) == ErrorCode::kDimensionMismatch);
  const auto other = make_dataset({{1, 2, 3}}, {0.5});
  CHECK(code_of([&] { permutation_importance(m, other, embed_targets(other, TimeEmbedding::polynomial(2)), 1, 1); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("model importance reports") {
  const auto ds = regression_stream(300, 5);
  const auto tree = fit_moment_tree(ds, TimeEmbedding::polynomial(1), FitConfig{});
  const auto r = model_importance(tree);
  CHECK(r.method == ImportanceMethod::kModelFi);
  CHECK(std::accumulate(r.scores.begin(), r.scores.end(), 0.0) == doctest::Approx(1.0));
  const auto lin = model_importance(fit_linear_regressor(ds, TimeEmbedding::polynomial(1), FitConfig{}));
  CHECK(lin.method == ImportanceMethod::kLinearWeights);
  CHECK(lin.ranking().front() == 0);
}

TEST_CASE("ipfi: capacity-one reservoir swaps in the previous sample") {
  // Tree splits x0 at 0.5; x1 is ignored. Stream alternates x0 = 0, 1.
  const auto ds = make_dataset({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 2}, {1, 2}}, {0.0, 0.1, 0.8, 0.9, 0.2, 1.0});
  FitConfig cfg;
  cfg.min_leaf = 1;
  cfg.max_depth = 1;
  const auto m = fit_moment_tree(ds, TimeEmbedding::polynomial(1), cfg);
  const double m0 = predict_scalar(m, std::vector<double>{0, 0});
  const double m1 = predict_scalar(m, std::vector<double>{1, 0});
  IpfiState state(2, 1, 1.0, 7);
  CHECK(code_of([&] { state.report(); }) == ErrorCode::kEmptyReservoir);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x{static_cast<double>(i % 2), static_cast<double>(i % 3)};
    const auto target = predict_output(m, x);
    ipfi_update(state, m, x, target);
    CHECK(state.reservoir.size() == 1);
    CHECK(state.reservoir.front() == x);
  }
  const auto r = state.report();
  CHECK(r.scores[0] == doctest::Approx((m1 - m0) * (m1 - m0)).epsilon(1e-12));
  CHECK(r.scores[1] == 0.0);
  CHECK(r.stream_sums[0] == doctest::Approx(49 * (m1 - m0) * (m1 - m0)));
}

TEST_CASE("ipfi running mean converges to batch pfi on a stationary stream") {
  const auto train = regression_stream(2000, 60);
  const auto m = fit_linear_regressor(train, TimeEmbedding::polynomial(1), FitConfig{});
  const auto ds = regression_stream(2000, 61);
  const auto targets = embed_targets(ds, TimeEmbedding::polynomial(1));
  const auto batch = permutation_importance(m, ds, targets, 20, 3);

  IpfiState state(2, 200, 1.0, 5);
  Rng rng(8);
  for (auto i : rng.permutation(ds.size())) ipfi_update(state, m, ds.row(i), targets.row(i));
  const auto inc = state.report();
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(inc.scores[j] - batch.scores[j]) <= 0.10 * std::abs(batch.scores[j]));
  }
}

TEST_CASE("ipfi with gamma = 1 is unbiased for batch pfi") {
  const auto train = regression_stream(1000, 70);
  const auto m = fit_linear_regressor(train, TimeEmbedding::polynomial(1), FitConfig{});
  std::vector<double> diffs;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto ds = regression_stream(300, 100 + s);
    const auto targets = embed_targets(ds, TimeEmbedding::polynomial(1));
    const auto batch = permutation_importance(m, ds, targets, 10, s);
    IpfiState state(2, 200, 1.0, s);
    Rng rng(s);
    for (auto i : rng.permutation(ds.size())) ipfi_update(state, m, ds.row(i), targets.row(i));
    diffs.push_back(state.report().scores[0] - batch.scores[0]);
  }
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / diffs.size();
  double ss = 0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double se = std::sqrt(ss / (diffs.size() - 1)) / std::sqrt(static_cast<double>(diffs.size()));
  CHECK(std::abs(mean) <= 2.0 * se);
}

TEST_CASE("ipfi decay and ignored features") {
  std::vector<int> labels;
  const auto ds = class_stream(400, 9, labels);
  FitConfig cfg;
  cfg.max_depth = 1;
  const auto m = fit_prob_classifier(ds, labels, cfg, ClassifierKind::kTree);
  IpfiState state(3, 50, 0.9, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::vector<double> target{static_cast<double>(labels[i])};
    ipfi_update(state, m, ds.row(i), target);
  }
  const auto r = state.report();
  CHECK(r.scores[1] == 0.0);
  CHECK(r.scores[2] == 0.0);
  CHECK(std::isfinite(r.scores[0]));
  CHECK(code_of([] { IpfiState(2, 0, 0.5); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { IpfiState(2, 5, 1.5); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("local surrogate") {
  const std::vector<double> anchor{0.3, -0.2};
  const std::vector<double> scale{1.0, 2.0};
  SUBCASE("constant model") {
    const auto s = local_surrogate([](std::span<const double>) { return 0.42; }, anchor, scale, {});
    for (double c : s.coefficients) CHECK(std::abs(c) <= 1e-9);
    CHECK(s.intercept == doctest::Approx(0.42).epsilon(1e-12));
  }
  SUBCASE("linear model weights are recovered") {
    const auto train = regression_stream(1500, 3);
    const auto m = fit_linear_regressor(train, TimeEmbedding::polynomial(1), FitConfig{});
    SurrogateOptions opt;
    opt.n_samples = 2000;
    const auto s = local_surrogate(m, anchor, feature_scales(train), opt);
    for (std::size_t j = 0; j < 2; ++j) {
      const double w = m.linear().weights[0][j];
      CHECK(std::abs(s.coefficients[j] - w) <= 0.05 * std::abs(w));
    }
    CHECK(s.fit_r2 == doctest::Approx(1.0));
  }
  SUBCASE("infinite kernel width is ordinary least squares on the same draws") {
    auto f = [](std::span<const double> x) { return std::sin(x[0]) + x[0] * x[1]; };
    SurrogateOptions opt;
    opt.n_samples = 300;
    opt.seed = 17;
    opt.kernel_width = std::numeric_limits<double>::infinity();
    const auto s = local_surrogate(f, anchor, scale, opt);
    // Oracle: regenerate the draws and solve the normal equations directly.
    Rng rng(17);
    Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
    Eigen::Vector3d xty = Eigen::Vector3d::Zero();
    for (int i = 0; i < 300; ++i) {
      std::vector<double> z(2);
      for (int j = 0; j < 2; ++j) z[j] = anchor[j] + opt.sigma * scale[j] * rng.normal();
      const Eigen::Vector3d row(z[0] - anchor[0], z[1] - anchor[1], 1.0);
      xtx += row * row.transpose();
      xty += row * f(z);
    }
    const Eigen::Vector3d beta = xtx.inverse() * xty;
    CHECK(std::abs(s.coefficients[0] - beta(0)) <= 1e-9);
    CHECK(std::abs(s.coefficients[1] - beta(1)) <= 1e-9);
    CHECK(std::abs(s.intercept - beta(2)) <= 1e-9);
    opt.kernel_width = 1e12;
    const auto wide = local_surrogate(f, anchor, scale, opt);
    CHECK(std::abs(wide.coefficients[0] - s.coefficients[0]) <= 1e-9);
  }
  SUBCASE("coefficients match central differences of a smooth model") {
    auto f = [](std::span<const double> x) { return sigmoid(1.2 * x[0] - 0.8 * x[1] + 0.3); };
    SurrogateOptions opt;
    opt.sigma = 0.05;
    opt.n_samples = 2000;
    const auto s = local_surrogate(f, anchor, std::vector<double>{1.0, 1.0}, opt);
    const double h = 1e-5;
    for (std::size_t j = 0; j < 2; ++j) {
      auto up = anchor, down = anchor;
      up[j] += h;
      down[j] -= h;
      const double fd = (f(up) - f(down)) / (2 * h);
      CHECK(std::abs(s.coefficients[j] - fd) <= 0.10 * std::abs(fd));
    }
  }
  SUBCASE("degenerate perturbations fall back to ridge") {
    auto f = [](std::span<const double> x) { return x[0]; };
    const auto s = local_surrogate(f, anchor, std::vector<double>{1.0, 0.0}, {});
    CHECK(s.ridge_jitter);
    CHECK(s.coefficients[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(s.coefficients[1]) <= 1e-6);
  }
  SUBCASE("errors") {
    SurrogateOptions opt;
    opt.sigma = 0.0;
    CHECK(code_of([&] { local_surrogate([](std::span<const double>) { return 0.0; }, anchor, scale, opt); }) ==
          ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("nearest counterfactual") {
  SUBCASE("three points by hand") {
    const auto ds = make_dataset({{0, 0}, {1, 0}, {0, 3}}, {0.1, 0.8, 0.9});
    const std::vector<Region> regions{Region::kBefore, Region::kAfter, Region::kAfter};
    const auto cf = nearest_counterfactual(ds, regions, 0);
    CHECK(cf.counterfactual_index == 1);
    CHECK(cf.distance == 1.0);
    CHECK(cf.target_region == Region::kAfter);
    const auto back = nearest_counterfactual(ds, regions, 2);
    CHECK(back.counterfactual_index == 0);
    CHECK(back.distance == 3.0);
  }
  SUBCASE("same-region nearest neighbour is skipped") {
    const auto ds = make_dataset({{0}, {0.1}, {5}}, {0.0, 0.1, 0.9});
    const std::vector<Region> regions{Region::kBefore, Region::kBefore, Region::kAfter};
    CHECK(nearest_counterfactual(ds, regions, 0).counterfactual_index == 2);
  }
  SUBCASE("ties go to the lowest index") {
    const auto ds = make_dataset({{0}, {1}, {-1}}, {0.0, 0.5, 0.9});
    const std::vector<Region> regions{Region::kBefore, Region::kAfter, Region::kAfter};
    CHECK(nearest_counterfactual(ds, regions, 0).counterfactual_index == 1);
  }
  SUBCASE("optimality against brute force on random data") {
    Rng rng(4);
    std::vector<std::vector<double>> rows;
    std::vector<double> times;
    for (int i = 0; i < 80; ++i) {
      rows.push_back({rng.normal(), rng.normal(), rng.normal()});
      times.push_back(rng.uniform());
    }
    const auto ds = make_dataset(rows, times);
    std::vector<Region> regions;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double u = rng.uniform();
      regions.push_back(u < 0.3 ? Region::kBefore : u < 0.6 ? Region::kAfter : Region::kNotDrifting);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (regions[i] == Region::kNotDrifting) {
        CHECK(code_of([&] { nearest_counterfactual(ds, regions, i); }) == ErrorCode::kInvalidArgument);
        continue;
      }
      const auto cf = nearest_counterfactual(ds, regions, i);
      CHECK(regions[cf.counterfactual_index] == cf.target_region);
      CHECK(cf.counterfactual_index != i);
      for (std::size_t k = 0; k < ds.size(); ++k) {
        if (regions[k] != cf.target_region) continue;
        double d = 0;
        for (std::size_t j = 0; j < 3; ++j) d += (ds.row(i)[j] - ds.row(k)[j]) * (ds.row(i)[j] - ds.row(k)[j]);
        CHECK(std::sqrt(d) >= cf.distance);
      }
    }
  }
  SUBCASE("no opposite-region samples") {
    const auto ds = make_dataset({{0}, {1}}, {0.0, 1.0});
    const std::vector<Region> regions{Region::kBefore, Region::kNotDrifting};
    CHECK(code_of([&] { nearest_counterfactual(ds, regions, 0); }) == ErrorCode::kNoTargetSamples);
  }
}
