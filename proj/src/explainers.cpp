#include "driftlens/explainers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "driftlens/error.hpp"
#include "driftlens/parallel.hpp"

namespace driftlens {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Score of the model on every row, with column `feature` replaced through
// `perm` (perm == nullptr leaves the data intact). Higher is better.
using RowScorer = std::function<double(std::size_t row, std::span<const double> x)>;

double score_rows(const Dataset& ds, const RowScorer& scorer, std::size_t feature, const std::vector<std::size_t>* perm) {
  std::vector<double> x(ds.feature_count());
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.row(i);
    std::copy(row.begin(), row.end(), x.begin());
    if (perm) x[feature] = ds.row((*perm)[i])[feature];
    total += scorer(i, x);
  }
  return total / static_cast<double>(ds.size());
}

ImportanceReport run_pfi(const TimeModel& m, const Dataset& ds, const RowScorer& scorer, int n_repeats,
                         std::uint64_t seed) {
  require(n_repeats >= 1, ErrorCode::kInvalidArgument, "n_repeats must be at least 1");
  require(ds.feature_count() == m.feature_count(), ErrorCode::kDimensionMismatch,
          "dataset and model differ in feature count");
  require(!ds.empty(), ErrorCode::kEmptyDataset, "no samples to score");
  ImportanceReport r;
  r.method = ImportanceMethod::kPfi;
  r.n_repeats = n_repeats;
  r.baseline_metric = score_rows(ds, scorer, 0, nullptr);
  const std::size_t d = ds.feature_count();
  r.scores.assign(d, 0.0);
  r.std_errors.assign(d, kNaN);
  parallel_for(d, [&](std::size_t j) {
    std::vector<double> drops(static_cast<std::size_t>(n_repeats));
    for (int rep = 0; rep < n_repeats; ++rep) {
      Rng rng(derive_seed(seed, j, static_cast<std::uint64_t>(rep)));
      const auto perm = rng.permutation(ds.size());
      drops[static_cast<std::size_t>(rep)] = r.baseline_metric - score_rows(ds, scorer, j, &perm);
    }
    const double mean = std::accumulate(drops.begin(), drops.end(), 0.0) / drops.size();
    r.scores[j] = mean;
    if (n_repeats > 1) {
      double ss = 0.0;
      for (double v : drops) ss += (v - mean) * (v - mean);
      r.std_errors[j] = std::sqrt(ss / (drops.size() - 1)) / std::sqrt(static_cast<double>(drops.size()));
    }
  });
  return r;
}

double squared_error(std::span<const double> pred, std::span<const double> target) {
  double s = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) s += (pred[c] - target[c]) * (pred[c] - target[c]);
  return s;
}

double sample_loss(const TimeModel& m, std::span<const double> x, std::span<const double> target) {
  if (m.is_classifier()) {
    const int predicted = predict_proba(m, x)[1] >= 0.5 ? 1 : 0;
    return predicted == static_cast<int>(target[0]) ? 0.0 : 1.0;
  }
  return squared_error(predict_output(m, x), target);
}

nlohmann::json nan_to_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string importance_method_name(ImportanceMethod m) {
  switch (m) {
    case ImportanceMethod::kPfi: return "pfi";
    case ImportanceMethod::kIpfi: return "ipfi";
    case ImportanceMethod::kModelFi: return "model_fi";
    case ImportanceMethod::kLinearWeights: return "linear_weights";
  }
  return "pfi";
}

std::vector<std::size_t> ImportanceReport::ranking() const {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

nlohmann::json ImportanceReport::to_json(const std::vector<std::string>& feature_names) const {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t j = 0; j < scores.size(); ++j) {
    nlohmann::json f = {{"index", j},
                        {"score", scores[j]},
                        {"std_error", nan_to_null(j < std_errors.size() ? std_errors[j] : kNaN)}};
    if (j < feature_names.size()) f["name"] = feature_names[j];
    if (j < stream_sums.size()) f["stream_sum"] = stream_sums[j];
    features.push_back(std::move(f));
  }
  return {{"method", importance_method_name(method)},
          {"n_repeats", n_repeats},
          {"baseline_metric", nan_to_null(baseline_metric)},
          {"ranking", ranking()},
          {"features", features}};
}

ImportanceReport permutation_importance(const TimeModel& m, const Dataset& ds, std::span<const int> labels,
                                        int n_repeats, std::uint64_t seed) {
  require(m.is_classifier(), ErrorCode::kWrongModelKind, "accuracy needs a classifier");
  require(labels.size() == ds.size(), ErrorCode::kDimensionMismatch, "label count does not match dataset");
  const RowScorer scorer = [&](std::size_t i, std::span<const double> x) {
    return (predict_proba(m, x)[1] >= 0.5 ? 1 : 0) == labels[i] ? 1.0 : 0.0;
  };
  return run_pfi(m, ds, scorer, n_repeats, seed);
}

ImportanceReport permutation_importance(const TimeModel& m, const Dataset& ds, const Matrix& targets,
                                        int n_repeats, std::uint64_t seed) {
  require(targets.rows() == ds.size() && targets.cols() == m.output_size(), ErrorCode::kDimensionMismatch,
          "target matrix does not match dataset and model output");
  const RowScorer scorer = [&](std::size_t i, std::span<const double> x) {
    return -squared_error(predict_output(m, x), targets.row(i));
  };
  return run_pfi(m, ds, scorer, n_repeats, seed);
}

ImportanceReport model_importance(const TimeModel& m) {
  ImportanceReport r;
  r.n_repeats = 0;
  r.baseline_metric = kNaN;
  if (m.is_tree_based()) {
    r.method = ImportanceMethod::kModelFi;
    r.scores = model_feature_importance(m);
  } else {
    r.method = ImportanceMethod::kLinearWeights;
    r.scores = linear_weight_importance(m);
  }
  r.std_errors.assign(r.scores.size(), kNaN);
  return r;
}

IpfiState::IpfiState(std::size_t n_features, std::size_t capacity_, double gamma_, std::uint64_t seed,
                     std::size_t warmup_)
    : capacity(capacity_), gamma(gamma_), warmup(warmup_), accumulators(n_features, 0.0), sums(n_features, 0.0),
      rng(seed) {
  require(capacity >= 1, ErrorCode::kInvalidArgument, "reservoir capacity must be at least 1");
  require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
  require(warmup >= 1 && warmup <= capacity, ErrorCode::kInvalidArgument, "warmup must lie in [1, capacity]");
}

ImportanceReport IpfiState::report() const {
  require(updates > 0, ErrorCode::kEmptyReservoir, "no importance updates yet (reservoir warming up)");
  ImportanceReport r;
  r.method = ImportanceMethod::kIpfi;
  r.scores = accumulators;
  r.stream_sums = sums;
  r.std_errors.assign(accumulators.size(), kNaN);
  r.n_repeats = 1;
  r.baseline_metric = kNaN;
  return r;
}

void ipfi_update(IpfiState& state, const TimeModel& m, std::span<const double> x, std::span<const double> target) {
  require(x.size() == state.accumulators.size() && x.size() == m.feature_count(), ErrorCode::kDimensionMismatch,
          "sample dimension does not match the iPFI state");
  ++state.seen;
  if (state.reservoir.size() >= state.warmup) {
    ++state.updates;
    const double base = sample_loss(m, x, target);
    std::vector<double> swapped(x.begin(), x.end());
    for (std::size_t j = 0; j < x.size(); ++j) {
      const auto& donor = state.reservoir[state.rng.below(state.reservoir.size())];
      swapped[j] = donor[j];
      const double diff = sample_loss(m, swapped, target) - base;
      swapped[j] = x[j];
      state.sums[j] += diff;
      if (state.gamma == 1.0) {
        state.accumulators[j] += (diff - state.accumulators[j]) / static_cast<double>(state.updates);
      } else {
        state.accumulators[j] = state.gamma * state.accumulators[j] + (1.0 - state.gamma) * diff;
      }
    }
  }
  state.reservoir.emplace_back(x.begin(), x.end());
  if (state.reservoir.size() > state.capacity) state.reservoir.pop_front();
}

nlohmann::json LocalSurrogate::to_json() const {
  return {{"anchor", anchor},
          {"coefficients", coefficients},
          {"intercept", intercept},
          {"kernel_width", nan_to_null(kernel_width)},
          {"n_samples", n_samples},
          {"fit_r2", fit_r2},
          {"ridge_jitter", ridge_jitter}};
}

LocalSurrogate local_surrogate(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> anchor, std::span<const double> feature_scale,
                               const SurrogateOptions& options) {
  const std::size_t d = anchor.size();
  require(d >= 1, ErrorCode::kInvalidArgument, "empty anchor");
  require(feature_scale.size() == d, ErrorCode::kDimensionMismatch, "feature scale length");
  require(options.sigma > 0.0, ErrorCode::kInvalidArgument, "sigma must be positive");
  require(options.n_samples >= 2, ErrorCode::kInvalidArgument, "n_samples must be at least 2");
  require(options.kernel_width >= 0.0, ErrorCode::kInvalidArgument, "kernel_width must be >= 0");
  const double width = options.kernel_width > 0.0 ? options.kernel_width : 0.75 * std::sqrt(static_cast<double>(d));
  const auto n = static_cast<Eigen::Index>(options.n_samples);

  Rng rng(options.seed);
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd y(n), w(n);
  std::vector<double> z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = anchor[j] + options.sigma * feature_scale[j] * rng.normal();
      d2 += (z[j] - anchor[j]) * (z[j] - anchor[j]);
      design(i, static_cast<Eigen::Index>(j)) = z[j] - anchor[j];
    }
    design(i, static_cast<Eigen::Index>(d)) = 1.0;
    y(i) = f(z);
    w(i) = std::isinf(width) ? 1.0 : std::exp(-d2 / (width * width));
  }

  LocalSurrogate s;
  s.anchor.assign(anchor.begin(), anchor.end());
  s.kernel_width = width;
  s.n_samples = options.n_samples;
  require(w.sum() > 0.0, ErrorCode::kSingularFit, "all kernel weights vanished");

  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * design;
  const Eigen::VectorXd b = sw.asDiagonal() * y;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::VectorXd beta;
  if (qr.rank() == a.cols()) {
    beta = qr.solve(b);
  } else {
    s.ridge_jitter = true;
    Eigen::MatrixXd gram = a.transpose() * a;
    const double jitter = 1e-8 * std::max(1.0, gram.trace() / static_cast<double>(gram.rows()));
    gram.diagonal().array() += jitter;
    beta = gram.ldlt().solve(a.transpose() * b);
  }
  // Coefficients are on anchor-centred inputs, so the intercept is the
  // surrogate's value at the anchor.
  s.coefficients.assign(beta.data(), beta.data() + d);
  s.intercept = beta(static_cast<Eigen::Index>(d));

  const double wsum = w.sum();
  const double ybar = w.dot(y) / wsum;
  const Eigen::VectorXd resid = y - design * beta;
  const double ss_res = (w.array() * resid.array().square()).sum();
  const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
  s.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res <= 1e-24 ? 1.0 : 0.0);
  return s;
}

LocalSurrogate local_surrogate(const TimeModel& m, std::span<const double> anchor,
                               std::span<const double> feature_scale, const SurrogateOptions& options) {
  require(anchor.size() == m.feature_count(), ErrorCode::kDimensionMismatch, "anchor dimension");
  return local_surrogate([&m](std::span<const double> x) { return predict_scalar(m, x); }, anchor, feature_scale,
                         options);
}

std::vector<double> feature_scales(const Dataset& ds) {
  std::vector<double> out(ds.feature_count(), 1.0);
  for (std::size_t j = 0; j < ds.feature_count(); ++j) {
    const auto col = ds.column(j);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / col.size());
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) out[j] = sd;
  }
  return out;
}

nlohmann::json Counterfactual::to_json() const {
  return {{"original_index", original_index},
          {"counterfactual_index", counterfactual_index},
          {"distance", distance},
          {"original_region", region_name(original_region)},
          {"target_region", region_name(target_region)}};
}

Counterfactual nearest_counterfactual(const Dataset& ds, std::span<const Region> regions, std::size_t original,
                                      const Matrix* dist) {
  require(regions.size() == ds.size(), ErrorCode::kMismatchedDataset, "regions do not match the dataset");
  require(original < ds.size(), ErrorCode::kIndexOutOfRange, "original index out of range");
  const Region from = regions[original];
  require(from != Region::kNotDrifting, ErrorCode::kInvalidArgument, "original sample is not drifting");
  if (dist) {
    require(dist->rows() == ds.size() && dist->cols() == ds.size(), ErrorCode::kDimensionMismatch,
            "distance matrix size");
  }
  const Region target = from == Region::kBefore ? Region::kAfter : Region::kBefore;
  Counterfactual cf;
  cf.original_index = original;
  cf.original_region = from;
  cf.target_region = target;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  const auto x = ds.row(original);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (regions[i] != target || i == original) continue;
    double d;
    if (dist) {
      d = (*dist)(original, i);
    } else {
      d = 0.0;
      const auto y = ds.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - y[j]) * (x[j] - y[j]);
      d = std::sqrt(d);
    }
    if (d < best) {
      best = d;
      cf.counterfactual_index = i;
      found = true;
    }
  }
  require(found, ErrorCode::kNoTargetSamples, "no sample in the " + region_name(target) + " region");
  cf.distance = best;
  return cf;
}

}  // namespace driftlens
