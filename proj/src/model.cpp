#include "driftlens/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "driftlens/error.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

constexpr int kModelFormatVersion = 1;
// Probability floor for the linear classifier; tree models get theirs from
// Laplace smoothing.
constexpr double kLinearProbabilityFloor = 1e-6;

double sigmoid(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

TreeGrowOptions grow_options(const FitConfig& cfg, std::size_t features_per_split, std::uint64_t seed) {
  TreeGrowOptions opt;
  opt.max_depth = cfg.max_depth;
  opt.min_leaf = cfg.min_leaf;
  opt.features_per_split = features_per_split;
  opt.seed = seed;
  return opt;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, bool bootstrap, std::uint64_t seed) {
  if (!bootstrap) return all_rows(n);
  Rng rng(seed);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = rng.below(n);
  return rows;
}

template <typename GrowTree>
std::vector<DecisionTree> grow_forest(const FitConfig& cfg, std::size_t n, GrowTree&& grow) {
  std::vector<DecisionTree> trees(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(trees.size(), [&](std::size_t t) {
    const auto rows = bootstrap_rows(n, cfg.bootstrap, derive_seed(cfg.seed, t, 0));
    trees[t] = grow(rows, derive_seed(cfg.seed, t, 1));
  });
  return trees;
}

void check_dimension(const TimeModel& m, std::span<const double> x) {
  require(x.size() == m.feature_count(), ErrorCode::kDimensionMismatch,
          "expected " + std::to_string(m.feature_count()) + " features, got " + std::to_string(x.size()));
}

// Logistic regression with an L1 penalty, minimizing
//   (1/n) sum logloss(b + w.x) + lambda |w|_1
// by proximal coordinate descent with the per-coordinate curvature bound
// L_j = (1/4n) sum x_ij^2 (the logistic Hessian is at most 1/4).
LinearL1 fit_logistic_l1(const Matrix& x, std::span<const int> labels, double lambda) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> w(d, 0.0);
  double base_rate = 0.0;
  for (int y : labels) base_rate += y;
  base_rate *= inv_n;
  double b = std::log(base_rate / (1.0 - base_rate));
  std::vector<double> z(n, b);
  std::vector<double> curvature(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) curvature[j] += x(i, j) * x(i, j);
  }
  for (auto& c : curvature) c *= 0.25 * inv_n;

  constexpr int kMaxSweeps = 3000;
  constexpr double kTolerance = 1e-7;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_step = 0.0;
    double grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) grad_b += sigmoid(z[i]) - labels[i];
    const double step_b = -4.0 * grad_b * inv_n;
    b += step_b;
    for (auto& zi : z) zi += step_b;
    max_step = std::max(max_step, std::abs(step_b));

    for (std::size_t j = 0; j < d; ++j) {
      if (curvature[j] <= 0.0) continue;
      double grad = 0.0;
      for (std::size_t i = 0; i < n; ++i) grad += (sigmoid(z[i]) - labels[i]) * x(i, j);
      grad *= inv_n;
      const double updated = soft_threshold(w[j] - grad / curvature[j], lambda / curvature[j]);
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) z[i] += delta * x(i, j);
        w[j] = updated;
      }
      max_step = std::max(max_step, std::abs(delta));
    }
    if (max_step < kTolerance) break;
  }
  LinearL1 out;
  out.weights = {std::move(w)};
  out.bias = {b};
  out.l1_strength = lambda;
  out.logistic = true;
  return out;
}

// Lasso, one output at a time:
//   (1/2n) |y - b - Xw|^2 + lambda |w|_1
// by exact cyclic coordinate descent on centred data.
LinearL1 fit_lasso(const Matrix& x, const Matrix& targets, double lambda) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> x_mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x_mean[j] += x(i, j);
  }
  for (auto& v : x_mean) v *= inv_n;
  Matrix xc(n, d);
  std::vector<double> scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      xc(i, j) = x(i, j) - x_mean[j];
      scale[j] += xc(i, j) * xc(i, j);
    }
  }
  for (auto& s : scale) s *= inv_n;

  LinearL1 out;
  out.l1_strength = lambda;
  out.logistic = false;
  constexpr int kMaxSweeps = 5000;
  constexpr double kTolerance = 1e-9;
  for (std::size_t k = 0; k < targets.cols(); ++k) {
    double y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) y_mean += targets(i, k);
    y_mean *= inv_n;
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = targets(i, k) - y_mean;
    std::vector<double> w(d, 0.0);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      double max_step = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (scale[j] <= 1e-15) continue;
        double rho = 0.0;
        for (std::size_t i = 0; i < n; ++i) rho += xc(i, j) * residual[i];
        rho = rho * inv_n + scale[j] * w[j];
        const double updated = soft_threshold(rho, lambda) / scale[j];
        const double delta = updated - w[j];
        if (delta != 0.0) {
          for (std::size_t i = 0; i < n; ++i) residual[i] -= delta * xc(i, j);
          w[j] = updated;
        }
        max_step = std::max(max_step, std::abs(delta) * std::sqrt(scale[j]));
      }
      if (max_step < kTolerance) break;
    }
    double b = y_mean;
    for (std::size_t j = 0; j < d; ++j) b -= x_mean[j] * w[j];
    out.weights.push_back(std::move(w));
    out.bias.push_back(b);
  }
  return out;
}

double linear_response(const LinearL1& lin, std::size_t output, std::span<const double> x) {
  double z = lin.bias[output];
  const auto& w = lin.weights[output];
  for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * x[j];
  return z;
}

}  // namespace

void FitConfig::validate() const {
  require(min_leaf >= 1, ErrorCode::kInvalidArgument, "min_leaf must be >= 1");
  require(n_trees >= 1, ErrorCode::kInvalidArgument, "n_trees must be >= 1");
  require(max_depth >= 0, ErrorCode::kInvalidArgument, "max_depth must be >= 0");
  require(feature_subsample == 0.0 || (feature_subsample > 0.0 && feature_subsample <= 1.0),
          ErrorCode::kInvalidArgument, "feature_subsample must lie in (0, 1]");
  require(l1_strength >= 0.0, ErrorCode::kInvalidArgument, "l1_strength must be >= 0");
}

std::size_t FitConfig::features_per_split(std::size_t d) const {
  if (d == 0) return 0;
  const double rate =
      feature_subsample > 0.0 ? feature_subsample : std::sqrt(static_cast<double>(d)) / static_cast<double>(d);
  const auto count = static_cast<std::size_t>(std::lround(rate * static_cast<double>(d)));
  return std::clamp<std::size_t>(count, 1, d);
}

void to_json(nlohmann::json& j, const FitConfig& cfg) {
  j = nlohmann::json{{"max_depth", cfg.max_depth},       {"min_leaf", cfg.min_leaf},
                     {"n_trees", cfg.n_trees},           {"feature_subsample", cfg.feature_subsample},
                     {"bootstrap", cfg.bootstrap},       {"seed", cfg.seed},
                     {"l1_strength", cfg.l1_strength}};
}

void from_json(const nlohmann::json& j, FitConfig& cfg) {
  FitConfig defaults;
  cfg.max_depth = j.value("max_depth", defaults.max_depth);
  cfg.min_leaf = j.value("min_leaf", defaults.min_leaf);
  cfg.n_trees = j.value("n_trees", defaults.n_trees);
  cfg.feature_subsample = j.value("feature_subsample", defaults.feature_subsample);
  cfg.bootstrap = j.value("bootstrap", defaults.bootstrap);
  cfg.seed = j.value("seed", defaults.seed);
  cfg.l1_strength = j.value("l1_strength", defaults.l1_strength);
  cfg.validate();
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMomentTree:
      return "moment_tree";
    case ModelKind::kMomentForest:
      return "moment_forest";
    case ModelKind::kProbTree:
      return "prob_tree";
    case ModelKind::kProbForest:
      return "prob_forest";
    case ModelKind::kLinearL1:
      return "linear_l1";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (auto kind : {ModelKind::kMomentTree, ModelKind::kMomentForest, ModelKind::kProbTree,
                    ModelKind::kProbForest, ModelKind::kLinearL1}) {
    if (model_kind_name(kind) == name) return kind;
  }
  fail(ErrorCode::kUnknownKind, "unknown model kind '" + name + "'");
}

ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "tree") return ClassifierKind::kTree;
  if (name == "forest") return ClassifierKind::kForest;
  if (name == "linear") return ClassifierKind::kLinear;
  fail(ErrorCode::kUnknownKind, "unknown classifier kind '" + name + "'");
}

std::string classifier_kind_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kTree: return "tree";
    case ClassifierKind::kForest: return "forest";
    case ClassifierKind::kLinear: return "linear";
  }
  return "forest";
}

bool TimeModel::is_classifier() const {
  return kind_ == ModelKind::kProbTree || kind_ == ModelKind::kProbForest ||
         (kind_ == ModelKind::kLinearL1 && linear_.logistic);
}

std::size_t TimeModel::output_size() const { return is_classifier() ? 2 : embedding_.output_size(); }

Matrix embed_targets(const Dataset& ds, const TimeEmbedding& emb) {
  Matrix targets(ds.size(), emb.output_size());
  for (std::size_t i = 0; i < ds.size(); ++i) embed_time_into(ds.time(i), emb, targets.row(i));
  return targets;
}

TimeModel fit_moment_tree(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg) {
  cfg.validate();
  emb.validate();
  require(ds.size() >= 2 * static_cast<std::size_t>(cfg.min_leaf), ErrorCode::kTooFewSamples,
          "moment tree needs at least 2 * min_leaf samples");
  const Matrix x = Matrix::from_features(ds);
  const Matrix y = embed_targets(ds, emb);
  const auto rows = all_rows(ds.size());
  TimeModel m;
  m.kind_ = ModelKind::kMomentTree;
  m.embedding_ = emb;
  m.n_features_ = ds.feature_count();
  m.config_ = cfg;
  m.trees_.push_back(DecisionTree::fit_regression(x, y, rows, grow_options(cfg, 0, cfg.seed)));
  return m;
}

TimeModel fit_moment_forest(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg) {
  cfg.validate();
  emb.validate();
  require(ds.size() >= 2 * static_cast<std::size_t>(cfg.min_leaf), ErrorCode::kTooFewSamples,
          "moment forest needs at least 2 * min_leaf samples");
  const Matrix x = Matrix::from_features(ds);
  const Matrix y = embed_targets(ds, emb);
  const std::size_t mtry = cfg.features_per_split(ds.feature_count());
  TimeModel m;
  m.kind_ = ModelKind::kMomentForest;
  m.embedding_ = emb;
  m.n_features_ = ds.feature_count();
  m.config_ = cfg;
  m.trees_ = grow_forest(cfg, ds.size(), [&](const std::vector<std::size_t>& rows, std::uint64_t seed) {
    return DecisionTree::fit_regression(x, y, rows, grow_options(cfg, mtry, seed));
  });
  return m;
}

TimeModel fit_prob_classifier(const Dataset& ds, std::span<const int> labels, const FitConfig& cfg,
                              ClassifierKind kind) {
  cfg.validate();
  require(labels.size() == ds.size(), ErrorCode::kDimensionMismatch, "label count does not match dataset");
  require(ds.size() >= 2, ErrorCode::kTooFewSamples, "classifier needs at least two samples");
  std::size_t positives = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorCode::kInvalidArgument, "labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  require(positives > 0 && positives < labels.size(), ErrorCode::kSingleClass,
          "both classes must be present");
  const Matrix x = Matrix::from_features(ds);
  TimeModel m;
  m.embedding_ = TimeEmbedding::binary(0.5);
  m.n_features_ = ds.feature_count();
  m.config_ = cfg;
  switch (kind) {
    case ClassifierKind::kTree:
      m.kind_ = ModelKind::kProbTree;
      m.trees_.push_back(
          DecisionTree::fit_classification(x, labels, 2, all_rows(ds.size()), grow_options(cfg, 0, cfg.seed)));
      break;
    case ClassifierKind::kForest: {
      m.kind_ = ModelKind::kProbForest;
      const std::size_t mtry = cfg.features_per_split(ds.feature_count());
      m.trees_ = grow_forest(cfg, ds.size(), [&](const std::vector<std::size_t>& rows, std::uint64_t seed) {
        return DecisionTree::fit_classification(x, labels, 2, rows, grow_options(cfg, mtry, seed));
      });
      break;
    }
    case ClassifierKind::kLinear:
      m.kind_ = ModelKind::kLinearL1;
      m.linear_ = fit_logistic_l1(x, labels, cfg.l1_strength);
      break;
  }
  return m;
}

TimeModel fit_linear_regressor(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg) {
  cfg.validate();
  emb.validate();
  require(ds.size() >= 2, ErrorCode::kTooFewSamples, "linear model needs at least two samples");
  TimeModel m;
  m.kind_ = ModelKind::kLinearL1;
  m.embedding_ = emb;
  m.n_features_ = ds.feature_count();
  m.config_ = cfg;
  m.linear_ = fit_lasso(Matrix::from_features(ds), embed_targets(ds, emb), cfg.l1_strength);
  return m;
}

TimeModel make_tree_model(ModelKind kind, DecisionTree tree, const TimeEmbedding& emb) {
  require(kind == ModelKind::kMomentTree || kind == ModelKind::kProbTree, ErrorCode::kWrongModelKind,
          "make_tree_model builds single-tree models only");
  require((kind == ModelKind::kProbTree) == (tree.task() == DecisionTree::Task::kClassification),
          ErrorCode::kWrongModelKind, "tree task does not match model kind");
  TimeModel m;
  m.kind_ = kind;
  m.embedding_ = emb;
  m.n_features_ = tree.feature_count();
  m.trees_.push_back(std::move(tree));
  return m;
}

std::vector<double> predict_proba(const TimeModel& m, std::span<const double> x) {
  require(m.is_classifier(), ErrorCode::kWrongModelKind, "predict_proba needs a classifier");
  check_dimension(m, x);
  if (m.kind() == ModelKind::kLinearL1) {
    const double p = std::clamp(sigmoid(linear_response(m.linear(), 0, x)), kLinearProbabilityFloor,
                                1.0 - kLinearProbabilityFloor);
    return {1.0 - p, p};
  }
  std::vector<double> p(2, 0.0);
  for (const auto& tree : m.trees()) {
    const auto q = tree.class_probabilities(x);
    p[0] += q[0];
    p[1] += q[1];
  }
  const double inv = 1.0 / static_cast<double>(m.trees().size());
  p[0] *= inv;
  p[1] *= inv;
  return p;
}

std::vector<int> leaf_tuple(const TimeModel& m, std::span<const double> x) {
  require(m.is_tree_based(), ErrorCode::kWrongModelKind, "leaf tuples need a tree model");
  check_dimension(m, x);
  std::vector<int> ids;
  ids.reserve(m.trees().size());
  for (const auto& tree : m.trees()) ids.push_back(tree.leaf_id(x));
  return ids;
}

std::int64_t hash_leaf_tuple(std::span<const int> tuple) {
  // FNV-1a over little-endian 32-bit ids, folded to a non-negative int64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int id : tuple) {
    auto v = static_cast<std::uint32_t>(id);
    for (int byte = 0; byte < 4; ++byte) {
      h ^= (v >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return static_cast<std::int64_t>(h & 0x3fffffffffffffffULL);
}

std::int64_t SegmentRegistry::add(const std::vector<int>& tuple) {
  const auto id = hash_leaf_tuple(tuple);
  auto [it, inserted] = tuples_.emplace(id, tuple);
  require(inserted || it->second == tuple, ErrorCode::kInternal, "segment hash collision");
  return id;
}

const std::vector<int>* SegmentRegistry::find(std::int64_t id) const {
  const auto it = tuples_.find(id);
  return it == tuples_.end() ? nullptr : &it->second;
}

MomentPrediction predict_moments(const TimeModel& m, std::span<const double> x) {
  require(m.kind() == ModelKind::kMomentTree || m.kind() == ModelKind::kMomentForest,
          ErrorCode::kWrongModelKind, "predict_moments needs a moment tree or forest");
  check_dimension(m, x);
  MomentPrediction out;
  if (m.kind() == ModelKind::kMomentTree) {
    const auto& leaf = m.trees().front().leaf(x);
    out.segment_id = leaf.leaf_id;
    out.moments = leaf.target_mean;
    return out;
  }
  out.moments.assign(m.embedding().output_size(), 0.0);
  std::vector<int> ids;
  ids.reserve(m.trees().size());
  for (const auto& tree : m.trees()) {
    const auto& leaf = tree.leaf(x);
    ids.push_back(leaf.leaf_id);
    for (std::size_t c = 0; c < out.moments.size(); ++c) out.moments[c] += leaf.target_mean[c];
  }
  const double inv = 1.0 / static_cast<double>(m.trees().size());
  for (auto& v : out.moments) v *= inv;
  out.segment_id = hash_leaf_tuple(ids);
  return out;
}

std::vector<double> predict_output(const TimeModel& m, std::span<const double> x) {
  if (m.is_classifier()) return predict_proba(m, x);
  if (m.kind() == ModelKind::kLinearL1) {
    check_dimension(m, x);
    std::vector<double> out(m.linear().weights.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = linear_response(m.linear(), k, x);
    return out;
  }
  return predict_moments(m, x).moments;
}

double predict_scalar(const TimeModel& m, std::span<const double> x) {
  const auto out = predict_output(m, x);
  return m.is_classifier() ? out[1] : out[0];
}

double rf_kernel(const TimeModel& m, std::span<const double> x, std::span<const double> y) {
  require(m.is_forest(), ErrorCode::kWrongModelKind, "rf_kernel needs a forest");
  check_dimension(m, x);
  check_dimension(m, y);
  std::size_t shared = 0;
  for (const auto& tree : m.trees()) {
    if (tree.leaf_node(x) == tree.leaf_node(y)) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(m.trees().size());
}

std::vector<double> model_feature_importance(const TimeModel& m) {
  require(m.is_tree_based(), ErrorCode::kWrongModelKind,
          "impurity importance needs a tree model; use linear_weight_importance");
  std::vector<double> fi(m.feature_count(), 0.0);
  for (const auto& tree : m.trees()) {
    const auto raw = tree.raw_feature_importance();
    for (std::size_t j = 0; j < fi.size(); ++j) fi[j] += raw[j];
  }
  const double total = std::accumulate(fi.begin(), fi.end(), 0.0);
  if (total <= 0.0) return std::vector<double>(fi.size(), 0.0);
  for (auto& v : fi) v /= total;
  return fi;
}

std::vector<double> linear_weight_importance(const TimeModel& m) {
  require(m.kind() == ModelKind::kLinearL1, ErrorCode::kWrongModelKind, "not a linear model");
  std::vector<double> out(m.feature_count(), 0.0);
  for (const auto& w : m.linear().weights) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += std::abs(w[j]);
  }
  return out;
}

nlohmann::json TimeModel::to_json() const {
  nlohmann::json j{{"format", "driftlens.model"},
                   {"version", kModelFormatVersion},
                   {"kind", model_kind_name(kind_)},
                   {"n_features", n_features_},
                   {"embedding", embedding_},
                   {"config", config_}};
  if (is_tree_based()) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : trees_) trees.push_back(tree.to_json());
    j["trees"] = std::move(trees);
  } else {
    j["linear"] = {{"weights", linear_.weights},
                   {"bias", linear_.bias},
                   {"l1_strength", linear_.l1_strength},
                   {"logistic", linear_.logistic}};
  }
  return j;
}

TimeModel TimeModel::from_json(const nlohmann::json& j) {
  require(j.value("format", "") == "driftlens.model", ErrorCode::kParse, "not a driftlens model document");
  require(j.value("version", 0) == kModelFormatVersion, ErrorCode::kParse, "unsupported model version");
  TimeModel m;
  m.kind_ = parse_model_kind(j.at("kind").get<std::string>());
  m.n_features_ = j.at("n_features").get<std::size_t>();
  m.embedding_ = j.at("embedding").get<TimeEmbedding>();
  m.config_ = j.at("config").get<FitConfig>();
  if (m.is_tree_based()) {
    for (const auto& jt : j.at("trees")) m.trees_.push_back(DecisionTree::from_json(jt));
    require(!m.trees_.empty(), ErrorCode::kParse, "model has no trees");
  } else {
    const auto& jl = j.at("linear");
    m.linear_.weights = jl.at("weights").get<std::vector<std::vector<double>>>();
    m.linear_.bias = jl.at("bias").get<std::vector<double>>();
    m.linear_.l1_strength = jl.at("l1_strength").get<double>();
    m.linear_.logistic = jl.at("logistic").get<bool>();
  }
  return m;
}

}  // namespace driftlens
