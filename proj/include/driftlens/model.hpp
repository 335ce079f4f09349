#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/embedding.hpp"
#include "driftlens/matrix.hpp"
#include "driftlens/tree.hpp"
#include "json.hpp"

namespace driftlens {

struct FitConfig {
  int max_depth = 8;
  int min_leaf = 5;
  int n_trees = 100;
  // Fraction of features tried per split in forests; 0 selects sqrt(d)/d.
  double feature_subsample = 0.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  double l1_strength = 0.01;

  void validate() const;
  // Features examined per split for a forest over d features.
  std::size_t features_per_split(std::size_t d) const;
};

void to_json(nlohmann::json& j, const FitConfig& cfg);
void from_json(const nlohmann::json& j, FitConfig& cfg);

enum class ModelKind { kMomentTree, kMomentForest, kProbTree, kProbForest, kLinearL1 };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

// Classifier family for fit_prob_classifier.
enum class ClassifierKind { kTree, kForest, kLinear };
ClassifierKind parse_classifier_kind(const std::string& name);
std::string classifier_kind_name(ClassifierKind kind);

// L1-regularized linear map from features to one or more outputs. With a
// Binary embedding it is a logistic classifier; otherwise one lasso
// regression per embedded time component.
struct LinearL1 {
  std::vector<std::vector<double>> weights;  // [output][feature]
  std::vector<double> bias;                  // [output]
  double l1_strength = 0.0;
  bool logistic = true;
};

// A trained h(t | x). Immutable after fitting.
class TimeModel {
 public:
  ModelKind kind() const { return kind_; }
  const TimeEmbedding& embedding() const { return embedding_; }
  std::size_t feature_count() const { return n_features_; }
  const FitConfig& config() const { return config_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const LinearL1& linear() const { return linear_; }

  bool is_classifier() const;
  bool is_forest() const { return kind_ == ModelKind::kMomentForest || kind_ == ModelKind::kProbForest; }
  bool is_tree_based() const { return kind_ != ModelKind::kLinearL1; }
  // Output length of predict_output: 2 for classifiers, embedding size else.
  std::size_t output_size() const;

  nlohmann::json to_json() const;
  static TimeModel from_json(const nlohmann::json& j);

 private:
  friend TimeModel fit_moment_tree(const Dataset&, const TimeEmbedding&, const FitConfig&);
  friend TimeModel fit_moment_forest(const Dataset&, const TimeEmbedding&, const FitConfig&);
  friend TimeModel fit_prob_classifier(const Dataset&, std::span<const int>, const FitConfig&,
                                       ClassifierKind);
  friend TimeModel fit_linear_regressor(const Dataset&, const TimeEmbedding&, const FitConfig&);
  friend TimeModel make_tree_model(ModelKind, DecisionTree, const TimeEmbedding&);

  ModelKind kind_ = ModelKind::kMomentTree;
  TimeEmbedding embedding_;
  std::size_t n_features_ = 0;
  FitConfig config_;
  std::vector<DecisionTree> trees_;
  LinearL1 linear_;
};

// Regression tree on embedded time targets, minimizing within-leaf SSE.
TimeModel fit_moment_tree(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg);
// Bagged moment trees with per-split feature subsampling.
TimeModel fit_moment_forest(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg);
// Probabilistic before/after classifier over labels in {0, 1}.
TimeModel fit_prob_classifier(const Dataset& ds, std::span<const int> labels, const FitConfig& cfg,
                              ClassifierKind kind);
// Lasso regression on embedded time targets.
TimeModel fit_linear_regressor(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg);

// Wraps an explicitly constructed tree (tests and tooling).
TimeModel make_tree_model(ModelKind kind, DecisionTree tree, const TimeEmbedding& emb);

// Embedded time targets of every sample, n x output_size.
Matrix embed_targets(const Dataset& ds, const TimeEmbedding& emb);

// [p(before), p(after)]; each in [eps, 1 - eps] for tree models.
std::vector<double> predict_proba(const TimeModel& m, std::span<const double> x);

struct MomentPrediction {
  std::int64_t segment_id = 0;
  std::vector<double> moments;
};

// Segment id and stored moment vector. Forest ids are a stable hash of the
// per-tree leaf-id tuple (see leaf_tuple / SegmentRegistry).
MomentPrediction predict_moments(const TimeModel& m, std::span<const double> x);

// Uniform prediction surface used by explainers: class probabilities for
// classifiers, predicted embedded-time vector for regressors.
std::vector<double> predict_output(const TimeModel& m, std::span<const double> x);

// Scalar summary: p(after) for classifiers, first predicted moment otherwise.
double predict_scalar(const TimeModel& m, std::span<const double> x);

std::vector<int> leaf_tuple(const TimeModel& m, std::span<const double> x);
std::int64_t hash_leaf_tuple(std::span<const int> tuple);

// Maps hashed forest segment ids back to their leaf-id tuples.
class SegmentRegistry {
 public:
  std::int64_t add(const std::vector<int>& tuple);
  const std::vector<int>* find(std::int64_t id) const;
  std::size_t size() const { return tuples_.size(); }

 private:
  std::map<std::int64_t, std::vector<int>> tuples_;
};

// Fraction of trees in which x and y share a leaf.
double rf_kernel(const TimeModel& m, std::span<const double> x, std::span<const double> y);

// Impurity-based importance normalized to sum 1 (zeros if there are no
// splits). Forests average their members' unnormalized importances.
std::vector<double> model_feature_importance(const TimeModel& m);

// |weights| of a linear model, summed over outputs.
std::vector<double> linear_weight_importance(const TimeModel& m);

}  // namespace driftlens
