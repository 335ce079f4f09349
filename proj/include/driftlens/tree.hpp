#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "driftlens/matrix.hpp"
#include "json.hpp"

namespace driftlens {

// Flat CART node. Split nodes send `x[feature] < threshold` left and
// everything else (ties included) right.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf_id = -1;  // depth-first, left-first numbering from 0
  std::int64_t n = 0;
  // Sum over the node's samples of the impurity removed by this split
  // (within-node SSE of the targets; for classification the one-hot SSE,
  // which equals n * Gini).
  double gain = 0.0;
  std::vector<double> target_mean;
  std::vector<std::int64_t> class_counts;

  bool is_leaf() const { return feature < 0; }
};

struct TreeGrowOptions {
  int max_depth = 8;
  int min_leaf = 5;
  // Features examined per split; 0 = all.
  std::size_t features_per_split = 0;
  std::uint64_t seed = 0;
};

class DecisionTree {
 public:
  enum class Task { kRegression, kClassification };

  DecisionTree() = default;

  // Regression on an n x k target matrix. `indices` lists training rows and
  // may repeat rows (bootstrap).
  static DecisionTree fit_regression(const Matrix& x, const Matrix& targets,
                                     std::span<const std::size_t> indices, const TreeGrowOptions& options);

  // Classification over labels in [0, n_classes); leaves keep class counts.
  static DecisionTree fit_classification(const Matrix& x, std::span<const int> labels, int n_classes,
                                         std::span<const std::size_t> indices,
                                         const TreeGrowOptions& options);

  Task task() const { return task_; }
  std::size_t feature_count() const { return n_features_; }
  std::size_t output_count() const { return n_outputs_; }
  std::int64_t training_size() const { return n_train_; }
  int leaf_count() const { return n_leaves_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  // Index into nodes() of the leaf reached by x.
  std::size_t leaf_node(std::span<const double> x) const;
  const TreeNode& leaf(std::span<const double> x) const { return nodes_[leaf_node(x)]; }
  int leaf_id(std::span<const double> x) const { return leaf(x).leaf_id; }

  // Laplace-smoothed class probabilities (count + 1) / (n + n_classes).
  std::vector<double> class_probabilities(std::span<const double> x) const;

  // Unnormalized per-feature sum of split gains divided by training size.
  std::vector<double> raw_feature_importance() const;

  int depth() const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

  // Builds a tree from explicit nodes (tests, deserialization). Validates
  // child links and renumbers leaf ids depth-first.
  static DecisionTree from_nodes(Task task, std::size_t n_features, std::size_t n_outputs,
                                 std::int64_t n_train, std::vector<TreeNode> nodes);

 private:
  void assign_leaf_ids();

  Task task_ = Task::kRegression;
  std::size_t n_features_ = 0;
  std::size_t n_outputs_ = 0;
  std::int64_t n_train_ = 0;
  int n_leaves_ = 0;
  std::vector<TreeNode> nodes_;
};

}  // namespace driftlens
