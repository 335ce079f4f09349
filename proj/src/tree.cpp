#include "driftlens/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "driftlens/dataset.hpp"
#include "driftlens/error.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

Matrix Matrix::from_features(const Dataset& ds) {
  Matrix m(ds.size(), ds.feature_count());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.row(i);
    std::copy(row.begin(), row.end(), m.row(i).begin());
  }
  return m;
}

namespace {

struct SplitChoice {
  double gain = -1.0;
  int feature = -1;
  double threshold = 0.0;
};

// Greedy CART over a dense target matrix. Classification reuses the same
// machinery on one-hot targets: the one-hot SSE of a node is n * Gini, so
// the variance gain and the Gini gain coincide.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const Matrix& targets, const TreeGrowOptions& options,
              const std::vector<int>* labels, int n_classes)
      : x_(x),
        y_(targets),
        options_(options),
        labels_(labels),
        n_classes_(n_classes),
        rng_(options.seed),
        k_(targets.cols()) {}

  std::vector<TreeNode> build(std::vector<std::size_t> indices) {
    grow(indices, 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, int depth) {
    const std::size_t m = idx.size();
    std::vector<double> sum(k_, 0.0);
    double sum_sq = 0.0;
    for (std::size_t i : idx) {
      for (std::size_t c = 0; c < k_; ++c) {
        const double v = y_(i, c);
        sum[c] += v;
        sum_sq += v * v;
      }
    }
    double sq_of_sums = 0.0;
    for (double s : sum) sq_of_sums += s * s;
    const double node_sse = std::max(0.0, sum_sq - sq_of_sums / static_cast<double>(m));

    const int node_index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[node_index].n = static_cast<std::int64_t>(m);

    SplitChoice best;
    const auto min_leaf = static_cast<std::size_t>(options_.min_leaf);
    const bool can_split = depth < options_.max_depth && m >= 2 * min_leaf &&
                           node_sse > 1e-12 * static_cast<double>(m);
    if (can_split) best = find_split(idx, sum);

    if (best.feature < 0 || !(best.gain > 1e-9 * node_sse)) {
      make_leaf(node_index, idx, sum);
      return node_index;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    left.reserve(m);
    right.reserve(m);
    for (std::size_t i : idx) {
      (x_(i, static_cast<std::size_t>(best.feature)) < best.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();

    nodes_[node_index].feature = best.feature;
    nodes_[node_index].threshold = best.threshold;
    nodes_[node_index].gain = best.gain;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[node_index].left = l;
    nodes_[node_index].right = r;
    return node_index;
  }

  void make_leaf(int node_index, const std::vector<std::size_t>& idx, const std::vector<double>& sum) {
    TreeNode& node = nodes_[node_index];
    const double m = static_cast<double>(idx.size());
    node.target_mean.resize(k_);
    for (std::size_t c = 0; c < k_; ++c) node.target_mean[c] = sum[c] / m;
    if (labels_ != nullptr) {
      node.class_counts.assign(static_cast<std::size_t>(n_classes_), 0);
      for (std::size_t i : idx) ++node.class_counts[static_cast<std::size_t>((*labels_)[i])];
    }
  }

  std::vector<std::size_t> feature_order() {
    const std::size_t d = x_.cols();
    if (options_.features_per_split == 0 || options_.features_per_split >= d) {
      std::vector<std::size_t> all(d);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    return rng_.permutation(d);
  }

  SplitChoice find_split(const std::vector<std::size_t>& idx, const std::vector<double>& sum) {
    const std::size_t m = idx.size();
    const auto min_leaf = static_cast<std::size_t>(options_.min_leaf);
    const double inv_m = 1.0 / static_cast<double>(m);
    double parent_term = 0.0;
    for (double s : sum) parent_term += s * s * inv_m;

    const std::size_t budget =
        options_.features_per_split == 0 ? x_.cols() : std::min(options_.features_per_split, x_.cols());
    std::size_t evaluated = 0;

    SplitChoice best;
    std::vector<std::size_t> order(m);
    std::vector<double> left_sum(k_);
    for (std::size_t f : feature_order()) {
      if (evaluated >= budget) break;
      order = idx;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = x_(a, f);
        const double vb = x_(b, f);
        return va < vb || (va == vb && a < b);
      });
      // Constant features inside the node do not use up the budget.
      if (x_(order.front(), f) == x_(order.back(), f)) continue;
      ++evaluated;

      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      for (std::size_t p = 0; p + 1 < m; ++p) {
        const std::size_t i = order[p];
        for (std::size_t c = 0; c < k_; ++c) left_sum[c] += y_(i, c);
        const double v = x_(i, f);
        const double v_next = x_(order[p + 1], f);
        if (v == v_next) continue;
        const std::size_t nl = p + 1;
        const std::size_t nr = m - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        double child_term = 0.0;
        const double inv_l = 1.0 / static_cast<double>(nl);
        const double inv_r = 1.0 / static_cast<double>(nr);
        for (std::size_t c = 0; c < k_; ++c) {
          const double r = sum[c] - left_sum[c];
          child_term += left_sum[c] * left_sum[c] * inv_l + r * r * inv_r;
        }
        const double gain = child_term - parent_term;
        double threshold = 0.5 * (v + v_next);
        if (!(threshold > v)) threshold = v_next;
        if (better(gain, static_cast<int>(f), threshold, best)) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = threshold;
        }
      }
    }
    return best;
  }

  // Equal gains (up to rounding) go to the lowest feature index, then the
  // lowest threshold.
  static bool better(double gain, int feature, double threshold, const SplitChoice& best) {
    if (best.feature < 0) return true;
    const double tol = 1e-12 * std::max(1.0, std::abs(best.gain));
    if (gain > best.gain + tol) return true;
    if (gain < best.gain - tol) return false;
    if (feature != best.feature) return feature < best.feature;
    return threshold < best.threshold;
  }

  const Matrix& x_;
  const Matrix& y_;
  TreeGrowOptions options_;
  const std::vector<int>* labels_;
  int n_classes_;
  Rng rng_;
  std::size_t k_;
  std::vector<TreeNode> nodes_;
};

void validate_grow_options(const TreeGrowOptions& options) {
  require(options.min_leaf >= 1, ErrorCode::kInvalidArgument, "min_leaf must be >= 1");
  require(options.max_depth >= 0, ErrorCode::kInvalidArgument, "max_depth must be >= 0");
}

}  // namespace

DecisionTree DecisionTree::fit_regression(const Matrix& x, const Matrix& targets,
                                          std::span<const std::size_t> indices,
                                          const TreeGrowOptions& options) {
  validate_grow_options(options);
  require(x.rows() == targets.rows(), ErrorCode::kDimensionMismatch, "feature/target row mismatch");
  require(!indices.empty(), ErrorCode::kTooFewSamples, "no training rows");
  require(targets.cols() >= 1, ErrorCode::kInvalidArgument, "targets need at least one column");
  TreeBuilder builder(x, targets, options, nullptr, 0);
  auto nodes = builder.build(std::vector<std::size_t>(indices.begin(), indices.end()));
  return from_nodes(Task::kRegression, x.cols(), targets.cols(),
                    static_cast<std::int64_t>(indices.size()), std::move(nodes));
}

DecisionTree DecisionTree::fit_classification(const Matrix& x, std::span<const int> labels, int n_classes,
                                              std::span<const std::size_t> indices,
                                              const TreeGrowOptions& options) {
  validate_grow_options(options);
  require(x.rows() == labels.size(), ErrorCode::kDimensionMismatch, "feature/label row mismatch");
  require(!indices.empty(), ErrorCode::kTooFewSamples, "no training rows");
  require(n_classes >= 2, ErrorCode::kInvalidArgument, "need at least two classes");
  Matrix one_hot(x.rows(), static_cast<std::size_t>(n_classes));
  std::vector<int> label_copy(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < n_classes, ErrorCode::kInvalidArgument, "label out of range");
    one_hot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  TreeBuilder builder(x, one_hot, options, &label_copy, n_classes);
  auto nodes = builder.build(std::vector<std::size_t>(indices.begin(), indices.end()));
  return from_nodes(Task::kClassification, x.cols(), static_cast<std::size_t>(n_classes),
                    static_cast<std::int64_t>(indices.size()), std::move(nodes));
}

DecisionTree DecisionTree::from_nodes(Task task, std::size_t n_features, std::size_t n_outputs,
                                      std::int64_t n_train, std::vector<TreeNode> nodes) {
  require(!nodes.empty(), ErrorCode::kInvalidArgument, "tree has no nodes");
  const int count = static_cast<int>(nodes.size());
  for (const auto& node : nodes) {
    if (node.is_leaf()) {
      require(node.target_mean.size() == n_outputs, ErrorCode::kInvalidArgument,
              "leaf target size does not match output count");
      require(task == Task::kRegression || node.class_counts.size() == n_outputs,
              ErrorCode::kInvalidArgument, "classification leaf needs one count per class");
    } else {
      require(node.feature < static_cast<int>(n_features), ErrorCode::kInvalidArgument,
              "split feature out of range");
      require(node.left > 0 && node.left < count && node.right > 0 && node.right < count,
              ErrorCode::kInvalidArgument, "bad child link");
    }
  }
  DecisionTree tree;
  tree.task_ = task;
  tree.n_features_ = n_features;
  tree.n_outputs_ = n_outputs;
  tree.n_train_ = n_train;
  tree.nodes_ = std::move(nodes);
  tree.assign_leaf_ids();
  return tree;
}

void DecisionTree::assign_leaf_ids() {
  int next = 0;
  std::vector<int> stack{0};
  std::size_t visited = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    require(++visited <= nodes_.size(), ErrorCode::kInvalidArgument, "tree links form a cycle");
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.is_leaf()) {
      node.leaf_id = next++;
    } else {
      node.leaf_id = -1;
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
  n_leaves_ = next;
}

std::size_t DecisionTree::leaf_node(std::span<const double> x) const {
  require(x.size() == n_features_, ErrorCode::kDimensionMismatch,
          "expected " + std::to_string(n_features_) + " features, got " + std::to_string(x.size()));
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left
                                                                                           : node.right);
  }
  return i;
}

std::vector<double> DecisionTree::class_probabilities(std::span<const double> x) const {
  require(task_ == Task::kClassification, ErrorCode::kWrongModelKind, "not a classification tree");
  const auto& node = leaf(x);
  const double denom = static_cast<double>(node.n) + static_cast<double>(n_outputs_);
  std::vector<double> p(n_outputs_);
  for (std::size_t c = 0; c < n_outputs_; ++c) {
    p[c] = (static_cast<double>(node.class_counts[c]) + 1.0) / denom;
  }
  return p;
}

std::vector<double> DecisionTree::raw_feature_importance() const {
  std::vector<double> fi(n_features_, 0.0);
  const double n = static_cast<double>(std::max<std::int64_t>(n_train_, 1));
  for (const auto& node : nodes_) {
    if (!node.is_leaf()) fi[static_cast<std::size_t>(node.feature)] += node.gain / n;
  }
  return fi;
}

int DecisionTree::depth() const {
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return best;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : nodes_) {
    nlohmann::json j{{"n", node.n}};
    if (node.is_leaf()) {
      j["leaf_id"] = node.leaf_id;
      j["target_mean"] = node.target_mean;
      if (!node.class_counts.empty()) j["class_counts"] = node.class_counts;
    } else {
      j["feature"] = node.feature;
      j["threshold"] = node.threshold;
      j["left"] = node.left;
      j["right"] = node.right;
      j["gain"] = node.gain;
    }
    nodes.push_back(std::move(j));
  }
  return {{"task", task_ == Task::kRegression ? "regression" : "classification"},
          {"n_features", n_features_},
          {"n_outputs", n_outputs_},
          {"n_train", n_train_},
          {"nodes", std::move(nodes)}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  const auto task_name = j.at("task").get<std::string>();
  require(task_name == "regression" || task_name == "classification", ErrorCode::kParse,
          "unknown tree task '" + task_name + "'");
  std::vector<TreeNode> nodes;
  for (const auto& jn : j.at("nodes")) {
    TreeNode node;
    node.n = jn.at("n").get<std::int64_t>();
    if (jn.contains("feature")) {
      node.feature = jn.at("feature").get<int>();
      node.threshold = jn.at("threshold").get<double>();
      node.left = jn.at("left").get<int>();
      node.right = jn.at("right").get<int>();
      node.gain = jn.value("gain", 0.0);
    } else {
      node.target_mean = jn.at("target_mean").get<std::vector<double>>();
      if (jn.contains("class_counts")) {
        node.class_counts = jn.at("class_counts").get<std::vector<std::int64_t>>();
      }
    }
    nodes.push_back(std::move(node));
  }
  return from_nodes(task_name == "regression" ? Task::kRegression : Task::kClassification,
                    j.at("n_features").get<std::size_t>(), j.at("n_outputs").get<std::size_t>(),
                    j.at("n_train").get<std::int64_t>(), std::move(nodes));
}

}  // namespace driftlens
