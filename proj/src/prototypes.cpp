#include "driftlens/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

#include "driftlens/error.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

constexpr int kMeansRestarts = 4;
constexpr int kMaxLloydIterations = 300;
constexpr int kMaxSwapIterations = 200;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

double euclidean(std::span<const double> a, std::span<const double> b) { return std::sqrt(squared_distance(a, b)); }

void check_points(const std::vector<std::vector<double>>& points, int k) {
  require(!points.empty(), ErrorCode::kEmptyGroup, "no samples to cluster");
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be at least 1");
  require(static_cast<std::size_t>(k) <= points.size(), ErrorCode::kKTooLarge,
          "k = " + std::to_string(k) + " exceeds group size " + std::to_string(points.size()));
  for (const auto& p : points) {
    require(p.size() == points.front().size(), ErrorCode::kDimensionMismatch, "points differ in dimension");
  }
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Per-point prediction used by d_L.
std::vector<std::vector<double>> prediction_vectors(const TimeModel& m,
                                                    const std::vector<std::vector<double>>& points) {
  std::vector<std::vector<double>> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    out[i] = m.is_classifier() ? std::vector<double>{predict_proba(m, points[i])[1]}
                               : predict_moments(m, points[i]).moments;
  });
  return out;
}

double prediction_gap(const TimeModel& m, const std::vector<double>& a, const std::vector<double>& b) {
  if (m.is_classifier()) return std::abs(a[0] - b[0]);
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += std::abs(a[c] - b[c]);
  return 0.5 * s;
}

std::vector<std::size_t> assign_nearest(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::vector<double>>& centers) {
  std::vector<std::size_t> assign(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = squared_distance(points[i], centers[c]);
      if (d < best) {
        best = d;
        assign[i] = c;
      }
    }
  }
  return assign;
}

ClusterResult lloyd(const std::vector<std::vector<double>>& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t d = points.front().size();
  std::vector<std::vector<double>> centers;
  std::vector<bool> chosen(n, false);
  const std::size_t first = rng.below(n);
  centers.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d2[i] = std::min(d2[i], squared_distance(points[i], c));
      if (chosen[i]) d2[i] = 0.0;
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
  }

  ClusterResult r;
  std::vector<std::size_t> assign = assign_nearest(points, centers);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assign[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed an empty cluster at the worst-served point.
        std::size_t far = 0;
        double worst = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double e = squared_distance(points[i], centers[assign[i]]);
          if (e > worst) {
            worst = e;
            far = i;
          }
        }
        centers[c] = points[far];
        assign[far] = c;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += squared_distance(points[i], centers[assign[i]]);
    r.cost_trace.push_back(cost);
    auto next = assign_nearest(points, centers);
    if (next == assign) break;
    assign = std::move(next);
  }
  r.assignment = assign;
  r.cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.cost += squared_distance(points[i], centers[assign[i]]);
  r.prototypes.resize(k);
  for (std::size_t c = 0; c < k; ++c) r.prototypes[c].features = centers[c];
  for (std::size_t i = 0; i < n; ++i) r.prototypes[assign[i]].members.push_back(i);
  return r;
}

double medoid_cost(const Matrix& dist, const std::vector<std::size_t>& medoids) {
  double total = 0.0;
  for (std::size_t i = 0; i < dist.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (auto m : medoids) best = std::min(best, dist(i, m));
    total += best;
  }
  return total;
}

}  // namespace

std::string metric_kind_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kEuclidean: return "euclidean";
    case MetricKind::kGeodesic: return "geodesic";
    case MetricKind::kForestKernel: return "forest_kernel";
  }
  return "euclidean";
}

MetricKind parse_metric_kind(const std::string& name) {
  if (name == "euclidean") return MetricKind::kEuclidean;
  if (name == "geodesic" || name == "drift_geodesic") return MetricKind::kGeodesic;
  if (name == "forest_kernel" || name == "forest") return MetricKind::kForestKernel;
  fail(ErrorCode::kUnknownKind, "unknown metric '" + name + "'");
}

void DriftMetricConfig::validate() const {
  require(k_neighbors >= 2, ErrorCode::kInvalidArgument, "k_neighbors must be at least 2");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::kInvalidArgument, "lambda must be >= 0");
}

double prediction_distance(const TimeModel& m, std::span<const double> x, std::span<const double> y) {
  if (m.is_classifier()) return std::abs(predict_proba(m, x)[1] - predict_proba(m, y)[1]);
  const auto a = predict_moments(m, x).moments;
  const auto b = predict_moments(m, y).moments;
  return prediction_gap(m, a, b);
}

std::vector<WeightedEdge> drift_knn_graph(const std::vector<std::vector<double>>& points, const TimeModel& m,
                                          int k_neighbors, double lambda) {
  const std::size_t n = points.size();
  require(n >= 1, ErrorCode::kEmptyGroup, "no samples");
  const auto preds = prediction_vectors(m, points);
  auto weight = [&](std::size_t a, std::size_t b) {
    return prediction_gap(m, preds[a], preds[b]) + lambda * euclidean(points[a], points[b]);
  };
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_neighbors), n - 1);
  std::vector<std::vector<std::size_t>> nearest(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.emplace_back(squared_distance(points[i], points[j]), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) nearest[i].push_back(cand[r].second);
  });
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : nearest[i]) pairs.emplace(std::min(i, j), std::max(i, j));
  }
  std::vector<WeightedEdge> edges;
  UnionFind uf(n);
  for (const auto& [a, b] : pairs) {
    edges.push_back({a, b, weight(a, b)});
    uf.unite(a, b);
  }
  // Join components through their lightest connecting edge until connected.
  while (true) {
    std::size_t roots = 0;
    for (std::size_t i = 0; i < n; ++i) roots += uf.find(i) == i;
    if (roots <= 1) break;
    WeightedEdge best{0, 0, std::numeric_limits<double>::infinity()};
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (uf.find(a) == uf.find(b)) continue;
        const double w = weight(a, b);
        if (w < best.w) best = {a, b, w};
      }
    }
    edges.push_back(best);
    uf.unite(best.a, best.b);
  }
  return edges;
}

Matrix all_pairs_shortest_paths(std::size_t n, const std::vector<WeightedEdge>& edges) {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const auto& e : edges) {
    require(e.a < n && e.b < n, ErrorCode::kIndexOutOfRange, "edge endpoint out of range");
    require(e.w >= 0.0, ErrorCode::kInvalidArgument, "negative edge weight");
    adj[e.a].emplace_back(e.b, e.w);
    adj[e.b].emplace_back(e.a, e.w);
  }
  Matrix dist(n, n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t s) {
    auto row = dist.row(s);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    row[s] = 0.0;
    queue.emplace(0.0, s);
    while (!queue.empty()) {
      const auto [d, u] = queue.top();
      queue.pop();
      if (d > row[u]) continue;
      for (const auto& [v, w] : adj[u]) {
        if (d + w < row[v]) {
          row[v] = d + w;
          queue.emplace(row[v], v);
        }
      }
    }
  });
  for (double v : dist.data()) {
    require(std::isfinite(v), ErrorCode::kDisconnectedGraph, "graph is disconnected");
  }
  // Symmetrize against floating-point path-order differences.
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double v = std::min(dist(a, b), dist(b, a));
      dist(a, b) = dist(b, a) = v;
    }
  }
  return dist;
}

Matrix pairwise_drift_distance(const std::vector<std::vector<double>>& points, const TimeModel* model,
                               const DriftMetricConfig& cfg) {
  cfg.validate();
  require(!points.empty(), ErrorCode::kEmptyGroup, "no samples");
  const std::size_t n = points.size();
  switch (cfg.kind) {
    case MetricKind::kEuclidean: {
      Matrix dist(n, n, 0.0);
      parallel_for(n, [&](std::size_t a) {
        for (std::size_t b = 0; b < n; ++b) dist(a, b) = a == b ? 0.0 : euclidean(points[a], points[b]);
      });
      return dist;
    }
    case MetricKind::kGeodesic: {
      require(model != nullptr, ErrorCode::kWrongModelKind, "geodesic distance needs a time model");
      return all_pairs_shortest_paths(n, drift_knn_graph(points, *model, cfg.k_neighbors, cfg.lambda));
    }
    case MetricKind::kForestKernel: {
      require(model != nullptr && model->is_forest(), ErrorCode::kWrongModelKind,
              "forest-kernel distance needs a forest model");
      std::vector<std::vector<int>> leaves(n);
      parallel_for(n, [&](std::size_t i) { leaves[i] = leaf_tuple(*model, points[i]); });
      const double trees = static_cast<double>(model->trees().size());
      Matrix dist(n, n, 0.0);
      parallel_for(n, [&](std::size_t a) {
        for (std::size_t b = 0; b < n; ++b) {
          std::size_t shared = 0;
          for (std::size_t t = 0; t < leaves[a].size(); ++t) shared += leaves[a][t] == leaves[b][t];
          dist(a, b) = 1.0 - static_cast<double>(shared) / trees;
        }
      });
      return dist;
    }
  }
  fail(ErrorCode::kInternal, "unhandled metric");
}

ClusterResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
  check_points(points, k);
  ClusterResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kMeansRestarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto result = lloyd(points, static_cast<std::size_t>(k), rng);
    if (result.cost < best.cost) best = std::move(result);
  }
  return best;
}

ClusterResult k_medoids(const std::vector<std::vector<double>>& points, const Matrix& dist, int k) {
  check_points(points, k);
  const std::size_t n = points.size();
  require(dist.rows() == n && dist.cols() == n, ErrorCode::kDimensionMismatch, "distance matrix size");

  std::vector<std::size_t> medoids;
  std::vector<bool> is_medoid(n, false);
  while (medoids.size() < static_cast<std::size_t>(k)) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pick = 0;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_medoid[c]) continue;
      medoids.push_back(c);
      const double cost = medoid_cost(dist, medoids);
      medoids.pop_back();
      if (cost < best) {
        best = cost;
        pick = c;
      }
    }
    medoids.push_back(pick);
    is_medoid[pick] = true;
  }

  ClusterResult r;
  double cost = medoid_cost(dist, medoids);
  r.cost_trace.push_back(cost);
  for (int iter = 0; iter < kMaxSwapIterations; ++iter) {
    double best = cost;
    std::size_t best_slot = 0, best_candidate = n;
    for (std::size_t slot = 0; slot < medoids.size(); ++slot) {
      const std::size_t old = medoids[slot];
      for (std::size_t c = 0; c < n; ++c) {
        if (is_medoid[c]) continue;
        medoids[slot] = c;
        const double trial = medoid_cost(dist, medoids);
        if (trial < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = trial;
          best_slot = slot;
          best_candidate = c;
        }
      }
      medoids[slot] = old;
    }
    if (best_candidate == n) break;
    is_medoid[medoids[best_slot]] = false;
    medoids[best_slot] = best_candidate;
    is_medoid[best_candidate] = true;
    cost = best;
    r.cost_trace.push_back(cost);
  }

  std::sort(medoids.begin(), medoids.end());
  r.assignment.assign(n, 0);
  r.prototypes.resize(medoids.size());
  for (std::size_t c = 0; c < medoids.size(); ++c) {
    r.prototypes[c].features = points[medoids[c]];
    r.prototypes[c].medoid = medoids[c];
  }
  r.cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      if (dist(i, medoids[c]) < best) {
        best = dist(i, medoids[c]);
        r.assignment[i] = c;
      }
    }
    r.cost += best;
    r.prototypes[r.assignment[i]].members.push_back(i);
  }
  return r;
}

ClusterResult select_prototypes(const std::vector<std::vector<double>>& points, int k, const Matrix* dist,
                                MetricKind kind, std::uint64_t seed) {
  if (kind == MetricKind::kEuclidean) return kmeans(points, k, seed);
  require(dist != nullptr, ErrorCode::kInvalidArgument, "medoid clustering needs a distance matrix");
  return k_medoids(points, *dist, k);
}

nlohmann::json PrototypeSet::to_json() const {
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : g.prototypes) {
      nlohmann::json jp = {{"features", p.features}, {"members", p.members}, {"occurrence", p.occurrence}};
      jp["medoid_index"] = p.medoid_index ? nlohmann::json(*p.medoid_index) : nlohmann::json(nullptr);
      ps.push_back(std::move(jp));
    }
    gs.push_back({{"group", g.name}, {"members", g.members}, {"prototypes", ps}});
  }
  return {{"metric", metric_kind_name(metric)}, {"groups", gs}, {"warnings", warnings}};
}

PrototypeSet build_prototypes(const Dataset& ds,
                              const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups,
                              const TimeModel* model, const PrototypeOptions& options) {
  options.metric.validate();
  require(options.k_per_group >= 1, ErrorCode::kInvalidArgument, "k_per_group must be at least 1");
  PrototypeSet set;
  set.metric = options.metric.kind;
  std::vector<PrototypeGroup> built(groups.size());
  std::vector<std::string> notes(groups.size());
  std::vector<bool> keep(groups.size(), false);
  parallel_for(groups.size(), [&](std::size_t g) {
    const auto& [name, members] = groups[g];
    if (members.empty()) {
      notes[g] = "group '" + name + "' is empty and was skipped";
      return;
    }
    int k = options.k_per_group;
    if (static_cast<std::size_t>(k) > members.size()) {
      notes[g] = "group '" + name + "' has " + std::to_string(members.size()) + " samples; k clamped from " +
                 std::to_string(k) + " to " + std::to_string(members.size());
      k = static_cast<int>(members.size());
    }
    std::vector<std::vector<double>> points;
    for (auto i : members) points.emplace_back(ds.row(i).begin(), ds.row(i).end());
    std::optional<Matrix> dist;
    if (options.metric.kind != MetricKind::kEuclidean) dist = pairwise_drift_distance(points, model, options.metric);
    const auto clusters =
        select_prototypes(points, k, dist ? &*dist : nullptr, options.metric.kind, derive_seed(options.seed, g));
    auto& out = built[g];
    out.name = name;
    out.members = members;
    for (const auto& p : clusters.prototypes) {
      PrototypeGroup::Entry e;
      e.features = p.features;
      if (p.medoid) e.medoid_index = members[*p.medoid];
      std::vector<double> times;
      for (auto local : p.members) {
        e.members.push_back(members[local]);
        times.push_back(ds.time(members[local]));
      }
      e.occurrence = time_histogram(times, options.bins);
      out.prototypes.push_back(std::move(e));
    }
    keep[g] = true;
  });
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!notes[g].empty()) set.warnings.push_back(notes[g]);
    if (keep[g]) set.groups.push_back(std::move(built[g]));
  }
  return set;
}

PrototypeSet build_prototypes(const Dataset& ds, const LocusReport& locus, const TimeModel* model,
                              const PrototypeOptions& options) {
  require(locus.region.size() == ds.size(), ErrorCode::kMismatchedDataset,
          "locus report does not match the dataset");
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups{{"before", {}}, {"after", {}}};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (locus.region[i] == Region::kBefore) groups[0].second.push_back(i);
    if (locus.region[i] == Region::kAfter) groups[1].second.push_back(i);
  }
  return build_prototypes(ds, groups, model, options);
}

PrototypeSet build_prototypes(const Dataset& ds, const Segmentation& seg, const PrototypeOptions& options) {
  require(seg.assignments.size() == ds.size(), ErrorCode::kMismatchedDataset,
          "segmentation does not match the dataset");
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  for (const auto& s : seg.segments) {
    if (!s.drift_flag) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (seg.assignments[i] == s.id) members.push_back(i);
    }
    groups.emplace_back("segment:" + std::to_string(s.id), std::move(members));
  }
  auto set = build_prototypes(ds, groups, &seg.model, options);
  if (groups.empty()) set.warnings.push_back("no flagged segments; prototype set is empty");
  return set;
}

}  // namespace driftlens
