#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/localization.hpp"
#include "driftlens/matrix.hpp"
#include "driftlens/model.hpp"
#include "driftlens/segmentation.hpp"
#include "json.hpp"

namespace driftlens {

enum class MetricKind { kEuclidean, kGeodesic, kForestKernel };

std::string metric_kind_name(MetricKind kind);
MetricKind parse_metric_kind(const std::string& name);

struct DriftMetricConfig {
  MetricKind kind = MetricKind::kEuclidean;
  int k_neighbors = 10;
  double lambda = 1.0;

  void validate() const;
};

struct WeightedEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double w = 0.0;
};

// Distance between predicted time distributions: |p - p'| for classifiers,
// half the L1 distance between predicted moment vectors otherwise.
double prediction_distance(const TimeModel& m, std::span<const double> x, std::span<const double> y);

// Symmetric k-NN graph on Euclidean distance, weighted d_L + lambda * d_X.
// Disconnected graphs are joined by repeatedly adding the lightest
// inter-component edge.
std::vector<WeightedEdge> drift_knn_graph(const std::vector<std::vector<double>>& points, const TimeModel& m,
                                          int k_neighbors, double lambda);

// Dijkstra from every node. Throws DisconnectedGraph on unreachable pairs.
Matrix all_pairs_shortest_paths(std::size_t n, const std::vector<WeightedEdge>& edges);

// model may be null for Euclidean distances.
Matrix pairwise_drift_distance(const std::vector<std::vector<double>>& points, const TimeModel* model,
                               const DriftMetricConfig& cfg);

struct Prototype {
  std::vector<double> features;
  std::optional<std::size_t> medoid;  // local index when the prototype is a sample
  std::vector<std::size_t> members;   // local indices
};

struct ClusterResult {
  std::vector<Prototype> prototypes;
  std::vector<std::size_t> assignment;  // local index -> prototype
  double cost = 0.0;
  std::vector<double> cost_trace;  // objective after each improvement step
};

// k-means (k-means++ seeding, best of several restarts) on raw features.
ClusterResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed);
// PAM: greedy build, then best-improvement swaps until no swap helps.
ClusterResult k_medoids(const std::vector<std::vector<double>>& points, const Matrix& dist, int k);

// Means for Euclidean, medoids otherwise. dist is ignored for Euclidean.
ClusterResult select_prototypes(const std::vector<std::vector<double>>& points, int k, const Matrix* dist,
                                MetricKind kind, std::uint64_t seed);

struct PrototypeGroup {
  std::string name;  // "before", "after", or "segment:<id>"
  std::vector<std::size_t> members;  // dataset indices
  struct Entry {
    std::vector<double> features;
    std::optional<std::size_t> medoid_index;  // dataset index
    std::vector<std::size_t> members;         // dataset indices
    std::vector<std::size_t> occurrence;      // member time histogram
  };
  std::vector<Entry> prototypes;
};

struct PrototypeSet {
  MetricKind metric = MetricKind::kEuclidean;
  std::vector<PrototypeGroup> groups;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct PrototypeOptions {
  int k_per_group = 3;
  DriftMetricConfig metric;
  std::uint64_t seed = 0;
  int bins = kDefaultTimeBins;
};

// Groups: {before, after} within the locus.
PrototypeSet build_prototypes(const Dataset& ds, const LocusReport& locus, const TimeModel* model,
                              const PrototypeOptions& options);
// Groups: flagged segments; the segmentation's own model backs model-aware metrics.
PrototypeSet build_prototypes(const Dataset& ds, const Segmentation& seg, const PrototypeOptions& options);

// Shared worker over explicit groups.
PrototypeSet build_prototypes(const Dataset& ds, const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups,
                              const TimeModel* model, const PrototypeOptions& options);

}  // namespace driftlens
