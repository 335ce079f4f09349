#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/localization.hpp"
#include "json.hpp"

namespace driftlens {

// A synthetic stream plus its ground truth.
struct LabeledStream {
  Dataset dataset;
  std::vector<bool> drifting_features;
  std::optional<double> change_point;
  nlohmann::json provenance;
  // Bayes nets only: direct nodes and their parents.
  std::vector<bool> shallow_features;
  // Streams with known per-sample regions (two-cluster swap).
  std::vector<Region> true_regions;

  // {drifting_features, change_point, provenance[, shallow_features]}
  nlohmann::json truth_json() const;
};

// Reads a truth file back: drifting_features and change_point.
LabeledStream truth_from_json(const nlohmann::json& j);

enum class BaseKind { kAgrawal, kMixed, kRandomRbf, kRandomTree, kGaussianBlobs };
std::string base_kind_name(BaseKind kind);
BaseKind parse_base_kind(const std::string& name);

struct BaseOptions {
  int agrawal_function = 1;  // 1..3
  int rbf_centroids = 50;
  int rbf_features = 10;
  double rbf_spread = 1.0;  // centroid std ~ U(0, rbf_spread)
};

// Stationary stream on the uniform time grid; the label is the last column.
Dataset gen_base(BaseKind kind, std::size_t n, std::uint64_t seed, const BaseOptions& options = {});

// Label functions of the AGRAWAL generator (1..3) over
// salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan.
int agrawal_label(int function, std::span<const double> row);

struct Perturbation {
  enum class Kind { kZero, kShift, kGaussianNoise, kValuePermutation };
  Kind kind = Kind::kShift;
  double delta = 1.0;

  // "zero", "shift:5", "gaussian_noise" ("noise"), "value_permutation" ("permute")
  static Perturbation parse(const std::string& text);
  std::string to_string() const;
};

// Perturbs n_features random columns from a random change point in (1/3, 2/3).
LabeledStream perturb(const Dataset& ds, const Perturbation& p, std::size_t n_features, std::uint64_t seed);

// Random row order on a fresh uniform time grid.
Dataset shuffle_baseline(const Dataset& ds, std::uint64_t seed);

struct BayesNode {
  std::string name;
  std::vector<std::size_t> parents;
  std::uint64_t param_seed = 0;
  bool direct = false;
};

struct BayesNetSpec {
  enum class Mode { kComplete, kShallow };
  std::vector<BayesNode> nodes;
  Mode mode = Mode::kComplete;
};

// Topological order; throws CyclicGraph / IndexOutOfRange.
std::vector<std::size_t> topological_order(const BayesNetSpec& spec);
// Per node: 0 none, 1 implicit, 2 direct (weakly connected to a direct node).
std::vector<int> drift_classes(const BayesNetSpec& spec);
// Nodes kept in shallow mode: direct, parents of direct, and none nodes.
std::vector<bool> shallow_nodes(const BayesNetSpec& spec);

// Random net shaped like the reference figure: I1, I2 direct; I3, I4 their
// parents; F1..F7 attached to that component elsewhere; N1..N3 drift-free.
BayesNetSpec reference_net(std::uint64_t seed, BayesNetSpec::Mode mode = BayesNetSpec::Mode::kComplete);
// Erdos-Renyi DAG over a random order.
BayesNetSpec random_dag(std::size_t n_nodes, double edge_prob, std::size_t n_direct, std::uint64_t seed);

LabeledStream gen_bayes_net(const BayesNetSpec& spec, std::size_t n, std::uint64_t seed);

struct SensorOptions {
  double demand_period = 96.0;  // samples per day (15-minute readings)
  double noise = 0.05;
  double ramp = 2.0;  // drift per unit normalized time after a fault
};

LabeledStream gen_sensor_fault(std::size_t n_sensors, std::size_t n, const std::vector<double>& fault_times,
                               const std::vector<int>& fault_sensors, std::uint64_t seed,
                               const SensorOptions& options = {});

// Two features. A static cluster at the origin (share `static_share`) and a
// cluster at (4, 0) before the change point that moves to (0, 4) after.
LabeledStream two_cluster_swap(std::size_t n, std::uint64_t seed, double change_point = 0.5,
                               double static_share = 0.5);

}  // namespace driftlens
