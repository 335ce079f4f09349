#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/localization.hpp"
#include "driftlens/matrix.hpp"
#include "driftlens/model.hpp"
#include "driftlens/random.hpp"
#include "json.hpp"

namespace driftlens {

enum class ImportanceMethod { kPfi, kIpfi, kModelFi, kLinearWeights };
std::string importance_method_name(ImportanceMethod m);

struct ImportanceReport {
  ImportanceMethod method = ImportanceMethod::kPfi;
  std::vector<double> scores;
  std::vector<double> std_errors;  // NaN when undefined
  int n_repeats = 0;
  double baseline_metric = 0.0;
  // iPFI only: per-feature sum of loss differences over the whole stream.
  std::vector<double> stream_sums;

  // Feature indices by descending score, lower index first on ties.
  std::vector<std::size_t> ranking() const;
  nlohmann::json to_json(const std::vector<std::string>& feature_names = {}) const;
};

// Accuracy of thresholded p(after) against 0/1 labels.
ImportanceReport permutation_importance(const TimeModel& m, const Dataset& ds, std::span<const int> labels,
                                        int n_repeats, std::uint64_t seed);
// Negative mean squared error of predict_output against a target matrix.
ImportanceReport permutation_importance(const TimeModel& m, const Dataset& ds, const Matrix& targets,
                                        int n_repeats, std::uint64_t seed);

// Impurity importance for tree models, |weights| for linear ones.
ImportanceReport model_importance(const TimeModel& m);

// Incremental PFI over a stream with a FIFO reservoir of past samples.
// gamma = 1 keeps a running mean, gamma < 1 an exponential moving average.
struct IpfiState {
  IpfiState(std::size_t n_features, std::size_t capacity = 200, double gamma = 0.99, std::uint64_t seed = 0,
            std::size_t warmup = 1);

  std::size_t capacity;
  double gamma;
  std::size_t warmup;
  std::deque<std::vector<double>> reservoir;
  std::vector<double> accumulators;
  std::vector<double> sums;
  std::size_t seen = 0;
  std::size_t updates = 0;
  Rng rng;

  // Throws EmptyReservoir before the first importance update.
  ImportanceReport report() const;
};

// Loss: 0/1 on thresholded p(after) for classifiers (target = {label}),
// squared error on predict_output otherwise.
void ipfi_update(IpfiState& state, const TimeModel& m, std::span<const double> x, std::span<const double> target);

struct SurrogateOptions {
  int n_samples = 1000;
  double sigma = 0.5;
  double kernel_width = 0.0;  // 0 selects 0.75 * sqrt(#features); infinity gives uniform weights
  std::uint64_t seed = 0;
};

struct LocalSurrogate {
  std::vector<double> anchor;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double kernel_width = 0.0;
  int n_samples = 0;
  double fit_r2 = 0.0;
  bool ridge_jitter = false;

  nlohmann::json to_json() const;
};

// Weighted least squares from Gaussian perturbations of the anchor to f.
// feature_scale gives the per-feature perturbation std before sigma.
LocalSurrogate local_surrogate(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> anchor, std::span<const double> feature_scale,
                               const SurrogateOptions& options);
// Surrogate of predict_scalar (p(after) for classifiers).
LocalSurrogate local_surrogate(const TimeModel& m, std::span<const double> anchor,
                               std::span<const double> feature_scale, const SurrogateOptions& options);

// Population standard deviation per feature (1 for constant columns).
std::vector<double> feature_scales(const Dataset& ds);

struct Counterfactual {
  std::size_t original_index = 0;
  std::size_t counterfactual_index = 0;
  double distance = 0.0;
  Region original_region = Region::kBefore;
  Region target_region = Region::kAfter;

  nlohmann::json to_json() const;
};

// Nearest dataset sample in the opposite region (Before <-> After), by
// Euclidean distance or the given distance matrix; lowest index on ties.
Counterfactual nearest_counterfactual(const Dataset& ds, std::span<const Region> regions, std::size_t original,
                                      const Matrix* dist = nullptr);

}  // namespace driftlens
