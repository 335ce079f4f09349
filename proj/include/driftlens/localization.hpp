#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/model.hpp"
#include "json.hpp"

namespace driftlens {

enum class Region { kBefore, kAfter, kNotDrifting };

std::string region_name(Region r);
Region parse_region(const std::string& name);

struct LocalizeOptions {
  // Cross-fitting folds; a value equal to the sample count means leave-one-out.
  int folds = 10;
  ClassifierKind classifier = ClassifierKind::kForest;
  // Fixed threshold; calibrated on permuted labels when empty.
  std::optional<double> theta;
  int n_null = 10;
  double quantile = 0.95;

  void validate() const;
};

struct LocusReport {
  double change_point = 0.5;
  double prior = 0.5;
  double theta = 0.0;
  std::vector<double> kl_scores;
  std::vector<double> p_after;
  std::vector<bool> in_locus;
  std::vector<Region> region;

  std::size_t locus_size() const;
  nlohmann::json to_json() const;
  static LocusReport from_json(const nlohmann::json& j);
};

// Out-of-fold scores for fixed 0/1 labels.
struct CrossFitScores {
  std::vector<double> kl;
  std::vector<double> p_after;
  std::vector<double> h0;  // training-fold label mean seen by each sample
};

double kl_bernoulli(double p, double q);

// Labels 1[t >= change_point]; throws DegenerateSplit when one side is empty.
std::vector<int> time_labels(const Dataset& ds, double change_point);

CrossFitScores cross_fit_scores(const Dataset& ds, std::span<const int> labels, const FitConfig& cfg,
                                int folds, ClassifierKind classifier);

double calibrate_threshold(const Dataset& ds, double change_point, const FitConfig& cfg,
                           const LocalizeOptions& options);

// Nearest-rank empirical quantile: sorted[ceil(q * n) - 1].
double nearest_rank_quantile(std::vector<double> values, double q);

LocusReport localize(const Dataset& ds, double change_point, const FitConfig& cfg,
                     const LocalizeOptions& options = {});

// Applies a threshold to precomputed scores (global prior used for regions).
LocusReport assemble_report(double change_point, double prior, double theta, std::vector<double> kl,
                            std::vector<double> p_after);

// Convenience change-point search: the candidate maximizing the mean
// out-of-fold KL. Not part of localization proper.
struct ChangePointScan {
  std::vector<double> candidates;
  std::vector<double> mean_kl;
  double best = 0.5;
};

ChangePointScan scan_change_points(const Dataset& ds, std::span<const double> candidates, const FitConfig& cfg,
                                   const LocalizeOptions& options = {});

}  // namespace driftlens
