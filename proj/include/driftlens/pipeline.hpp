#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/error.hpp"
#include "driftlens/explainers.hpp"
#include "driftlens/localization.hpp"
#include "driftlens/model.hpp"
#include "driftlens/prototypes.hpp"
#include "driftlens/segmentation.hpp"
#include "json.hpp"

namespace driftlens {

constexpr int kBundleSchemaVersion = 1;

// What explain_drift runs. Grouping strings: "localize@0.5", "localize@auto"
// (change point scanned over 0.1..0.9), "segment@poly:5", "segment@fourier:5:500s".
struct MethodPlan {
  enum class Grouping { kLocalize, kSegment };

  Grouping grouping = Grouping::kLocalize;
  std::optional<double> change_point = 0.5;  // empty: scan
  std::string embedding = "poly:5";
  // pfi | ipfi | model_fi | surrogate | counterfactuals
  std::vector<std::string> methods{"pfi"};
  FitConfig fit;
  LocalizeOptions localize;
  SegmentOptions segment;
  PrototypeOptions prototypes;
  SurrogateOptions surrogate;
  int pfi_repeats = 5;
  std::size_t ipfi_capacity = 200;
  double ipfi_gamma = 0.99;
  std::uint64_t seed = 0;
  bool standardize = true;

  void set_grouping(const std::string& text);
  std::string grouping_string() const;
  bool wants(const std::string& method) const;
  void validate() const;

  // Config echo; from_json accepts the same layout as a plan file.
  nlohmann::json to_json() const;
  static MethodPlan from_json(const nlohmann::json& j);
};

struct MethodError {
  std::string method;
  std::string target;  // "" for global methods, "<group>#<prototype>" for local ones
  ErrorCode code = ErrorCode::kInternal;
  std::string message;

  nlohmann::json to_json() const;
};

struct LocalExplanationTarget {
  std::string group;
  std::size_t prototype = 0;
};

struct ExplanationBundle {
  MethodPlan plan;
  std::vector<std::string> feature_names;
  std::optional<LocusReport> locus;
  std::optional<Segmentation> segmentation;
  std::vector<Region> regions;
  std::optional<PrototypeSet> prototypes;
  std::vector<ImportanceReport> importances;
  std::vector<std::pair<LocalExplanationTarget, LocalSurrogate>> surrogates;
  std::vector<std::pair<LocalExplanationTarget, Counterfactual>> counterfactuals;
  std::vector<MethodError> errors;

  bool partial() const { return !errors.empty(); }
  const ImportanceReport* importance(ImportanceMethod method) const;
  nlohmann::json to_json() const;
};

// Before/After per sample from flagged segments: a flagged segment is After
// when most of its samples lie in the second time half, Before otherwise;
// unflagged segments are NotDrifting.
std::vector<Region> segment_regions(const Segmentation& seg, const Dataset& ds);

// preprocess -> group -> (prototypes) -> explainers. Grouping failures throw;
// failures inside a method are recorded in the bundle instead.
ExplanationBundle explain_drift(const Dataset& ds, const MethodPlan& plan);

}  // namespace driftlens
