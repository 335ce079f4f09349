#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace driftlens {

// One observation: standardized feature vector plus its normalized time.
struct TimedSample {
  std::vector<double> features;
  double time = 0.0;
};

struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> stddev;
  // True where the column was constant; its stored deviation is 1.
  std::vector<bool> constant;

  std::size_t size() const { return mean.size(); }
};

void to_json(nlohmann::json& j, const StandardizationParams& params);
void from_json(const nlohmann::json& j, StandardizationParams& params);

// Time-ordered collection of samples with the raw-time affine map
// (raw = time_origin + time * time_scale).
class Dataset {
 public:
  Dataset() = default;

  // Validates and sorts by time (stable). Throws on ragged rows, non-finite
  // values, times outside [0, 1] or a non-positive scale.
  Dataset(std::vector<std::string> feature_names, std::vector<TimedSample> samples,
          double time_origin = 0.0, double time_scale = 1.0);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t feature_count() const { return feature_names_.size(); }

  const TimedSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<TimedSample>& samples() const { return samples_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::span<const double> row(std::size_t i) const { return samples_[i].features; }
  double time(std::size_t i) const { return samples_[i].time; }
  std::vector<double> times() const;
  std::vector<double> column(std::size_t feature) const;

  double time_origin() const { return time_origin_; }
  double time_scale() const { return time_scale_; }
  double raw_time(std::size_t i) const { return time_origin_ + samples_[i].time * time_scale_; }

  const StandardizationParams* standardization() const {
    return standardization_.size() ? &standardization_ : nullptr;
  }
  void set_standardization(StandardizationParams params) { standardization_ = std::move(params); }

  // Subset in the given index order; keeps names and time map.
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> feature_names_;
  std::vector<TimedSample> samples_;
  double time_origin_ = 0.0;
  double time_scale_ = 1.0;
  StandardizationParams standardization_;
};

struct CsvOptions {
  std::string time_column = "t";
  bool standardize = false;
};

Dataset load_csv(const std::string& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

// Writes features plus the raw time column (named `time_column`). Values are
// printed with 17 significant digits so a reload is lossless.
void write_csv(const Dataset& ds, const std::string& path, const std::string& time_column = "t");
std::string to_csv(const Dataset& ds, const std::string& time_column = "t");

// Per-column mean/population-std standardization. Constant columns are
// centred (all zeros) and flagged.
StandardizationParams fit_standardization(const Dataset& ds);
Dataset apply_standardization(const Dataset& ds, const StandardizationParams& params);
Dataset standardize(const Dataset& ds);

// Maps raw timestamps to [0, 1] (min -> 0, max -> 1).
Dataset from_raw_times(std::vector<std::string> feature_names,
                       std::vector<std::vector<double>> rows, std::span<const double> raw_times);

// (time < change_point, time >= change_point). Throws DegenerateSplit when a
// side is empty.
std::pair<Dataset, Dataset> split_at(const Dataset& ds, double change_point);

// Uniform grid t_i = i / (n - 1) (a single sample gets t = 0).
std::vector<double> uniform_time_grid(std::size_t n);

}  // namespace driftlens
