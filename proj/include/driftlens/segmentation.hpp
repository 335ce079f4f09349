#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/embedding.hpp"
#include "driftlens/model.hpp"
#include "json.hpp"

namespace driftlens {

constexpr int kDefaultTimeBins = 10;

struct Segment {
  std::int64_t id = 0;
  std::size_t size = 0;
  std::vector<double> moments;
  std::vector<std::size_t> histogram;
  double tv = 0.0;         // total variation to the global time histogram
  double threshold = 0.0;  // flag cut for this segment
  bool drift_flag = false;
};

struct SegmentOptions {
  bool use_forest = false;
  int bins = kDefaultTimeBins;
  // Fixed TV threshold for every segment. When empty, each segment gets
  // c / sqrt(size) with c calibrated on time-shuffled refits.
  std::optional<double> threshold;
  int n_null = 20;
  double quantile = 0.95;

  void validate() const;
};

struct Segmentation {
  TimeEmbedding embedding;
  TimeModel model;
  std::vector<std::int64_t> assignments;
  std::vector<Segment> segments;  // ascending id
  std::vector<std::size_t> global_histogram;
  // Fixed threshold, or the calibrated constant c when size_scaled.
  double threshold = 0.0;
  bool size_scaled = false;
  std::uint64_t fingerprint = 0;  // of the dataset the segmentation was built on

  const Segment& segment(std::int64_t id) const;
  std::size_t flagged_count() const;
  nlohmann::json to_json() const;
  static Segmentation from_json(const nlohmann::json& j);
};

// Equal-width histogram over [0, 1]; t = 1 lands in the last bin.
std::vector<std::size_t> time_histogram(std::span<const double> times, int bins);
double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b);

std::uint64_t dataset_fingerprint(const Dataset& ds);

Segmentation segment(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg,
                     const SegmentOptions& options = {});

// Sets drift_flag = (tv >= threshold) on every segment.
Segmentation flag_drifting_segments(Segmentation seg, double threshold);
// Per-segment cut c / sqrt(size).
Segmentation flag_drifting_segments_scaled(Segmentation seg, double c);

// Quantile of tv * sqrt(size) pooled over segments of refits with time
// shuffled across samples.
double calibrate_segment_threshold(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg,
                                   const SegmentOptions& options);

double segmentation_mse(const Segmentation& seg, const Dataset& ds);

}  // namespace driftlens
