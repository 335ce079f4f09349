#include "driftlens/segmentation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "driftlens/error.hpp"
#include "driftlens/localization.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

constexpr std::uint64_t kShuffleTag = 0x736567;

TimeModel fit_segmenter(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg, bool forest) {
  return forest ? fit_moment_forest(ds, emb, cfg) : fit_moment_tree(ds, emb, cfg);
}

Dataset with_shuffled_time(const Dataset& ds, std::uint64_t seed) {
  auto times = ds.times();
  Rng rng(seed);
  rng.shuffle(times);
  std::vector<TimedSample> samples(ds.samples());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].time = times[i];
  return Dataset(ds.feature_names(), std::move(samples));
}

// Segments in ascending id order, each with member histogram and TV.
Segmentation build(const Dataset& ds, TimeModel model, int bins) {
  Segmentation seg;
  seg.embedding = model.embedding();
  seg.assignments.resize(ds.size());
  std::map<std::int64_t, Segment> by_id;
  std::map<std::int64_t, std::vector<double>> member_times;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto pred = predict_moments(model, ds.row(i));
    seg.assignments[i] = pred.segment_id;
    auto& s = by_id[pred.segment_id];
    if (s.size == 0) {
      s.id = pred.segment_id;
      s.moments = std::move(pred.moments);
    }
    ++s.size;
    member_times[pred.segment_id].push_back(ds.time(i));
  }
  const auto times = ds.times();
  seg.global_histogram = time_histogram(times, bins);
  for (auto& [id, s] : by_id) {
    s.histogram = time_histogram(member_times[id], bins);
    s.tv = total_variation(s.histogram, seg.global_histogram);
    seg.segments.push_back(std::move(s));
  }
  seg.model = std::move(model);
  seg.fingerprint = dataset_fingerprint(ds);
  return seg;
}

}  // namespace

void SegmentOptions::validate() const {
  require(bins >= 1, ErrorCode::kInvalidArgument, "bins must be positive");
  require(n_null >= 1, ErrorCode::kInvalidArgument, "n_null must be positive");
  require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile must lie in (0, 1)");
  if (threshold) require(*threshold >= 0.0, ErrorCode::kInvalidArgument, "threshold must be >= 0");
}

const Segment& Segmentation::segment(std::int64_t id) const {
  const auto it = std::lower_bound(segments.begin(), segments.end(), id,
                                   [](const Segment& s, std::int64_t v) { return s.id < v; });
  require(it != segments.end() && it->id == id, ErrorCode::kIndexOutOfRange, "unknown segment id");
  return *it;
}

std::size_t Segmentation::flagged_count() const {
  return static_cast<std::size_t>(
      std::count_if(segments.begin(), segments.end(), [](const Segment& s) { return s.drift_flag; }));
}

nlohmann::json Segmentation::to_json() const {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : segments) {
    segs.push_back({{"id", s.id},
                    {"size", s.size},
                    {"moments", s.moments},
                    {"histogram", s.histogram},
                    {"tv", s.tv},
                    {"threshold", s.threshold},
                    {"drift_flag", s.drift_flag}});
  }
  return {{"embedding", embedding},
          {"threshold", threshold},
          {"size_scaled", size_scaled},
          {"fingerprint", std::to_string(fingerprint)},
          {"global_histogram", global_histogram},
          {"assignments", assignments},
          {"segments", segs},
          {"model", model.to_json()}};
}

Segmentation Segmentation::from_json(const nlohmann::json& j) {
  try {
    Segmentation seg;
    seg.embedding = j.at("embedding").get<TimeEmbedding>();
    seg.threshold = j.at("threshold").get<double>();
    seg.size_scaled = j.at("size_scaled").get<bool>();
    seg.fingerprint = std::stoull(j.at("fingerprint").get<std::string>());
    seg.global_histogram = j.at("global_histogram").get<std::vector<std::size_t>>();
    seg.assignments = j.at("assignments").get<std::vector<std::int64_t>>();
    for (const auto& js : j.at("segments")) {
      Segment s;
      s.id = js.at("id").get<std::int64_t>();
      s.size = js.at("size").get<std::size_t>();
      s.moments = js.at("moments").get<std::vector<double>>();
      s.histogram = js.at("histogram").get<std::vector<std::size_t>>();
      s.tv = js.at("tv").get<double>();
      s.threshold = js.at("threshold").get<double>();
      s.drift_flag = js.at("drift_flag").get<bool>();
      seg.segments.push_back(std::move(s));
    }
    seg.model = TimeModel::from_json(j.at("model"));
    return seg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("invalid segmentation json: ") + e.what());
  }
}

std::vector<std::size_t> time_histogram(std::span<const double> times, int bins) {
  require(bins >= 1, ErrorCode::kInvalidArgument, "bins must be positive");
  std::vector<std::size_t> h(static_cast<std::size_t>(bins), 0);
  for (double t : times) {
    const auto b = static_cast<int>(std::floor(t * bins));
    ++h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  require(a.size() == b.size(), ErrorCode::kDimensionMismatch, "histograms differ in bin count");
  double na = 0.0, nb = 0.0;
  for (auto v : a) na += static_cast<double>(v);
  for (auto v : b) nb += static_cast<double>(v);
  require(na > 0 && nb > 0, ErrorCode::kEmptyGroup, "empty histogram");
  double tv = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) tv += std::abs(a[k] / na - b[k] / nb);
  return 0.5 * tv;
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
    h = mix64(h);
  };
  feed(static_cast<double>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    feed(ds.time(i));
    for (double v : ds.row(i)) feed(v);
  }
  return h;
}

double calibrate_segment_threshold(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg,
                                   const SegmentOptions& options) {
  options.validate();
  std::vector<std::vector<double>> tvs(static_cast<std::size_t>(options.n_null));
  parallel_for(tvs.size(), [&](std::size_t r) {
    const auto shuffled = with_shuffled_time(ds, derive_seed(cfg.seed, kShuffleTag, r));
    FitConfig null_cfg = cfg;
    null_cfg.seed = derive_seed(cfg.seed, kShuffleTag, r, 1);
    const auto seg = build(shuffled, fit_segmenter(shuffled, emb, null_cfg, options.use_forest), options.bins);
    for (const auto& s : seg.segments) tvs[r].push_back(s.tv * std::sqrt(static_cast<double>(s.size)));
  });
  std::vector<double> pooled;
  for (const auto& v : tvs) pooled.insert(pooled.end(), v.begin(), v.end());
  return nearest_rank_quantile(std::move(pooled), options.quantile);
}

Segmentation segment(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg,
                     const SegmentOptions& options) {
  options.validate();
  cfg.validate();
  emb.validate();
  require(ds.size() >= 2 * static_cast<std::size_t>(std::max(cfg.min_leaf, 1)), ErrorCode::kTooFewSamples,
          "segmentation needs at least 2 * min_leaf samples");
  auto seg = build(ds, fit_segmenter(ds, emb, cfg, options.use_forest), options.bins);
  if (options.threshold) return flag_drifting_segments(std::move(seg), *options.threshold);
  return flag_drifting_segments_scaled(std::move(seg), calibrate_segment_threshold(ds, emb, cfg, options));
}

Segmentation flag_drifting_segments(Segmentation seg, double threshold) {
  seg.threshold = threshold;
  seg.size_scaled = false;
  for (auto& s : seg.segments) {
    s.threshold = threshold;
    s.drift_flag = s.tv >= threshold;
  }
  return seg;
}

Segmentation flag_drifting_segments_scaled(Segmentation seg, double c) {
  seg.threshold = c;
  seg.size_scaled = true;
  for (auto& s : seg.segments) {
    s.threshold = c / std::sqrt(static_cast<double>(s.size));
    s.drift_flag = s.tv >= s.threshold;
  }
  return seg;
}

double segmentation_mse(const Segmentation& seg, const Dataset& ds) {
  require(ds.size() == seg.assignments.size() && dataset_fingerprint(ds) == seg.fingerprint,
          ErrorCode::kMismatchedDataset, "segmentation was built on a different dataset");
  double total = 0.0;
  std::vector<double> target(seg.embedding.output_size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    embed_time_into(ds.time(i), seg.embedding, target);
    const auto& m = seg.segment(seg.assignments[i]).moments;
    for (std::size_t c = 0; c < target.size(); ++c) total += (target[c] - m[c]) * (target[c] - m[c]);
  }
  return total / static_cast<double>(ds.size());
}

}  // namespace driftlens
