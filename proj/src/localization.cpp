#include "driftlens/localization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "driftlens/error.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kFoldTag = 0x6f6c64;
constexpr std::uint64_t kNullTag = 0x6e756c;

std::vector<std::size_t> fold_of(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> assign(n);
  if (static_cast<std::size_t>(folds) == n) {
    std::iota(assign.begin(), assign.end(), std::size_t{0});
    return assign;
  }
  Rng rng(derive_seed(seed, kFoldTag));
  const auto order = rng.permutation(n);
  for (std::size_t r = 0; r < n; ++r) assign[order[r]] = r % static_cast<std::size_t>(folds);
  return assign;
}

double mean_label(std::span<const int> labels) {
  double s = 0.0;
  for (int y : labels) s += y;
  return s / static_cast<double>(labels.size());
}

}  // namespace

std::string region_name(Region r) {
  switch (r) {
    case Region::kBefore: return "before";
    case Region::kAfter: return "after";
    case Region::kNotDrifting: return "not_drifting";
  }
  return "not_drifting";
}

Region parse_region(const std::string& name) {
  if (name == "before") return Region::kBefore;
  if (name == "after") return Region::kAfter;
  if (name == "not_drifting") return Region::kNotDrifting;
  fail(ErrorCode::kParse, "unknown region '" + name + "'");
}

void LocalizeOptions::validate() const {
  require(folds >= 2, ErrorCode::kInvalidArgument, "folds must be at least 2");
  require(n_null >= 10, ErrorCode::kInvalidArgument, "n_null must be at least 10");
  require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile must lie in (0, 1)");
  if (theta) require(*theta >= 0.0 && std::isfinite(*theta), ErrorCode::kInvalidArgument, "theta must be >= 0");
}

std::size_t LocusReport::locus_size() const {
  return static_cast<std::size_t>(std::count(in_locus.begin(), in_locus.end(), true));
}

nlohmann::json LocusReport::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < kl_scores.size(); ++i) {
    samples.push_back({{"index", i},
                       {"kl", kl_scores[i]},
                       {"p_after", p_after[i]},
                       {"in_locus", static_cast<bool>(in_locus[i])},
                       {"region", region_name(region[i])}});
  }
  return {{"change_point", change_point}, {"prior", prior}, {"theta", theta}, {"samples", samples}};
}

LocusReport LocusReport::from_json(const nlohmann::json& j) {
  LocusReport r;
  try {
    r.change_point = j.at("change_point").get<double>();
    r.prior = j.at("prior").get<double>();
    r.theta = j.at("theta").get<double>();
    const auto& samples = j.at("samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      require(s.at("index").get<std::size_t>() == i, ErrorCode::kParse, "locus samples out of order");
      r.kl_scores.push_back(s.at("kl").get<double>());
      r.p_after.push_back(s.at("p_after").get<double>());
      r.in_locus.push_back(s.at("in_locus").get<bool>());
      r.region.push_back(parse_region(s.at("region").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad locus report: ") + e.what());
  }
  return r;
}

double kl_bernoulli(double p, double q) {
  require(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0, ErrorCode::kDomainError,
          "kl_bernoulli arguments must lie strictly inside (0, 1)");
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

std::vector<int> time_labels(const Dataset& ds, double change_point) {
  std::vector<int> labels(ds.size());
  std::size_t after = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels[i] = ds.time(i) >= change_point ? 1 : 0;
    after += static_cast<std::size_t>(labels[i]);
  }
  require(after > 0 && after < ds.size(), ErrorCode::kDegenerateSplit,
          "change point leaves one side empty");
  return labels;
}

CrossFitScores cross_fit_scores(const Dataset& ds, std::span<const int> labels, const FitConfig& cfg, int folds,
                                ClassifierKind classifier) {
  const std::size_t n = ds.size();
  require(labels.size() == n, ErrorCode::kDimensionMismatch, "label count does not match dataset");
  require(folds >= 2, ErrorCode::kInvalidArgument, "folds must be at least 2");
  require(static_cast<std::size_t>(folds) <= n, ErrorCode::kTooFewSamples, "more folds than samples");
  const auto fold = fold_of(n, folds, cfg.seed);

  CrossFitScores out;
  out.kl.assign(n, 0.0);
  out.p_after.assign(n, 0.0);
  out.h0.assign(n, 0.0);
  parallel_for(static_cast<std::size_t>(folds), [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
    if (test.empty()) return;
    std::vector<int> train_labels;
    train_labels.reserve(train.size());
    for (auto i : train) train_labels.push_back(labels[i]);
    const double h0 = mean_label(train_labels);
    require(h0 > 0.0 && h0 < 1.0, ErrorCode::kTooFewSamples,
            "a training fold contains only one time label");
    FitConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, kFoldTag, f);
    const auto model = fit_prob_classifier(ds.subset(train), train_labels, fold_cfg, classifier);
    for (auto i : test) {
      const double p = predict_proba(model, ds.row(i))[1];
      out.p_after[i] = p;
      out.h0[i] = h0;
      out.kl[i] = kl_bernoulli(p, h0);
    }
  });
  return out;
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

double calibrate_threshold(const Dataset& ds, double change_point, const FitConfig& cfg,
                           const LocalizeOptions& options) {
  options.validate();
  const auto labels = time_labels(ds, change_point);
  const std::size_t n = ds.size();
  std::vector<std::vector<double>> null_scores(static_cast<std::size_t>(options.n_null));
  parallel_for(null_scores.size(), [&](std::size_t r) {
    Rng rng(derive_seed(cfg.seed, kNullTag, r));
    std::vector<int> permuted = labels;
    rng.shuffle(permuted);
    FitConfig null_cfg = cfg;
    null_cfg.seed = derive_seed(cfg.seed, kNullTag, r, 1);
    null_scores[r] = cross_fit_scores(ds, permuted, null_cfg, options.folds, options.classifier).kl;
  });
  std::vector<double> pooled;
  pooled.reserve(n * null_scores.size());
  for (const auto& s : null_scores) pooled.insert(pooled.end(), s.begin(), s.end());
  return nearest_rank_quantile(std::move(pooled), options.quantile);
}

LocusReport assemble_report(double change_point, double prior, double theta, std::vector<double> kl,
                            std::vector<double> p_after) {
  LocusReport report;
  report.change_point = change_point;
  report.prior = prior;
  report.theta = theta;
  report.in_locus.resize(kl.size());
  report.region.resize(kl.size());
  for (std::size_t i = 0; i < kl.size(); ++i) {
    report.in_locus[i] = kl[i] >= theta;
    if (!report.in_locus[i]) {
      report.region[i] = Region::kNotDrifting;
    } else {
      report.region[i] = p_after[i] < prior ? Region::kBefore : Region::kAfter;
    }
  }
  report.kl_scores = std::move(kl);
  report.p_after = std::move(p_after);
  return report;
}

LocusReport localize(const Dataset& ds, double change_point, const FitConfig& cfg,
                     const LocalizeOptions& options) {
  options.validate();
  cfg.validate();
  const auto labels = time_labels(ds, change_point);
  auto scores = cross_fit_scores(ds, labels, cfg, options.folds, options.classifier);
  const double theta = options.theta ? *options.theta : calibrate_threshold(ds, change_point, cfg, options);
  return assemble_report(change_point, mean_label(labels), theta, std::move(scores.kl),
                         std::move(scores.p_after));
}

ChangePointScan scan_change_points(const Dataset& ds, std::span<const double> candidates, const FitConfig& cfg,
                                   const LocalizeOptions& options) {
  require(!candidates.empty(), ErrorCode::kInvalidArgument, "no candidate change points");
  ChangePointScan scan;
  scan.candidates.assign(candidates.begin(), candidates.end());
  scan.mean_kl.assign(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto labels = time_labels(ds, candidates[c]);
    const auto kl = cross_fit_scores(ds, labels, cfg, options.folds, options.classifier).kl;
    scan.mean_kl[c] = std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
  }
  const auto best = std::max_element(scan.mean_kl.begin(), scan.mean_kl.end());
  scan.best = scan.candidates[static_cast<std::size_t>(best - scan.mean_kl.begin())];
  return scan;
}

}  // namespace driftlens
