#include "driftlens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "driftlens/embedding.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

const std::set<std::string> kMethods{"pfi", "ipfi", "model_fi", "surrogate", "counterfactuals"};

// Seed streams below the plan seed.
constexpr std::uint64_t kPrototypeStream = 2;
constexpr std::uint64_t kSurrogateStream = 3;
constexpr std::uint64_t kPfiStream = 4;
constexpr std::uint64_t kIpfiStream = 5;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::kParse, where + " must be a table");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) > 0, ErrorCode::kParse, "unknown key '" + key + "' in " + where);
  }
}

MethodError error_record(const std::string& method, const std::string& target, const std::exception& e) {
  MethodError err;
  err.method = method;
  err.target = target;
  err.message = e.what();
  const auto* known = dynamic_cast<const Error*>(&e);
  err.code = known ? known->code() : ErrorCode::kInternal;
  return err;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Out-of-fold PFI: each fold's classifier is scored on its held-out fold and
// the fold reports are averaged with weights proportional to fold size.
ImportanceReport cross_fit_pfi(const Dataset& ds, std::span<const int> labels, const FitConfig& cfg,
                               const MethodPlan& plan) {
  const std::size_t n = ds.size();
  const auto folds = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(plan.localize.folds), n));
  require(folds >= 2, ErrorCode::kTooFewSamples, "cross-fitted PFI needs at least two folds");
  Rng rng(derive_seed(plan.seed, kPfiStream));
  const auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> test(folds), train(folds);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t f = 0; f < folds; ++f) (pos % folds == f ? test[f] : train[f]).push_back(order[pos]);
  }
  std::vector<ImportanceReport> reports(folds);
  parallel_for(folds, [&](std::size_t f) {
    const auto tr = sorted(train[f]);
    const auto te = sorted(test[f]);
    std::vector<int> tr_labels, te_labels;
    for (auto i : tr) tr_labels.push_back(labels[i]);
    for (auto i : te) te_labels.push_back(labels[i]);
    const auto ones = std::count(tr_labels.begin(), tr_labels.end(), 1);
    require(ones > 0 && static_cast<std::size_t>(ones) < tr_labels.size(), ErrorCode::kTooFewSamples,
            "a PFI training fold holds a single time class");
    FitConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(plan.seed, kPfiStream, f);
    const auto model = fit_prob_classifier(ds.subset(tr), tr_labels, fold_cfg, plan.localize.classifier);
    reports[f] = permutation_importance(model, ds.subset(te), te_labels, plan.pfi_repeats,
                                        derive_seed(plan.seed, kPfiStream, f, 1));
  });
  ImportanceReport out;
  out.method = ImportanceMethod::kPfi;
  out.n_repeats = plan.pfi_repeats;
  const std::size_t d = ds.feature_count();
  out.scores.assign(d, 0.0);
  out.std_errors.assign(d, 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const double w = static_cast<double>(test[f].size()) / static_cast<double>(n);
    out.baseline_metric += w * reports[f].baseline_metric;
    for (std::size_t j = 0; j < d; ++j) {
      out.scores[j] += w * reports[f].scores[j];
      out.std_errors[j] += w * w * reports[f].std_errors[j] * reports[f].std_errors[j];
    }
  }
  for (auto& se : out.std_errors) se = std::sqrt(se);
  return out;
}

// Held-out PFI for segmentation models: refit on 75%, score on 25%.
ImportanceReport holdout_pfi(const Dataset& ds, const TimeEmbedding& emb, const FitConfig& cfg,
                             const MethodPlan& plan) {
  Rng rng(derive_seed(plan.seed, kPfiStream));
  const auto order = rng.permutation(ds.size());
  const auto n_test = static_cast<std::size_t>(std::lround(0.25 * static_cast<double>(ds.size())));
  require(n_test >= 1 && n_test < ds.size(), ErrorCode::kTooFewSamples, "too few samples for a PFI holdout");
  const auto te = sorted({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test)});
  const auto tr = sorted({order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end()});
  FitConfig fit_cfg = cfg;
  fit_cfg.seed = derive_seed(plan.seed, kPfiStream, 1);
  const auto train = ds.subset(tr);
  const auto model = plan.segment.use_forest ? fit_moment_forest(train, emb, fit_cfg) : fit_moment_tree(train, emb, fit_cfg);
  const auto test = ds.subset(te);
  return permutation_importance(model, test, embed_targets(test, emb), plan.pfi_repeats,
                                derive_seed(plan.seed, kPfiStream, 2));
}

std::size_t nearest_member(const Dataset& ds, const PrototypeGroup::Entry& entry) {
  require(!entry.members.empty(), ErrorCode::kEmptyGroup, "prototype has no members");
  std::size_t best = entry.members.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (auto i : sorted(entry.members)) {
    const auto x = ds.row(i);
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - entry.features[j]) * (x[j] - entry.features[j]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

// ---- plan ----

void MethodPlan::set_grouping(const std::string& text) {
  const auto at = text.find('@');
  const std::string head = text.substr(0, at);
  const std::string arg = at == std::string::npos ? "" : text.substr(at + 1);
  if (head == "localize") {
    grouping = Grouping::kLocalize;
    if (arg.empty() || arg == "auto") {
      change_point.reset();
      return;
    }
    try {
      std::size_t used = 0;
      const double cp = std::stod(arg, &used);
      require(used == arg.size(), ErrorCode::kParse, "bad change point '" + arg + "'");
      change_point = cp;
    } catch (const std::logic_error&) {
      fail(ErrorCode::kParse, "bad change point '" + arg + "'");
    }
  } else if (head == "segment") {
    grouping = Grouping::kSegment;
    if (!arg.empty()) embedding = arg;
  } else {
    fail(ErrorCode::kUnknownKind, "unknown grouping '" + text + "' (localize@<cp|auto>, segment@<embedding>)");
  }
}

std::string MethodPlan::grouping_string() const {
  if (grouping == Grouping::kSegment) return "segment@" + embedding;
  if (!change_point) return "localize@auto";
  nlohmann::json cp = *change_point;
  return "localize@" + cp.dump();
}

bool MethodPlan::wants(const std::string& method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

void MethodPlan::validate() const {
  require(!methods.empty(), ErrorCode::kInvalidArgument, "plan names no explainer methods");
  for (const auto& m : methods) {
    require(kMethods.count(m) > 0, ErrorCode::kUnknownKind,
            "unknown method '" + m + "' (pfi, ipfi, model_fi, surrogate, counterfactuals)");
  }
  if (grouping == Grouping::kLocalize) {
    if (change_point) {
      require(*change_point > 0.0 && *change_point < 1.0, ErrorCode::kInvalidArgument,
              "change point must lie in (0, 1)");
    }
    localize.validate();
  } else {
    TimeEmbedding::parse(embedding, 2).validate();
    segment.validate();
  }
  fit.validate();
  prototypes.metric.validate();
  require(prototypes.k_per_group >= 1, ErrorCode::kInvalidArgument, "prototypes.k must be >= 1");
  require(pfi_repeats >= 1, ErrorCode::kInvalidArgument, "pfi repeats must be >= 1");
  require(ipfi_capacity >= 1, ErrorCode::kInvalidArgument, "ipfi capacity must be >= 1");
  require(ipfi_gamma > 0.0 && ipfi_gamma <= 1.0, ErrorCode::kInvalidArgument, "ipfi gamma must lie in (0, 1]");
  require(surrogate.sigma > 0.0, ErrorCode::kInvalidArgument, "surrogate sigma must be positive");
  require(surrogate.n_samples >= 2, ErrorCode::kInvalidArgument, "surrogate n_samples must be >= 2");
}

nlohmann::json MethodPlan::to_json() const {
  nlohmann::json fit_json = fit;
  fit_json.erase("seed");
  auto optional_number = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json("auto");
  };
  return {{"grouping", grouping_string()},
          {"methods", methods},
          {"seed", seed},
          {"standardize", standardize},
          {"fit", fit_json},
          {"localize",
           {{"folds", localize.folds},
            {"classifier", classifier_kind_name(localize.classifier)},
            {"theta", optional_number(localize.theta)},
            {"n_null", localize.n_null},
            {"quantile", localize.quantile}}},
          {"segment",
           {{"use_forest", segment.use_forest},
            {"bins", segment.bins},
            {"threshold", optional_number(segment.threshold)},
            {"n_null", segment.n_null},
            {"quantile", segment.quantile}}},
          {"prototypes",
           {{"k", prototypes.k_per_group},
            {"metric", metric_kind_name(prototypes.metric.kind)},
            {"k_neighbors", prototypes.metric.k_neighbors},
            {"lambda", prototypes.metric.lambda},
            {"bins", prototypes.bins}}},
          {"surrogate",
           {{"n_samples", surrogate.n_samples},
            {"sigma", surrogate.sigma},
            {"kernel_width", surrogate.kernel_width}}},
          {"pfi", {{"repeats", pfi_repeats}}},
          {"ipfi", {{"capacity", ipfi_capacity}, {"gamma", ipfi_gamma}}}};
}

MethodPlan MethodPlan::from_json(const nlohmann::json& j) {
  MethodPlan p;
  auto optional_number = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
    return v.get<double>();
  };
  try {
    check_keys(j,
               {"grouping", "methods", "seed", "standardize", "fit", "localize", "segment", "prototypes", "surrogate",
                "pfi", "ipfi", "input", "time_col"},
               "plan");
    if (j.contains("grouping")) p.set_grouping(j["grouping"].get<std::string>());
    if (j.contains("methods")) p.methods = j["methods"].get<std::vector<std::string>>();
    p.seed = j.value("seed", p.seed);
    p.standardize = j.value("standardize", p.standardize);
    if (j.contains("fit")) {
      check_keys(j["fit"], {"max_depth", "min_leaf", "n_trees", "feature_subsample", "bootstrap", "l1_strength"},
                 "[fit]");
      nlohmann::json merged = p.fit;
      merged.update(j["fit"]);
      p.fit = merged.get<FitConfig>();
    }
    if (j.contains("localize")) {
      const auto& l = j["localize"];
      check_keys(l, {"folds", "classifier", "theta", "n_null", "quantile"}, "[localize]");
      p.localize.folds = l.value("folds", p.localize.folds);
      if (l.contains("classifier")) p.localize.classifier = parse_classifier_kind(l["classifier"].get<std::string>());
      if (l.contains("theta")) p.localize.theta = optional_number(l["theta"]);
      p.localize.n_null = l.value("n_null", p.localize.n_null);
      p.localize.quantile = l.value("quantile", p.localize.quantile);
    }
    if (j.contains("segment")) {
      const auto& s = j["segment"];
      check_keys(s, {"use_forest", "bins", "threshold", "n_null", "quantile", "embedding"}, "[segment]");
      p.segment.use_forest = s.value("use_forest", p.segment.use_forest);
      p.segment.bins = s.value("bins", p.segment.bins);
      if (s.contains("threshold")) p.segment.threshold = optional_number(s["threshold"]);
      p.segment.n_null = s.value("n_null", p.segment.n_null);
      p.segment.quantile = s.value("quantile", p.segment.quantile);
      if (s.contains("embedding")) p.embedding = s["embedding"].get<std::string>();
    }
    if (j.contains("prototypes")) {
      const auto& s = j["prototypes"];
      check_keys(s, {"k", "metric", "k_neighbors", "lambda", "bins"}, "[prototypes]");
      p.prototypes.k_per_group = s.value("k", p.prototypes.k_per_group);
      if (s.contains("metric")) p.prototypes.metric.kind = parse_metric_kind(s["metric"].get<std::string>());
      p.prototypes.metric.k_neighbors = s.value("k_neighbors", p.prototypes.metric.k_neighbors);
      p.prototypes.metric.lambda = s.value("lambda", p.prototypes.metric.lambda);
      p.prototypes.bins = s.value("bins", p.prototypes.bins);
    }
    if (j.contains("surrogate")) {
      const auto& s = j["surrogate"];
      check_keys(s, {"n_samples", "sigma", "kernel_width"}, "[surrogate]");
      p.surrogate.n_samples = s.value("n_samples", p.surrogate.n_samples);
      p.surrogate.sigma = s.value("sigma", p.surrogate.sigma);
      p.surrogate.kernel_width = s.value("kernel_width", p.surrogate.kernel_width);
    }
    if (j.contains("pfi")) {
      check_keys(j["pfi"], {"repeats"}, "[pfi]");
      p.pfi_repeats = j["pfi"].value("repeats", p.pfi_repeats);
    }
    if (j.contains("ipfi")) {
      check_keys(j["ipfi"], {"capacity", "gamma"}, "[ipfi]");
      p.ipfi_capacity = j["ipfi"].value("capacity", p.ipfi_capacity);
      p.ipfi_gamma = j["ipfi"].value("gamma", p.ipfi_gamma);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad plan: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json MethodError::to_json() const {
  return {{"method", method},
          {"target", target},
          {"code", std::string(error_code_name(code))},
          {"message", message}};
}

const ImportanceReport* ExplanationBundle::importance(ImportanceMethod method) const {
  for (const auto& r : importances) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

nlohmann::json ExplanationBundle::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kBundleSchemaVersion;
  j["status"] = partial() ? "partial" : "ok";
  j["seed"] = plan.seed;
  j["config"] = plan.to_json();
  j["feature_names"] = feature_names;
  nlohmann::json grouping;
  if (locus) {
    grouping = {{"kind", "localize"}, {"locus", locus->to_json()}};
  } else if (segmentation) {
    grouping = {{"kind", "segment"}, {"segmentation", segmentation->to_json()}};
  }
  nlohmann::json region_names = nlohmann::json::array();
  for (auto r : regions) region_names.push_back(region_name(r));
  grouping["regions"] = region_names;
  j["grouping"] = grouping;
  j["prototypes"] = prototypes ? prototypes->to_json() : nlohmann::json(nullptr);
  j["importances"] = nlohmann::json::array();
  for (const auto& r : importances) j["importances"].push_back(r.to_json(feature_names));
  j["surrogates"] = nlohmann::json::array();
  for (const auto& [target, s] : surrogates) {
    j["surrogates"].push_back({{"group", target.group}, {"prototype", target.prototype}, {"surrogate", s.to_json()}});
  }
  j["counterfactuals"] = nlohmann::json::array();
  for (const auto& [target, c] : counterfactuals) {
    j["counterfactuals"].push_back(
        {{"group", target.group}, {"prototype", target.prototype}, {"counterfactual", c.to_json()}});
  }
  j["errors"] = nlohmann::json::array();
  for (const auto& e : errors) j["errors"].push_back(e.to_json());
  return j;
}

std::vector<Region> segment_regions(const Segmentation& seg, const Dataset& ds) {
  require(seg.assignments.size() == ds.size(), ErrorCode::kMismatchedDataset,
          "segmentation and dataset differ in size");
  std::map<std::int64_t, std::pair<std::size_t, std::size_t>> halves;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& h = halves[seg.assignments[i]];
    (ds.time(i) < 0.5 ? h.first : h.second) += 1;
  }
  std::vector<Region> regions(ds.size(), Region::kNotDrifting);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto id = seg.assignments[i];
    if (!seg.segment(id).drift_flag) continue;
    const auto& h = halves[id];
    regions[i] = h.second > h.first ? Region::kAfter : Region::kBefore;
  }
  return regions;
}

ExplanationBundle explain_drift(const Dataset& input, const MethodPlan& plan) {
  plan.validate();
  require(!input.empty(), ErrorCode::kEmptyDataset, "dataset is empty");
  const Dataset ds = plan.standardize && !input.standardization() ? standardize(input) : input;
  const std::size_t d = ds.feature_count();

  ExplanationBundle bundle;
  bundle.plan = plan;
  bundle.feature_names = ds.feature_names();
  FitConfig cfg = plan.fit;
  cfg.seed = plan.seed;

  // Grouping and the model every explainer reads.
  std::optional<TimeModel> model;
  std::vector<int> labels;
  TimeEmbedding emb;
  if (plan.grouping == MethodPlan::Grouping::kLocalize) {
    double cp = 0.5;
    if (plan.change_point) {
      cp = *plan.change_point;
    } else {
      std::vector<double> candidates;
      for (int k = 1; k <= 9; ++k) candidates.push_back(0.1 * k);
      cp = scan_change_points(ds, candidates, cfg, plan.localize).best;
    }
    bundle.locus = localize(ds, cp, cfg, plan.localize);
    labels = time_labels(ds, cp);
    model = fit_prob_classifier(ds, labels, cfg, plan.localize.classifier);
    bundle.regions = bundle.locus->region;
  } else {
    emb = TimeEmbedding::parse(plan.embedding, ds.size());
    bundle.segmentation = segment(ds, emb, cfg, plan.segment);
    model = bundle.segmentation->model;
    bundle.regions = segment_regions(*bundle.segmentation, ds);
  }

  const bool local = plan.wants("surrogate") || plan.wants("counterfactuals");
  std::string prototype_error;
  if (local) {
    PrototypeOptions po = plan.prototypes;
    po.seed = derive_seed(plan.seed, kPrototypeStream);
    try {
      bundle.prototypes = bundle.locus ? build_prototypes(ds, *bundle.locus, &*model, po)
                                       : build_prototypes(ds, *bundle.segmentation, po);
    } catch (const std::exception& e) {
      bundle.errors.push_back(error_record("prototypes", "", e));
      prototype_error = e.what();
    }
  }

  // Local explanation targets in (group, prototype) order.
  std::vector<LocalExplanationTarget> targets;
  std::vector<const PrototypeGroup::Entry*> entries;
  if (bundle.prototypes) {
    for (const auto& g : bundle.prototypes->groups) {
      for (std::size_t p = 0; p < g.prototypes.size(); ++p) {
        targets.push_back({g.name, p});
        entries.push_back(&g.prototypes[p]);
      }
    }
  }
  auto target_name = [](const LocalExplanationTarget& t) { return t.group + "#" + std::to_string(t.prototype); };

  for (const auto& method : plan.methods) {
    if (method == "surrogate" || method == "counterfactuals") {
      if (!bundle.prototypes) {
        bundle.errors.push_back(
            error_record(method, "", Error(ErrorCode::kEmptyGroup, "no prototypes: " + prototype_error)));
        continue;
      }
      const bool surrogate = method == "surrogate";
      const auto scales = feature_scales(ds);
      std::vector<std::optional<LocalSurrogate>> s_out(targets.size());
      std::vector<std::optional<Counterfactual>> c_out(targets.size());
      std::vector<std::optional<MethodError>> e_out(targets.size());
      parallel_for(targets.size(), [&](std::size_t t) {
        try {
          if (surrogate) {
            SurrogateOptions so = plan.surrogate;
            so.seed = derive_seed(plan.seed, kSurrogateStream, t);
            s_out[t] = local_surrogate(*model, entries[t]->features, scales, so);
          } else {
            const std::size_t original =
                entries[t]->medoid_index ? *entries[t]->medoid_index : nearest_member(ds, *entries[t]);
            c_out[t] = nearest_counterfactual(ds, bundle.regions, original);
          }
        } catch (const std::exception& e) {
          e_out[t] = error_record(method, target_name(targets[t]), e);
        }
      });
      for (std::size_t t = 0; t < targets.size(); ++t) {
        if (e_out[t]) bundle.errors.push_back(*e_out[t]);
        if (s_out[t]) bundle.surrogates.emplace_back(targets[t], *s_out[t]);
        if (c_out[t]) bundle.counterfactuals.emplace_back(targets[t], *c_out[t]);
      }
      continue;
    }
    try {
      if (method == "pfi") {
        bundle.importances.push_back(bundle.locus ? cross_fit_pfi(ds, labels, cfg, plan) : holdout_pfi(ds, emb, cfg, plan));
      } else if (method == "model_fi") {
        bundle.importances.push_back(model_importance(*model));
      } else if (method == "ipfi") {
        IpfiState state(d, plan.ipfi_capacity, plan.ipfi_gamma, derive_seed(plan.seed, kIpfiStream));
        std::vector<double> target;
        for (std::size_t i = 0; i < ds.size(); ++i) {
          target = bundle.locus ? std::vector<double>{static_cast<double>(labels[i])} : embed_time(ds.time(i), emb);
          ipfi_update(state, *model, ds.row(i), target);
        }
        bundle.importances.push_back(state.report());
      }
    } catch (const std::exception& e) {
      bundle.errors.push_back(error_record(method, "", e));
    }
  }
  return bundle;
}

}  // namespace driftlens
