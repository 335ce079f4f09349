#include "driftlens/driftlens.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "driftlens/config.hpp"
#include "driftlens/dataset.hpp"
#include "driftlens/error.hpp"
#include "driftlens/evaluation.hpp"
#include "driftlens/generators.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/pipeline.hpp"
#include "driftlens/random.hpp"

struct dl_dataset {
  driftlens::Dataset ds;
};

namespace {

using driftlens::Dataset;
using driftlens::Error;
using driftlens::ErrorCode;
using driftlens::MethodPlan;
using nlohmann::json;

thread_local std::string g_last_error;

dl_status set_error(ErrorCode code, const std::string& message) {
  g_last_error = message;
  return static_cast<dl_status>(code);
}

// Runs body, translating exceptions into a status and the thread's last error.
template <class Body>
dl_status guarded(Body&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const Error& e) {
    return set_error(e.code(), e.what());
  } catch (const json::exception& e) {
    return set_error(ErrorCode::kParse, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(ErrorCode::kInternal, "out of memory");
  } catch (const std::exception& e) {
    return set_error(ErrorCode::kInternal, e.what());
  } catch (...) {
    return set_error(ErrorCode::kInternal, "unknown failure");
  }
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out) *out = dup(j.dump(2) + "\n");
}

void need(const void* p, const char* what) {
  driftlens::require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

json parse_json(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    driftlens::fail(ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
  }
}

MethodPlan plan_from(const char* text) { return MethodPlan::from_json(parse_json(text)); }

Dataset prepared(const Dataset& ds, const MethodPlan& plan) {
  require(!ds.empty(), ErrorCode::kEmptyDataset, "dataset is empty");
  return plan.standardize && !ds.standardization() ? driftlens::standardize(ds) : ds;
}

driftlens::LocusReport locus_for(const Dataset& ds, const MethodPlan& plan) {
  require(plan.grouping == MethodPlan::Grouping::kLocalize, ErrorCode::kInvalidArgument,
          "plan grouping must be localize@<cp|auto>");
  driftlens::FitConfig cfg = plan.fit;
  cfg.seed = plan.seed;
  double cp = 0.5;
  if (plan.change_point) {
    cp = *plan.change_point;
  } else {
    std::vector<double> candidates;
    for (int k = 1; k <= 9; ++k) candidates.push_back(0.1 * k);
    cp = driftlens::scan_change_points(ds, candidates, cfg, plan.localize).best;
  }
  return driftlens::localize(ds, cp, cfg, plan.localize);
}

driftlens::LabeledStream generate(const json& req) {
  using namespace driftlens;
  const std::string kind = req.value("kind", "perturb");
  const auto n = req.value("n", std::size_t{1000});
  const auto seed = req.value("seed", std::uint64_t{0});
  require(n >= 2, ErrorCode::kInvalidArgument, "n must be at least 2");
  if (kind == "base" || kind == "perturb") {
    BaseOptions bo;
    bo.agrawal_function = req.value("agrawal_function", bo.agrawal_function);
    const auto base = parse_base_kind(req.value("base", std::string("agrawal")));
    Dataset ds = gen_base(base, n, derive_seed(seed, 0), bo);
    if (kind == "base") {
      LabeledStream s;
      s.dataset = std::move(ds);
      s.drifting_features.assign(s.dataset.feature_count(), false);
      s.provenance = {{"generator", base_kind_name(base)}, {"seed", seed}};
      return s;
    }
    // Perturbations act in standard units, as in the evaluation grid.
    auto s = perturb(standardize(ds), Perturbation::parse(req.value("perturbation", std::string("shift:5"))),
                     req.value("n_features", std::size_t{1}), derive_seed(seed, 1));
    s.provenance["base"] = base_kind_name(base);
    return s;
  }
  if (kind == "bayes") {
    const std::string mode = req.value("mode", std::string("complete"));
    require(mode == "complete" || mode == "shallow", ErrorCode::kUnknownKind,
            "bayes mode must be complete or shallow");
    const auto spec = reference_net(derive_seed(seed, 0),
                                    mode == "shallow" ? BayesNetSpec::Mode::kShallow : BayesNetSpec::Mode::kComplete);
    return gen_bayes_net(spec, n, derive_seed(seed, 1));
  }
  if (kind == "sensor") {
    return gen_sensor_fault(req.value("n_sensors", std::size_t{6}), n,
                            req.value("fault_times", std::vector<double>{0.5}),
                            req.value("fault_sensors", std::vector<int>{0}), seed);
  }
  if (kind == "two_cluster") {
    return two_cluster_swap(n, seed, req.value("change_point", 0.5), req.value("static_share", 0.5));
  }
  fail(ErrorCode::kUnknownKind, "unknown generator kind '" + kind + "' (base, perturb, bayes, sensor, two_cluster)");
}

}  // namespace

extern "C" {

const char* dl_version(void) { return "0.1.0"; }

const char* dl_status_name(dl_status status) {
  const int v = static_cast<int>(status);
  if (v < 0 || v > static_cast<int>(ErrorCode::kInternal)) return "Unknown";
  return driftlens::error_code_name(static_cast<ErrorCode>(v)).data();
}

const char* dl_last_error(void) { return g_last_error.c_str(); }

void dl_string_free(char* s) { std::free(s); }

dl_status dl_set_threads(size_t n) {
  return guarded([&] {
    driftlens::set_thread_count(n);
    return DL_OK;
  });
}

dl_status dl_parse_config(const char* text, char** json_out) {
  return guarded([&] {
    need(text, "text");
    need(json_out, "json_out");
    emit(json_out, driftlens::parse_config(text));
    return DL_OK;
  });
}

dl_status dl_load_config(const char* path, char** json_out) {
  return guarded([&] {
    need(path, "path");
    need(json_out, "json_out");
    emit(json_out, driftlens::load_config(path));
    return DL_OK;
  });
}

dl_status dl_plan_resolve(const char* plan_json, char** resolved_json) {
  return guarded([&] {
    need(resolved_json, "resolved_json");
    emit(resolved_json, plan_from(plan_json).to_json());
    return DL_OK;
  });
}

dl_status dl_dataset_from_arrays(const double* values, size_t n, size_t d, const double* times,
                                 const char* const* names, dl_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    driftlens::require(n > 0 && d > 0, ErrorCode::kEmptyDataset, "dataset needs n > 0 and d > 0");
    need(values, "values");
    need(times, "times");
    std::vector<std::string> feature_names;
    for (size_t j = 0; j < d; ++j) {
      feature_names.push_back(names && names[j] ? names[j] : "x" + std::to_string(j));
    }
    std::vector<driftlens::TimedSample> samples(n);
    for (size_t i = 0; i < n; ++i) {
      samples[i].features.assign(values + i * d, values + (i + 1) * d);
      samples[i].time = times[i];
    }
    *out = new dl_dataset{Dataset(std::move(feature_names), std::move(samples))};
    return DL_OK;
  });
}

dl_status dl_dataset_load_csv(const char* path, const char* time_col, dl_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    driftlens::CsvOptions opts;
    if (time_col) opts.time_column = time_col;
    *out = new dl_dataset{driftlens::load_csv(path, opts)};
    return DL_OK;
  });
}

dl_status dl_dataset_save_csv(const dl_dataset* ds, const char* path, const char* time_col) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    driftlens::write_csv(ds->ds, path, time_col ? time_col : "t");
    return DL_OK;
  });
}

dl_status dl_dataset_shape(const dl_dataset* ds, size_t* n, size_t* d) {
  return guarded([&] {
    need(ds, "dataset");
    if (n) *n = ds->ds.size();
    if (d) *d = ds->ds.feature_count();
    return DL_OK;
  });
}

void dl_dataset_free(dl_dataset* ds) { delete ds; }

dl_status dl_generate(const char* request_json, dl_dataset** out, char** truth_json) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto stream = generate(parse_json(request_json));
    if (truth_json) emit(truth_json, stream.truth_json());
    *out = new dl_dataset{std::move(stream.dataset)};
    return DL_OK;
  });
}

dl_status dl_localize(const dl_dataset* ds, const char* plan_json, char** report_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(report_json, "report_json");
    const auto plan = plan_from(plan_json);
    emit(report_json, locus_for(prepared(ds->ds, plan), plan).to_json());
    return DL_OK;
  });
}

dl_status dl_segment(const dl_dataset* ds, const char* plan_json, char** segmentation_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(segmentation_json, "segmentation_json");
    const auto plan = plan_from(plan_json);
    driftlens::require(plan.grouping == MethodPlan::Grouping::kSegment, ErrorCode::kInvalidArgument,
                       "plan grouping must be segment@<embedding>");
    const auto work = prepared(ds->ds, plan);
    driftlens::FitConfig cfg = plan.fit;
    cfg.seed = plan.seed;
    const auto emb = driftlens::TimeEmbedding::parse(plan.embedding, work.size());
    emit(segmentation_json, driftlens::segment(work, emb, cfg, plan.segment).to_json());
    return DL_OK;
  });
}

dl_status dl_prototypes(const dl_dataset* ds, const char* grouping_json, const char* plan_json,
                        char** prototypes_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(grouping_json, "grouping_json");
    need(prototypes_json, "prototypes_json");
    const auto plan = plan_from(plan_json);
    const auto work = prepared(ds->ds, plan);
    const auto grouping = parse_json(grouping_json);
    driftlens::PrototypeOptions po = plan.prototypes;
    po.seed = driftlens::derive_seed(plan.seed, 2);
    if (grouping.contains("segments")) {
      const auto seg = driftlens::Segmentation::from_json(grouping);
      emit(prototypes_json, driftlens::build_prototypes(work, seg, po).to_json());
      return DL_OK;
    }
    const auto locus = driftlens::LocusReport::from_json(grouping);
    driftlens::require(locus.region.size() == work.size(), ErrorCode::kMismatchedDataset,
                       "locus report and dataset differ in size");
    std::optional<driftlens::TimeModel> model;
    if (po.metric.kind != driftlens::MetricKind::kEuclidean) {
      driftlens::FitConfig cfg = plan.fit;
      cfg.seed = plan.seed;
      model = driftlens::fit_prob_classifier(work, driftlens::time_labels(work, locus.change_point), cfg,
                                             plan.localize.classifier);
    }
    emit(prototypes_json, driftlens::build_prototypes(work, locus, model ? &*model : nullptr, po).to_json());
    return DL_OK;
  });
}

dl_status dl_explain(const dl_dataset* ds, const char* plan_json, char** bundle_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(bundle_json, "bundle_json");
    const auto bundle = driftlens::explain_drift(ds->ds, plan_from(plan_json));
    emit(bundle_json, bundle.to_json());
    if (!bundle.partial()) return DL_OK;
    return set_error(ErrorCode::kPartialFailure,
                     std::to_string(bundle.errors.size()) + " explainer error(s); first: " +
                         bundle.errors.front().method + ": " + bundle.errors.front().message);
  });
}

dl_status dl_eval(const char* grid_json, const char* results_csv, char** summary_json) {
  return guarded([&] {
    const auto grid = driftlens::GridSpec::from_json(parse_json(grid_json));
    const auto records = driftlens::run_grid(grid, results_csv ? results_csv : "");
    if (summary_json) {
      json rec = json::array();
      for (const auto& r : records) rec.push_back(r.to_json());
      emit(summary_json, {{"records", rec}, {"summary", driftlens::summarize(records)}});
    }
    return DL_OK;
  });
}

}  // extern "C"
