#include "driftlens/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include "driftlens/error.hpp"
#include "driftlens/explainers.hpp"
#include "driftlens/parallel.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

bool is_bayes(const std::string& generator) {
  return generator == "bayes_complete" || generator == "bayes_shallow";
}

void check_model_name(const std::string& model) {
  require(model == "tree" || model == "forest" || model == "linear", ErrorCode::kUnknownKind,
          "unknown model '" + model + "' (tree, forest, linear)");
}

void check_method_name(const std::string& method) {
  require(method == "pfi" || method == "model_fi" || method == "ipfi", ErrorCode::kUnknownKind,
          "unknown importance method '" + method + "' (pfi, model_fi, ipfi)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return {mean, sd};
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double feature_auc(std::span<const double> scores, const std::vector<bool>& truth) {
  require(scores.size() == truth.size(), ErrorCode::kDimensionMismatch, "scores and truth differ in length");
  const auto positives = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
  const std::size_t negatives = truth.size() - positives;
  require(positives > 0 && negatives > 0, ErrorCode::kSingleClassTruth,
          "ground truth needs both drifting and non-drifting features");
  for (double s : scores) require(!std::isnan(s), ErrorCode::kDomainError, "NaN importance score");
  // Mann-Whitney U from midranks.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]]) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * q);
}

TimeModel fit_time_regressor(const std::string& model, const Dataset& ds, const TimeEmbedding& emb,
                             const FitConfig& cfg) {
  check_model_name(model);
  if (model == "tree") return fit_moment_tree(ds, emb, cfg);
  if (model == "forest") return fit_moment_forest(ds, emb, cfg);
  return fit_linear_regressor(ds, emb, cfg);
}

WindowedIpfiTrace windowed_ipfi(const Dataset& ds, const WindowedIpfiOptions& o) {
  require(o.window >= 2, ErrorCode::kInvalidArgument, "window must be >= 2");
  require(o.refit_every >= 1, ErrorCode::kInvalidArgument, "refit_every must be >= 1");
  require(ds.size() > o.window, ErrorCode::kTooFewSamples, "stream is not longer than the window");
  check_model_name(o.model);
  const std::size_t n = ds.size(), d = ds.feature_count();
  const TimeEmbedding emb =
      o.embedding.empty()
          ? TimeEmbedding::fourier(5, static_cast<double>(o.window) / static_cast<double>(n - 1))
          : TimeEmbedding::parse(o.embedding, n);

  WindowedIpfiTrace out;
  out.trace = Matrix(n, d, std::numeric_limits<double>::quiet_NaN());
  out.window_end.assign(n, 0);
  IpfiState state(d, o.capacity, o.gamma, o.seed);
  std::vector<double> target(emb.output_size());
  std::vector<std::size_t> idx(o.window);
  // Scoring lags the stream by up to one block: the model refit at block end
  // e covers [e - window, e) and scores the block's samples, so every sample
  // is judged by a model whose window contains it.
  std::size_t scored = 0;
  for (std::size_t end = o.window; scored < n; end = std::min(end + o.refit_every, n)) {
    for (std::size_t k = 0; k < o.window; ++k) idx[k] = end - o.window + k;
    FitConfig cfg = o.fit;
    cfg.seed = derive_seed(o.seed, out.refits);
    const TimeModel model = fit_time_regressor(o.model, ds.subset(idx), emb, cfg);
    ++out.refits;
    for (; scored < end; ++scored) {
      embed_time_into(ds.time(scored), emb, target);
      ipfi_update(state, model, ds.row(scored), target);
      for (std::size_t j = 0; j < d; ++j) out.trace(scored, j) = state.accumulators[j];
      out.window_end[scored] = end;
    }
  }
  out.final_scores = state.accumulators;
  out.stream_sums = state.sums;
  return out;
}

// ---- grid ----

FitConfig GridSpec::default_fit() {
  FitConfig cfg;
  cfg.n_trees = 50;
  return cfg;
}

void GridSpec::validate() const {
  require(!generators.empty() && !perturbations.empty() && !feature_counts.empty() && !models.empty() &&
              !methods.empty(),
          ErrorCode::kInvalidArgument, "every grid axis needs at least one entry");
  require(repeats >= 1, ErrorCode::kInvalidArgument, "repeats must be >= 1");
  require(n >= 8, ErrorCode::kInvalidArgument, "n must be >= 8");
  require(pfi_repeats >= 1, ErrorCode::kInvalidArgument, "pfi_repeats must be >= 1");
  require(holdout > 0.0 && holdout < 1.0, ErrorCode::kInvalidArgument, "holdout must lie in (0, 1)");
  for (const auto& g : generators) {
    if (!is_bayes(g)) parse_base_kind(g);
  }
  for (const auto& m : models) check_model_name(m);
  for (const auto& m : methods) check_method_name(m);
  for (auto k : feature_counts) require(k >= 1, ErrorCode::kInvalidArgument, "feature counts must be >= 1");
  TimeEmbedding::parse(embedding, n).validate();
  fit.validate();
}

nlohmann::json GridSpec::to_json() const {
  nlohmann::json fit_json = fit;
  nlohmann::json ipfi_fit = ipfi.fit;
  return {{"generators", generators},
          {"perturbations", perturbations},
          {"feature_counts", feature_counts},
          {"models", models},
          {"methods", methods},
          {"repeats", repeats},
          {"n", n},
          {"seed", seed},
          {"embedding", embedding},
          {"fit", fit_json},
          {"pfi_repeats", pfi_repeats},
          {"holdout", holdout},
          {"ipfi",
           {{"window", ipfi.window},
            {"refit_every", ipfi.refit_every},
            {"embedding", ipfi.embedding},
            {"capacity", ipfi.capacity},
            {"gamma", ipfi.gamma},
            {"fit", ipfi_fit}}},
          {"deterministic", deterministic}};
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  GridSpec g;
  auto overlay_fit = [](FitConfig base, const nlohmann::json& patch) {
    nlohmann::json merged = base;
    merged.update(patch);
    return merged.get<FitConfig>();
  };
  try {
    if (j.contains("generators")) g.generators = j["generators"].get<std::vector<std::string>>();
    if (j.contains("perturbations")) g.perturbations = j["perturbations"].get<std::vector<std::string>>();
    if (j.contains("feature_counts")) g.feature_counts = j["feature_counts"].get<std::vector<std::size_t>>();
    if (j.contains("k")) g.feature_counts = j["k"].get<std::vector<std::size_t>>();
    if (j.contains("models")) g.models = j["models"].get<std::vector<std::string>>();
    if (j.contains("methods")) g.methods = j["methods"].get<std::vector<std::string>>();
    g.repeats = j.value("repeats", g.repeats);
    g.n = j.value("n", g.n);
    g.seed = j.value("seed", g.seed);
    g.embedding = j.value("embedding", g.embedding);
    g.pfi_repeats = j.value("pfi_repeats", g.pfi_repeats);
    g.holdout = j.value("holdout", g.holdout);
    g.deterministic = j.value("deterministic", g.deterministic);
    if (j.contains("fit")) g.fit = overlay_fit(g.fit, j["fit"]);
    if (j.contains("ipfi")) {
      const auto& w = j["ipfi"];
      g.ipfi.window = w.value("window", g.ipfi.window);
      g.ipfi.refit_every = w.value("refit_every", g.ipfi.refit_every);
      g.ipfi.embedding = w.value("embedding", g.ipfi.embedding);
      g.ipfi.capacity = w.value("capacity", g.ipfi.capacity);
      g.ipfi.gamma = w.value("gamma", g.ipfi.gamma);
      if (w.contains("fit")) g.ipfi.fit = overlay_fit(g.ipfi.fit, w["fit"]);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad grid: ") + e.what());
  }
  g.validate();
  return g;
}

nlohmann::json EvalRecord::to_json() const {
  nlohmann::json j{{"generator", generator}, {"perturbation", perturbation}, {"k", k},
                   {"model", model},         {"method", method},             {"seed", seed},
                   {"repeat", repeat},       {"auc", number_or_null(auc)},   {"runtime_ms", runtime_ms}};
  if (!error.empty()) j["error"] = error;
  return j;
}

LabeledStream grid_stream(const std::string& generator, const std::string& perturbation, std::size_t k,
                          std::size_t n, std::uint64_t seed) {
  if (is_bayes(generator)) {
    const auto mode = generator == "bayes_shallow" ? BayesNetSpec::Mode::kShallow : BayesNetSpec::Mode::kComplete;
    auto s = gen_bayes_net(reference_net(derive_seed(seed, 0), mode), n, derive_seed(seed, 1));
    s.dataset = standardize(s.dataset);
    return s;
  }
  const auto base = standardize(gen_base(parse_base_kind(generator), n, derive_seed(seed, 0)));
  auto s = perturb(base, Perturbation::parse(perturbation), k, derive_seed(seed, 1));
  s.provenance["base"] = generator;
  return s;
}

std::vector<EvalRecord> run_grid(const GridSpec& grid, const std::string& out_path) {
  grid.validate();
  struct Job {
    std::size_t g, p, k, m, r, data_cell;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < grid.generators.size(); ++g) {
    for (std::size_t p = 0; p < grid.perturbations.size(); ++p) {
      for (std::size_t k = 0; k < grid.feature_counts.size(); ++k) {
        const std::size_t cell = (g * grid.perturbations.size() + p) * grid.feature_counts.size() + k;
        for (std::size_t m = 0; m < grid.models.size(); ++m) {
          for (std::size_t r = 0; r < grid.repeats; ++r) jobs.push_back({g, p, k, m, r, cell});
        }
      }
    }
  }
  const TimeEmbedding emb = TimeEmbedding::parse(grid.embedding, grid.n);
  std::vector<std::vector<EvalRecord>> results(jobs.size());

  parallel_for(jobs.size(), [&](std::size_t ji) {
    using Clock = std::chrono::steady_clock;
    const Job& job = jobs[ji];
    const std::uint64_t seed = derive_seed(grid.seed, job.data_cell, job.r);
    const std::string& model_name = grid.models[job.m];
    auto& out = results[ji];
    for (const auto& method : grid.methods) {
      EvalRecord rec;
      rec.generator = grid.generators[job.g];
      rec.perturbation = grid.perturbations[job.p];
      rec.k = grid.feature_counts[job.k];
      rec.model = model_name;
      rec.method = method;
      rec.seed = seed;
      rec.repeat = job.r;
      rec.auc = std::numeric_limits<double>::quiet_NaN();
      out.push_back(rec);
    }
    auto fail_all = [&](const std::string& message) {
      for (auto& rec : out) {
        if (rec.error.empty() && std::isnan(rec.auc)) rec.error = message;
      }
    };
    const auto start = Clock::now();
    std::optional<LabeledStream> stream;
    try {
      stream = grid_stream(grid.generators[job.g], grid.perturbations[job.p], grid.feature_counts[job.k], grid.n, seed);
    } catch (const std::exception& e) {
      fail_all(e.what());
      return;
    }
    const Dataset& ds = stream->dataset;
    const bool batch = std::any_of(grid.methods.begin(), grid.methods.end(),
                                   [](const auto& m) { return m == "pfi" || m == "model_fi"; });
    std::optional<TimeModel> model;
    std::optional<Dataset> test;
    std::string fit_error;
    long long fit_ms = 0;
    if (batch) {
      try {
        Rng rng(derive_seed(seed, 2));
        auto order = rng.permutation(ds.size());
        const auto n_test = static_cast<std::size_t>(std::lround(grid.holdout * static_cast<double>(ds.size())));
        std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        FitConfig cfg = grid.fit;
        cfg.seed = derive_seed(seed, 3);
        model = fit_time_regressor(model_name, ds.subset(train_idx), emb, cfg);
        test = ds.subset(test_idx);
      } catch (const std::exception& e) {
        fit_error = e.what();
      }
      fit_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    }
    for (auto& rec : out) {
      const auto method_start = Clock::now();
      try {
        std::vector<double> scores;
        if (rec.method == "ipfi") {
          WindowedIpfiOptions o = grid.ipfi;
          o.model = model_name;
          o.seed = derive_seed(seed, 5);
          scores = windowed_ipfi(ds, o).stream_sums;
        } else {
          if (!model) fail(ErrorCode::kInternal, fit_error);
          if (rec.method == "pfi") {
            scores = permutation_importance(*model, *test, embed_targets(*test, emb), grid.pfi_repeats,
                                            derive_seed(seed, 4))
                         .scores;
          } else {
            scores = model_importance(*model).scores;
          }
        }
        rec.auc = feature_auc(scores, stream->drifting_features);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - method_start).count();
      rec.runtime_ms = grid.deterministic ? 0 : ms + (rec.method == "ipfi" ? 0 : fit_ms);
    }
  });

  std::vector<EvalRecord> records;
  for (auto& r : results) {
    for (auto& rec : r) records.push_back(std::move(rec));
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + out_path);
    out << records_csv(records);
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + out_path);
  }
  return records;
}

std::string records_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream os;
  os << "generator,perturbation,k,model,method,seed,auc,runtime_ms\n";
  for (const auto& r : records) {
    os << r.generator << ',' << r.perturbation << ',' << r.k << ',' << r.model << ',' << r.method << ','
       << r.seed << ',' << format_double(r.auc) << ',' << r.runtime_ms << '\n';
  }
  return os.str();
}

nlohmann::json summarize(const std::vector<EvalRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::size_t, std::string, std::string>;
  std::map<Key, std::vector<double>> cells;
  std::map<Key, std::size_t> cell_failures;
  std::vector<Key> cell_order;
  std::map<Key, std::vector<double>> pooled;
  std::map<Key, std::vector<std::string>> pooled_generators;
  std::vector<Key> pooled_order;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& r : records) {
    const Key key{r.generator, r.perturbation, r.k, r.model, r.method};
    const Key pkey{"", r.perturbation, r.k, r.model, r.method};
    if (!cells.count(key)) {
      cells[key];
      cell_order.push_back(key);
    }
    if (!pooled.count(pkey)) {
      pooled[pkey];
      pooled_order.push_back(pkey);
    }
    auto& gens = pooled_generators[pkey];
    if (std::find(gens.begin(), gens.end(), r.generator) == gens.end()) gens.push_back(r.generator);
    if (r.ok()) {
      cells[key].push_back(r.auc);
      pooled[pkey].push_back(r.auc);
    } else {
      ++cell_failures[key];
      failures.push_back(r.to_json());
    }
  }
  nlohmann::json cell_json = nlohmann::json::array();
  for (const auto& key : cell_order) {
    const auto ms = mean_std(cells[key]);
    cell_json.push_back({{"generator", std::get<0>(key)},
                         {"perturbation", std::get<1>(key)},
                         {"k", std::get<2>(key)},
                         {"model", std::get<3>(key)},
                         {"method", std::get<4>(key)},
                         {"n", cells[key].size()},
                         {"failures", cell_failures[key]},
                         {"mean_auc", number_or_null(ms[0])},
                         {"std_auc", number_or_null(ms[1])}});
  }
  nlohmann::json pooled_json = nlohmann::json::array();
  for (const auto& key : pooled_order) {
    const auto ms = mean_std(pooled[key]);
    pooled_json.push_back({{"generators", pooled_generators[key]},
                           {"perturbation", std::get<1>(key)},
                           {"k", std::get<2>(key)},
                           {"model", std::get<3>(key)},
                           {"method", std::get<4>(key)},
                           {"n", pooled[key].size()},
                           {"mean_auc", number_or_null(ms[0])},
                           {"std_auc", number_or_null(ms[1])}});
  }
  return {{"cells", cell_json}, {"pooled", pooled_json}, {"failures", failures}};
}

}  // namespace driftlens
