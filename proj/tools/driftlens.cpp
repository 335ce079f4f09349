// driftlens command line. Talks to the library only through the C API.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "driftlens/driftlens.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitPartial = 3 };

struct Failure {
  int exit_code;
  dl_status status;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, DL_INVALID_ARGUMENT, message}; }

void check(dl_status status) {
  if (status != DL_OK) throw Failure{kExitData, status, dl_last_error()};
}

json take(char* s) {
  json j = json::parse(s);
  dl_string_free(s);
  return j;
}

class DatasetHandle {
 public:
  DatasetHandle() = default;
  DatasetHandle(const DatasetHandle&) = delete;
  DatasetHandle& operator=(const DatasetHandle&) = delete;
  ~DatasetHandle() { dl_dataset_free(p_); }
  dl_dataset** out() { return &p_; }
  const dl_dataset* get() const { return p_; }

 private:
  dl_dataset* p_ = nullptr;
};

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool deterministic = false;
  bool json_errors = false;
  std::string plot_dir;
  bool seed_given = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitData, DL_IO, "cannot open " + path};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitData, DL_IO, "cannot write " + path};
  out << text;
  if (!out) throw Failure{kExitData, DL_IO, "write failed for " + path};
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// .json files are JSON; anything else is the key-value config format.
json read_config(const std::string& path) {
  if (fs::path(path).extension() == ".json") {
    try {
      return json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw Failure{kExitData, DL_PARSE, path + ": " + e.what()};
    }
  }
  char* out = nullptr;
  check(dl_load_config(path.c_str(), &out));
  return take(out);
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Failure{kExitData, DL_PARSE, path + ": " + e.what()};
  }
}

// At the command line a Fourier period above 1 without a suffix is a sample
// count ("fourier:5:500" == "fourier:5:500s").
std::string cli_embedding(const std::string& text) {
  if (text.rfind("fourier:", 0) != 0) return text;
  const auto last = text.rfind(':');
  if (last <= 7) return text;
  const std::string period = text.substr(last + 1);
  if (period.empty() || period.back() == 's') return text;
  try {
    if (std::stod(period) > 1.0) return text + "s";
  } catch (const std::logic_error&) {
  }
  return text;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_echo(const Globals& g, const std::string& command, json args) {
  json echo{{"command", command}, {"version", dl_version()}, {"seed", g.seed}, {"args", std::move(args)}};
  if (!g.deterministic) echo["generated_at"] = utc_now();
  return echo;
}

json resolve_plan(const json& plan) {
  char* out = nullptr;
  check(dl_plan_resolve(plan.dump().c_str(), &out));
  return take(out);
}

void load_dataset(DatasetHandle& ds, const std::string& input, const std::string& time_col) {
  if (input.empty()) usage_error("--input is required");
  check(dl_dataset_load_csv(input.c_str(), time_col.c_str(), ds.out()));
}

// ---- plot data ----

std::string num(const json& v) { return v.is_null() ? "nan" : v.dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void plot_locus(const fs::path& dir, const json& locus) {
  std::string out = "index,kl,p_after,in_locus,region\n";
  for (const auto& s : locus["samples"]) {
    out += s["index"].dump() + "," + num(s["kl"]) + "," + num(s["p_after"]) + "," +
           (s["in_locus"].get<bool>() ? "1" : "0") + "," + s["region"].get<std::string>() + "\n";
  }
  write_file((dir / "locus.csv").string(), out);
}

void plot_segmentation(const fs::path& dir, const json& seg) {
  std::string table = "segment,size,tv,threshold,drift_flag\n";
  std::string hist = "segment,bin,share\n";
  auto add_hist = [&](const std::string& name, const json& h) {
    for (std::size_t b = 0; b < h.size(); ++b) hist += name + "," + std::to_string(b) + "," + num(h[b]) + "\n";
  };
  add_hist("all", seg["global_histogram"]);
  for (const auto& s : seg["segments"]) {
    const auto id = s["id"].dump();
    table += id + "," + s["size"].dump() + "," + num(s["tv"]) + "," + num(s["threshold"]) + "," +
             (s["drift_flag"].get<bool>() ? "1" : "0") + "\n";
    add_hist(id, s["histogram"]);
  }
  write_file((dir / "segments.csv").string(), table);
  write_file((dir / "segment_histograms.csv").string(), hist);
}

void plot_prototypes(const fs::path& dir, const json& set) {
  std::string occurrence = "group,prototype,bin,share\n";
  std::string members = "group,prototype,index\n";
  for (const auto& g : set["groups"]) {
    const auto group = csv_field(g["group"].get<std::string>());
    for (std::size_t p = 0; p < g["prototypes"].size(); ++p) {
      const auto& proto = g["prototypes"][p];
      const auto prefix = group + "," + std::to_string(p) + ",";
      for (std::size_t b = 0; b < proto["occurrence"].size(); ++b) {
        occurrence += prefix + std::to_string(b) + "," + num(proto["occurrence"][b]) + "\n";
      }
      for (const auto& m : proto["members"]) members += prefix + m.dump() + "\n";
    }
  }
  write_file((dir / "prototype_occurrence.csv").string(), occurrence);
  write_file((dir / "prototype_members.csv").string(), members);
}

void plot_bundle(const fs::path& dir, const json& b) {
  const auto& grouping = b["grouping"];
  if (grouping.contains("locus")) plot_locus(dir, grouping["locus"]);
  if (grouping.contains("segmentation")) plot_segmentation(dir, grouping["segmentation"]);
  if (!b["prototypes"].is_null()) plot_prototypes(dir, b["prototypes"]);
  const auto& names = b["feature_names"];
  std::string imp = "method,feature,score,std_error\n";
  for (const auto& r : b["importances"]) {
    for (const auto& f : r["features"]) {
      imp += r["method"].get<std::string>() + "," + csv_field(names[f["index"].get<std::size_t>()]) + "," +
             num(f["score"]) + "," + num(f["std_error"]) + "\n";
    }
  }
  write_file((dir / "importances.csv").string(), imp);
  std::string sur = "group,prototype,feature,coefficient\n";
  for (const auto& s : b["surrogates"]) {
    const auto& coef = s["surrogate"]["coefficients"];
    for (std::size_t j = 0; j < coef.size(); ++j) {
      sur += csv_field(s["group"].get<std::string>()) + "," + s["prototype"].dump() + "," +
             csv_field(names[j].get<std::string>()) + "," + num(coef[j]) + "\n";
    }
  }
  write_file((dir / "surrogates.csv").string(), sur);
  std::string cf = "group,prototype,original_index,counterfactual_index,distance\n";
  for (const auto& c : b["counterfactuals"]) {
    const auto& x = c["counterfactual"];
    cf += csv_field(c["group"].get<std::string>()) + "," + c["prototype"].dump() + "," + x["original_index"].dump() +
          "," + x["counterfactual_index"].dump() + "," + num(x["distance"]) + "\n";
  }
  write_file((dir / "counterfactuals.csv").string(), cf);
}

void plot_summary(const fs::path& dir, const json& summary) {
  std::string cells = "generator,perturbation,k,model,method,mean_auc,std_auc,n,failures\n";
  for (const auto& c : summary["cells"]) {
    cells += csv_field(c["generator"].get<std::string>()) + "," + csv_field(c["perturbation"].get<std::string>()) +
             "," + c["k"].dump() + "," + c["model"].get<std::string>() + "," + c["method"].get<std::string>() + "," +
             num(c["mean_auc"]) + "," + num(c["std_auc"]) + "," + c["n"].dump() + "," + c["failures"].dump() + "\n";
  }
  write_file((dir / "cells.csv").string(), cells);
}

fs::path plot_dir(const Globals& g) {
  fs::path dir(g.plot_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kExitData, DL_IO, "cannot create " + g.plot_dir + ": " + ec.message()};
  return dir;
}

// ---- subcommands ----

struct GenerateArgs {
  std::string kind = "perturb", base = "agrawal", perturbation = "shift:5", mode = "complete";
  std::size_t n_features = 1, n = 1000, n_sensors = 6;
  std::vector<double> fault_times{0.5};
  std::vector<int> fault_sensors{0};
  double change_point = 0.5, static_share = 0.5;
  int agrawal_function = 1;
  std::string out, truth, time_col = "t";
};

int run_generate(const Globals& g, const GenerateArgs& a) {
  json req{{"kind", a.kind}, {"n", a.n}, {"seed", g.seed}};
  if (a.kind == "base" || a.kind == "perturb") {
    req["base"] = a.base;
    req["agrawal_function"] = a.agrawal_function;
  }
  if (a.kind == "perturb") {
    req["perturbation"] = a.perturbation;
    req["n_features"] = a.n_features;
  }
  if (a.kind == "bayes") req["mode"] = a.mode;
  if (a.kind == "sensor") {
    req["n_sensors"] = a.n_sensors;
    req["fault_times"] = a.fault_times;
    req["fault_sensors"] = a.fault_sensors;
  }
  if (a.kind == "two_cluster") {
    req["change_point"] = a.change_point;
    req["static_share"] = a.static_share;
  }
  DatasetHandle ds;
  char* truth = nullptr;
  check(dl_generate(req.dump().c_str(), ds.out(), &truth));
  json t = take(truth);
  check(dl_dataset_save_csv(ds.get(), a.out.c_str(), a.time_col.c_str()));
  if (!a.truth.empty()) {
    t["config"] = config_echo(g, "generate", req);
    write_json(a.truth, t);
  }
  return kExitOk;
}

struct PlanArgs {
  std::string input, time_col = "t", plan_path, out;
  json overrides = json::object();  // flag values that were given
};

// Base plan (file, if any) with flags on top; the global seed wins when given.
// `grouping_kind` ("localize" / "segment") replaces a grouping of the other kind
// with that kind's default.
json build_plan(const Globals& g, const PlanArgs& a, json base = json::object(), const std::string& grouping_kind = "") {
  if (!a.plan_path.empty()) base.merge_patch(read_config(a.plan_path));
  base.erase("input");
  base.erase("time_col");
  base.merge_patch(a.overrides);
  if (!grouping_kind.empty()) {
    const auto current = base.value("grouping", std::string());
    if (current.rfind(grouping_kind, 0) != 0) base["grouping"] = grouping_kind == "segment" ? "segment@poly:5" : "localize@0.5";
  }
  if (g.seed_given || !base.contains("seed")) base["seed"] = g.seed;
  return resolve_plan(base);
}

json args_echo(const PlanArgs& a, const json& plan) {
  return {{"input", a.input}, {"time_col", a.time_col}, {"plan", plan}};
}

int run_localize(Globals g, const PlanArgs& a) {
  const auto plan = build_plan(g, a, json::object(), "localize");
  g.seed = plan["seed"].get<std::uint64_t>();
  DatasetHandle ds;
  load_dataset(ds, a.input, a.time_col);
  char* out = nullptr;
  check(dl_localize(ds.get(), plan.dump().c_str(), &out));
  json report = take(out);
  report["config"] = config_echo(g, "localize", args_echo(a, plan));
  write_json(a.out, report);
  if (!g.plot_dir.empty()) plot_locus(plot_dir(g), report);
  return kExitOk;
}

int run_segment(Globals g, const PlanArgs& a) {
  const auto plan = build_plan(g, a, json::object(), "segment");
  g.seed = plan["seed"].get<std::uint64_t>();
  DatasetHandle ds;
  load_dataset(ds, a.input, a.time_col);
  char* out = nullptr;
  check(dl_segment(ds.get(), plan.dump().c_str(), &out));
  json seg = take(out);
  seg["config"] = config_echo(g, "segment", args_echo(a, plan));
  write_json(a.out, seg);
  if (!g.plot_dir.empty()) plot_segmentation(plot_dir(g), seg);
  return kExitOk;
}

int run_prototypes(Globals g, PlanArgs a, const std::string& grouping_path) {
  const json grouping = read_json(grouping_path);
  // Inherit the dataset and plan the grouping was computed with.
  json base = json::object();
  if (grouping.contains("config")) {
    const auto& args = grouping["config"]["args"];
    if (a.input.empty() && args.contains("input")) a.input = args["input"].get<std::string>();
    if (a.time_col == "t" && args.contains("time_col")) a.time_col = args["time_col"].get<std::string>();
    if (args.contains("plan")) base = args["plan"];
  }
  const auto plan = build_plan(g, a, base);
  g.seed = plan["seed"].get<std::uint64_t>();
  DatasetHandle ds;
  load_dataset(ds, a.input, a.time_col);
  json bare = grouping;
  bare.erase("config");
  char* out = nullptr;
  check(dl_prototypes(ds.get(), bare.dump().c_str(), plan.dump().c_str(), &out));
  json set = take(out);
  auto args = args_echo(a, plan);
  args["grouping"] = grouping_path;
  set["config"] = config_echo(g, "prototypes", args);
  write_json(a.out, set);
  if (!g.plot_dir.empty()) plot_prototypes(plot_dir(g), set);
  return kExitOk;
}

int run_explain(Globals g, PlanArgs a) {
  if (a.plan_path.empty()) usage_error("--plan is required");
  const json file = read_config(a.plan_path);
  if (a.input.empty() && file.contains("input")) {
    fs::path input = file["input"].get<std::string>();
    if (input.is_relative()) input = fs::path(a.plan_path).parent_path() / input;
    a.input = input.string();
  }
  if (a.time_col == "t" && file.contains("time_col")) a.time_col = file["time_col"].get<std::string>();
  const auto plan = build_plan(g, a);
  g.seed = plan["seed"].get<std::uint64_t>();
  DatasetHandle ds;
  load_dataset(ds, a.input, a.time_col);
  char* out = nullptr;
  const auto status = dl_explain(ds.get(), plan.dump().c_str(), &out);
  if (status != DL_OK && status != DL_PARTIAL_FAILURE) check(status);
  const std::string message = dl_last_error();
  json bundle = take(out);
  auto args = args_echo(a, plan);
  args["plan_file"] = a.plan_path;
  bundle["config"]["run"] = config_echo(g, "explain", args);
  write_json(a.out, bundle);
  if (!g.plot_dir.empty()) plot_bundle(plot_dir(g), bundle);
  if (status == DL_PARTIAL_FAILURE) throw Failure{kExitPartial, status, message};
  return kExitOk;
}

int run_eval(Globals g, const std::string& grid_path, const std::string& out, const std::string& summary_path) {
  json grid = read_config(grid_path);
  if (g.seed_given || !grid.contains("seed")) grid["seed"] = g.seed;
  if (g.deterministic) grid["deterministic"] = true;
  g.seed = grid["seed"].get<std::uint64_t>();
  char* result = nullptr;
  check(dl_eval(grid.dump().c_str(), out.empty() ? nullptr : out.c_str(), &result));
  json r = take(result);
  json summary = r["summary"];
  summary["config"] = config_echo(g, "eval", {{"grid", grid}, {"grid_file", grid_path}, {"out", out}});
  if (!summary_path.empty()) write_json(summary_path, summary);
  if (out.empty() && summary_path.empty()) write_json("-", r);
  if (!g.plot_dir.empty()) plot_summary(plot_dir(g), summary);
  std::size_t failures = summary["failures"].size();
  if (failures > 0) std::cerr << "driftlens: " << failures << " grid cell(s) failed; see the summary\n";
  return kExitOk;
}

void report(const Globals& g, const Failure& f) {
  if (g.json_errors) {
    std::cerr << json{{"error",
                       {{"status", dl_status_name(f.status)},
                        {"code", static_cast<int>(f.status)},
                        {"exit_code", f.exit_code},
                        {"message", f.message}}}}
                     .dump()
              << "\n";
  } else {
    std::cerr << "driftlens: " << (f.exit_code == kExitPartial ? "partial result: " : "error: ")
              << dl_status_name(f.status) << ": " << f.message << "\n";
  }
}

// Adds a flag whose value is recorded under overrides[section][key] when given.
template <class T>
CLI::Option* plan_flag(CLI::App* app, PlanArgs& a, const std::string& flag, const std::string& section,
                       const std::string& key, const std::string& help) {
  return app->add_option_function<T>(
      flag,
      [&a, section, key](const T& v) {
        if (section.empty()) {
          a.overrides[key] = v;
        } else {
          a.overrides[section][key] = v;
        }
      },
      help);
}

// "auto" or a number.
json auto_or_number(const std::string& v, const std::string& flag) {
  if (v == "auto") return "auto";
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  usage_error(flag + " expects a number or 'auto', got '" + v + "'");
}

void add_fit_flags(CLI::App* app, PlanArgs& a) {
  plan_flag<int>(app, a, "--n-trees", "fit", "n_trees", "trees per forest");
  plan_flag<int>(app, a, "--max-depth", "fit", "max_depth", "tree depth limit");
  plan_flag<int>(app, a, "--min-leaf", "fit", "min_leaf", "minimum samples per leaf");
}

void add_data_flags(CLI::App* app, PlanArgs& a, bool input_required) {
  auto* in = app->add_option("--input", a.input, "input CSV (header row, numeric cells)");
  if (input_required) in->required();
  app->add_option("--time-col", a.time_col, "name of the time column")->capture_default_str();
  app->add_option("--plan", a.plan_path, "plan file; flags override its values");
  app->add_flag_function(
      "--no-standardize", [&a](std::int64_t) { a.overrides["standardize"] = false; },
      "skip per-column standardization");
  app->add_option("--out", a.out, "output JSON path ('-' for stdout)")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlens: explain concept drift in timestamped tabular streams"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "root seed; identical invocations give identical outputs");
  app.add_option("--threads", g.threads, "worker cap (default: available parallelism)");
  app.add_flag("--deterministic", g.deterministic, "omit timestamps and runtimes from outputs");
  app.add_flag("--json-errors", g.json_errors, "print failures to stderr as JSON");
  app.add_option("--emit-plot-data", g.plot_dir, "directory for plot-ready CSV tables");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic stream CSV and its ground truth");
  generate->add_option("--kind", gen.kind, "base | perturb | bayes | sensor | two_cluster")->capture_default_str();
  generate->add_option("--base", gen.base, "agrawal | mixed | random_rbf | random_tree | gaussian_blobs")
      ->capture_default_str();
  generate->add_option("--perturbation", gen.perturbation, "zero | shift:<delta> | gaussian_noise | value_permutation")
      ->capture_default_str();
  generate->add_option("--n-features", gen.n_features, "features to perturb")->capture_default_str();
  generate->add_option("--n", gen.n, "samples")->capture_default_str();
  generate->add_option("--mode", gen.mode, "bayes net: complete | shallow")->capture_default_str();
  generate->add_option("--agrawal-function", gen.agrawal_function, "AGRAWAL label function (1-3)")
      ->capture_default_str();
  generate->add_option("--n-sensors", gen.n_sensors, "sensor streams")->capture_default_str();
  generate->add_option("--fault-times", gen.fault_times, "fault onsets in normalized time");
  generate->add_option("--fault-sensors", gen.fault_sensors, "faulty sensor per onset");
  generate->add_option("--change-point", gen.change_point, "two_cluster change point")->capture_default_str();
  generate->add_option("--static-share", gen.static_share, "two_cluster static share")->capture_default_str();
  generate->add_option("--time-col", gen.time_col, "time column name")->capture_default_str();
  generate->add_option("--out", gen.out, "stream CSV path")->required();
  generate->add_option("--truth", gen.truth, "ground-truth JSON path");

  PlanArgs loc;
  std::string change_point, theta;
  auto* localize = app.add_subcommand("localize", "find the drift locus around a change point");
  add_data_flags(localize, loc, false);
  localize->add_option("--change-point", change_point, "split time in (0, 1) or 'auto' (default 0.5)");
  plan_flag<int>(localize, loc, "--folds", "localize", "folds", "cross-fitting folds");
  localize->add_option("--theta", theta, "KL threshold or 'auto' (null quantile)");
  plan_flag<std::string>(localize, loc, "--classifier", "localize", "classifier", "forest | tree | linear");
  plan_flag<int>(localize, loc, "--n-null", "localize", "n_null", "label permutations for the null");
  plan_flag<double>(localize, loc, "--quantile", "localize", "quantile", "null quantile for theta");
  add_fit_flags(localize, loc);

  PlanArgs seg;
  std::string embedding, threshold;
  auto* segment = app.add_subcommand("segment", "partition the stream into drift segments");
  add_data_flags(segment, seg, false);
  segment->add_option("--embedding", embedding, "poly:<deg> | fourier:<deg>:<period> | binary:<cp> (default poly:5)");
  plan_flag<bool>(segment, seg, "--forest", "segment", "use_forest", "use a moment forest (true|false)");
  plan_flag<int>(segment, seg, "--bins", "segment", "bins", "time histogram bins");
  segment->add_option("--threshold", threshold, "TV threshold or 'auto'");
  plan_flag<int>(segment, seg, "--n-null", "segment", "n_null", "permutations for the null threshold");
  plan_flag<double>(segment, seg, "--quantile", "segment", "quantile", "null quantile");
  add_fit_flags(segment, seg);

  PlanArgs pro;
  std::string grouping_path;
  auto* prototypes = app.add_subcommand("prototypes", "summarize drifting groups by prototypes");
  add_data_flags(prototypes, pro, false);
  prototypes->add_option("--grouping", grouping_path, "locus or segmentation JSON")->required();
  plan_flag<int>(prototypes, pro, "--k", "prototypes", "k", "prototypes per group");
  plan_flag<std::string>(prototypes, pro, "--metric", "prototypes", "metric", "euclidean | geodesic | forest_kernel");
  plan_flag<double>(prototypes, pro, "--lambda", "prototypes", "lambda", "geodesic feature weight");
  plan_flag<int>(prototypes, pro, "--k-neighbors", "prototypes", "k_neighbors", "geodesic graph neighbours");

  PlanArgs exp;
  auto* explain = app.add_subcommand("explain", "run an explain plan and write the bundle");
  explain->add_option("--plan", exp.plan_path, "plan file")->required();
  explain->add_option("--input", exp.input, "input CSV (overrides the plan's input)");
  explain->add_option("--time-col", exp.time_col, "name of the time column")->capture_default_str();
  explain->add_option("--out", exp.out, "bundle JSON path ('-' for stdout)")->required();

  std::string grid_path, results_path, summary_path;
  auto* eval = app.add_subcommand("eval", "run a benchmark grid and score importances by AUC");
  eval->add_option("--grid", grid_path, "grid file")->required();
  eval->add_option("--out", results_path, "results CSV");
  eval->add_option("--summary", summary_path, "summary JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "driftlens: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  g.seed_given = app.count("--seed") > 0;
  try {
    check(dl_set_threads(g.threads));
    if (generate->parsed()) return run_generate(g, gen);
    if (localize->parsed()) {
      if (!change_point.empty()) {
        const auto cp = auto_or_number(change_point, "--change-point");
        loc.overrides["grouping"] = "localize@" + (cp.is_string() ? std::string("auto") : cp.dump());
      }
      if (!theta.empty()) loc.overrides["localize"]["theta"] = auto_or_number(theta, "--theta");
      return run_localize(g, loc);
    }
    if (segment->parsed()) {
      if (!embedding.empty()) seg.overrides["grouping"] = "segment@" + cli_embedding(embedding);
      if (!threshold.empty()) seg.overrides["segment"]["threshold"] = auto_or_number(threshold, "--threshold");
      return run_segment(g, seg);
    }
    if (prototypes->parsed()) return run_prototypes(g, pro, grouping_path);
    if (explain->parsed()) return run_explain(g, exp);
    if (eval->parsed()) return run_eval(g, grid_path, results_path, summary_path);
  } catch (const Failure& f) {
    report(g, f);
    return f.exit_code;
  } catch (const json::exception& e) {
    report(g, Failure{kExitData, DL_PARSE, e.what()});
    return kExitData;
  } catch (const std::exception& e) {
    report(g, Failure{kExitData, DL_INTERNAL, e.what()});
    return kExitData;
  }
  return kExitUsage;
}
