#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/embedding.hpp"
#include "driftlens/generators.hpp"
#include "driftlens/matrix.hpp"
#include "driftlens/model.hpp"
#include "json.hpp"

namespace driftlens {

// Probability that a random drifting feature outscores a random stable one,
// ties counted 1/2. Throws SingleClassTruth when either class is empty.
double feature_auc(std::span<const double> scores, const std::vector<bool>& truth);

// Windowed iPFI: refit a model on the trailing `window` samples every
// `refit_every` samples and feed the samples of that block to iPFI under it.
// Scoring therefore lags the stream by at most one block.
struct WindowedIpfiOptions {
  std::size_t window = 500;
  std::size_t refit_every = 100;
  // Empty selects fourier:5 with the period equal to the window.
  std::string embedding;
  std::string model = "tree";  // tree | forest | linear
  FitConfig fit;
  std::size_t capacity = 200;
  double gamma = 0.99;
  std::uint64_t seed = 0;
};

struct WindowedIpfiTrace {
  // Accumulators after every sample.
  Matrix trace;
  std::vector<double> final_scores;
  std::vector<double> stream_sums;
  // Per sample: end (exclusive) of the window of the model that scored it.
  std::vector<std::size_t> window_end;
  std::size_t refits = 0;
};

WindowedIpfiTrace windowed_ipfi(const Dataset& ds, const WindowedIpfiOptions& options);

// One regression model of the time embedding: tree | forest | linear.
TimeModel fit_time_regressor(const std::string& model, const Dataset& ds, const TimeEmbedding& emb,
                             const FitConfig& cfg);

struct GridSpec {
  // Base generator names, or bayes_complete / bayes_shallow.
  std::vector<std::string> generators{"agrawal", "mixed", "random_rbf", "random_tree"};
  std::vector<std::string> perturbations{"shift:5"};
  std::vector<std::size_t> feature_counts{1};
  std::vector<std::string> models{"forest"};
  std::vector<std::string> methods{"pfi"};  // pfi | model_fi | ipfi
  std::size_t repeats = 20;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string embedding = "fourier:5:1";
  FitConfig fit = default_fit();
  int pfi_repeats = 5;
  double holdout = 0.25;
  WindowedIpfiOptions ipfi{};
  bool deterministic = false;

  static FitConfig default_fit();
  void validate() const;
  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j);
};

struct EvalRecord {
  std::string generator;
  std::string perturbation;
  std::size_t k = 0;
  std::string model;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t repeat = 0;
  double auc = 0.0;  // NaN when the cell failed
  long long runtime_ms = 0;
  std::string error;

  bool ok() const { return error.empty(); }
  nlohmann::json to_json() const;
};

// The stream a grid cell evaluates, with its ground truth.
LabeledStream grid_stream(const std::string& generator, const std::string& perturbation, std::size_t k,
                          std::size_t n, std::uint64_t seed);

// Records in canonical order: generator, perturbation, k, model, repeat, method.
// Cell failures are recorded and the grid continues. Writes CSV when out_path
// is non-empty.
std::vector<EvalRecord> run_grid(const GridSpec& grid, const std::string& out_path = "");

std::string records_csv(const std::vector<EvalRecord>& records);
// Mean and std per cell, per cell pooled over generators, and failures.
nlohmann::json summarize(const std::vector<EvalRecord>& records);

}  // namespace driftlens
