#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "driftlens/dataset.hpp"
#include "driftlens/random.hpp"

namespace driftlens::testing {

// Rows of features with explicit normalized times.
inline Dataset make_dataset(const std::vector<std::vector<double>>& rows, const std::vector<double>& times) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < (rows.empty() ? 0 : rows.front().size()); ++j) {
    names.push_back("x" + std::to_string(j));
  }
  std::vector<TimedSample> samples;
  for (std::size_t i = 0; i < rows.size(); ++i) samples.push_back({rows[i], times[i]});
  return Dataset(names, samples);
}

// n samples, d iid N(0,1) features, uniform time grid (no drift).
inline Dataset null_stream(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& row : rows) {
    for (auto& v : row) v = rng.normal();
  }
  return make_dataset(rows, grid);
}

class TempDir {
 public:
  TempDir() {
    char pattern[] = "/tmp/driftlens-test-XXXXXX";
    path_ = mkdtemp(pattern);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace driftlens::testing
