#include "driftlens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "driftlens/error.hpp"

namespace driftlens {

void to_json(nlohmann::json& j, const StandardizationParams& params) {
  j = nlohmann::json{{"mean", params.mean}, {"stddev", params.stddev}, {"constant", params.constant}};
}

void from_json(const nlohmann::json& j, StandardizationParams& params) {
  params.mean = j.at("mean").get<std::vector<double>>();
  params.stddev = j.at("stddev").get<std::vector<double>>();
  params.constant = j.at("constant").get<std::vector<bool>>();
}

Dataset::Dataset(std::vector<std::string> feature_names, std::vector<TimedSample> samples,
                 double time_origin, double time_scale)
    : feature_names_(std::move(feature_names)),
      samples_(std::move(samples)),
      time_origin_(time_origin),
      time_scale_(time_scale) {
  require(time_scale_ > 0.0 && std::isfinite(time_scale_), ErrorCode::kInvalidArgument,
          "time_scale must be positive");
  const std::size_t d = feature_names_.size();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    require(s.features.size() == d, ErrorCode::kDimensionMismatch,
            "sample " + std::to_string(i) + " has " + std::to_string(s.features.size()) +
                " features, expected " + std::to_string(d));
    require(std::isfinite(s.time) && s.time >= 0.0 && s.time <= 1.0, ErrorCode::kInvalidArgument,
            "sample " + std::to_string(i) + " time outside [0, 1]");
    for (double v : s.features) {
      require(std::isfinite(v), ErrorCode::kInvalidArgument,
              "sample " + std::to_string(i) + " has a non-finite feature");
    }
  }
  std::stable_sort(samples_.begin(), samples_.end(),
                   [](const TimedSample& a, const TimedSample& b) { return a.time < b.time; });
}

std::vector<double> Dataset::times() const {
  std::vector<double> out(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out[i] = samples_[i].time;
  return out;
}

std::vector<double> Dataset::column(std::size_t feature) const {
  require(feature < feature_count(), ErrorCode::kIndexOutOfRange, "feature index out of range");
  std::vector<double> out(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out[i] = samples_[i].features[feature];
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<TimedSample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < samples_.size(), ErrorCode::kIndexOutOfRange, "subset index out of range");
    picked.push_back(samples_[i]);
  }
  Dataset out(feature_names_, std::move(picked), time_origin_, time_scale_);
  out.standardization_ = standardization_;
  return out;
}

namespace {

// RFC-4180 record splitter: quoted fields, doubled quotes, CRLF or LF.
std::vector<std::vector<std::string>> parse_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  // Skip a UTF-8 byte-order mark.
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    i = 3;
  }
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    // Blank lines are ignored.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) fail(ErrorCode::kParse, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset from_raw_times(std::vector<std::string> feature_names,
                       std::vector<std::vector<double>> rows, std::span<const double> raw_times) {
  require(!rows.empty(), ErrorCode::kEmptyDataset, "dataset has no rows");
  require(rows.size() == raw_times.size(), ErrorCode::kDimensionMismatch,
          "row count and time count differ");
  const auto [lo_it, hi_it] = std::minmax_element(raw_times.begin(), raw_times.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  require(hi > lo, ErrorCode::kConstantTime, "all timestamps are equal");
  const double scale = hi - lo;
  std::vector<TimedSample> samples(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    samples[i].features = std::move(rows[i]);
    double t = (raw_times[i] - lo) / scale;
    samples[i].time = std::clamp(t, 0.0, 1.0);
  }
  return Dataset(std::move(feature_names), std::move(samples), lo, scale);
}

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
  auto records = parse_records(text);
  require(!records.empty(), ErrorCode::kEmptyDataset, "CSV has no header row");
  std::vector<std::string> header;
  for (const auto& h : records.front()) header.push_back(trim(h));
  const auto time_it = std::find(header.begin(), header.end(), options.time_column);
  require(time_it != header.end(), ErrorCode::kMissingColumn,
          "time column '" + options.time_column + "' not found");
  const std::size_t time_col = static_cast<std::size_t>(time_it - header.begin());
  require(records.size() > 1, ErrorCode::kEmptyDataset, "CSV has no data rows");

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != time_col) names.push_back(header[c]);
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> raw_times;
  rows.reserve(records.size() - 1);
  raw_times.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    require(rec.size() == header.size(), ErrorCode::kParse,
            "row " + std::to_string(r) + " has " + std::to_string(rec.size()) + " cells, expected " +
                std::to_string(header.size()));
    std::vector<double> row;
    row.reserve(names.size());
    double t = 0.0;
    for (std::size_t c = 0; c < rec.size(); ++c) {
      double value = 0.0;
      if (!parse_double(rec[c], value)) {
        fail(ErrorCode::kNonNumericCell, "non-numeric cell at row " + std::to_string(r) +
                                             ", column '" + header[c] + "'");
      }
      if (c == time_col) {
        t = value;
      } else {
        row.push_back(value);
      }
    }
    rows.push_back(std::move(row));
    raw_times.push_back(t);
  }
  Dataset ds = from_raw_times(std::move(names), std::move(rows), raw_times);
  if (options.standardize) ds = standardize(ds);
  return ds;
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), options);
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace

std::string to_csv(const Dataset& ds, const std::string& time_column) {
  std::string out;
  for (const auto& name : ds.feature_names()) {
    out += quote_if_needed(name);
    out += ',';
  }
  out += quote_if_needed(time_column);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) {
      out += format_double(v);
      out += ',';
    }
    out += format_double(ds.raw_time(i));
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& ds, const std::string& path, const std::string& time_column) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write '" + path + "'");
  out << to_csv(ds, time_column);
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path + "'");
}

StandardizationParams fit_standardization(const Dataset& ds) {
  require(!ds.empty(), ErrorCode::kEmptyDataset, "cannot standardize an empty dataset");
  const std::size_t d = ds.feature_count();
  const double n = static_cast<double>(ds.size());
  StandardizationParams params;
  params.mean.assign(d, 0.0);
  params.stddev.assign(d, 1.0);
  params.constant.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) sum += ds.row(i)[j];
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double diff = ds.row(i)[j] - mean;
      ss += diff * diff;
    }
    const double sd = std::sqrt(ss / n);
    params.mean[j] = mean;
    // Relative cutoff: a column whose spread is pure rounding noise is constant.
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      params.constant[j] = true;
      params.stddev[j] = 1.0;
    } else {
      params.stddev[j] = sd;
    }
  }
  return params;
}

Dataset apply_standardization(const Dataset& ds, const StandardizationParams& params) {
  require(params.size() == ds.feature_count(), ErrorCode::kDimensionMismatch,
          "standardization parameters do not match feature count");
  std::vector<TimedSample> samples = ds.samples();
  for (auto& s : samples) {
    for (std::size_t j = 0; j < s.features.size(); ++j) {
      s.features[j] = params.constant[j] ? 0.0 : (s.features[j] - params.mean[j]) / params.stddev[j];
    }
  }
  Dataset out(ds.feature_names(), std::move(samples), ds.time_origin(), ds.time_scale());
  out.set_standardization(params);
  return out;
}

Dataset standardize(const Dataset& ds) { return apply_standardization(ds, fit_standardization(ds)); }

std::pair<Dataset, Dataset> split_at(const Dataset& ds, double change_point) {
  require(change_point > 0.0 && change_point < 1.0, ErrorCode::kInvalidArgument,
          "change point must lie in (0, 1)");
  std::vector<std::size_t> before;
  std::vector<std::size_t> after;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (ds.time(i) < change_point ? before : after).push_back(i);
  }
  require(!before.empty() && !after.empty(), ErrorCode::kDegenerateSplit,
          "change point leaves one side empty");
  return {ds.subset(before), ds.subset(after)};
}

std::vector<double> uniform_time_grid(std::size_t n) {
  std::vector<double> grid(n, 0.0);
  if (n <= 1) return grid;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) grid[i] = static_cast<double>(i) / denom;
  return grid;
}

}  // namespace driftlens
