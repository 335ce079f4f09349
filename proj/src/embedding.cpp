#include "driftlens/embedding.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "driftlens/error.hpp"

namespace driftlens {

TimeEmbedding TimeEmbedding::binary(double change_point) {
  TimeEmbedding e;
  e.kind = Kind::kBinary;
  e.change_point = change_point;
  e.validate();
  return e;
}

TimeEmbedding TimeEmbedding::polynomial(int degree) {
  TimeEmbedding e;
  e.kind = Kind::kPolynomial;
  e.degree = degree;
  e.validate();
  return e;
}

TimeEmbedding TimeEmbedding::fourier(int degree, double period) {
  TimeEmbedding e;
  e.kind = Kind::kFourier;
  e.degree = degree;
  e.period = period;
  e.validate();
  return e;
}

void TimeEmbedding::validate() const {
  switch (kind) {
    case Kind::kBinary:
      require(std::isfinite(change_point), ErrorCode::kInvalidArgument, "binary change point must be finite");
      break;
    case Kind::kPolynomial:
      require(degree >= 1, ErrorCode::kInvalidArgument, "polynomial degree must be >= 1");
      break;
    case Kind::kFourier:
      require(degree >= 1, ErrorCode::kInvalidArgument, "fourier degree must be >= 1");
      require(period > 0.0 && std::isfinite(period), ErrorCode::kInvalidArgument,
              "fourier period must be positive");
      break;
  }
}

std::size_t TimeEmbedding::output_size() const {
  switch (kind) {
    case Kind::kBinary:
      return 1;
    case Kind::kPolynomial:
      return static_cast<std::size_t>(degree);
    case Kind::kFourier:
      return 2 * static_cast<std::size_t>(degree);
  }
  return 0;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

double to_number(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kParse, "bad number '" + s + "' in embedding '" + context + "'");
  }
}

}  // namespace

TimeEmbedding TimeEmbedding::parse(const std::string& text, std::size_t n_samples) {
  const auto parts = split(text, ':');
  require(!parts.empty(), ErrorCode::kParse, "empty embedding spec");
  const std::string& kind = parts[0];
  if (kind == "binary" && parts.size() == 2) return binary(to_number(parts[1], text));
  if ((kind == "poly" || kind == "polynomial") && parts.size() == 2) {
    return polynomial(static_cast<int>(to_number(parts[1], text)));
  }
  if (kind == "fourier" && (parts.size() == 2 || parts.size() == 3)) {
    const int degree = static_cast<int>(to_number(parts[1], text));
    double period = 1.0;
    if (parts.size() == 3) {
      std::string p = parts[2];
      const bool samples = !p.empty() && p.back() == 's';
      if (samples) p.pop_back();
      period = to_number(p, text);
      if (samples) {
        require(n_samples >= 2, ErrorCode::kInvalidArgument,
                "sample-count period needs the stream length");
        period /= static_cast<double>(n_samples - 1);
      }
    }
    return fourier(degree, period);
  }
  fail(ErrorCode::kParse, "unrecognized embedding '" + text + "'");
}

std::string TimeEmbedding::to_string() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind) {
    case Kind::kBinary:
      out << "binary:" << change_point;
      break;
    case Kind::kPolynomial:
      out << "poly:" << degree;
      break;
    case Kind::kFourier:
      out << "fourier:" << degree << ':' << period;
      break;
  }
  return out.str();
}

void embed_time_into(double t, const TimeEmbedding& embedding, std::span<double> out) {
  switch (embedding.kind) {
    case TimeEmbedding::Kind::kBinary:
      out[0] = t >= embedding.change_point ? 1.0 : 0.0;
      return;
    case TimeEmbedding::Kind::kPolynomial: {
      double power = t;
      for (int k = 0; k < embedding.degree; ++k) {
        out[static_cast<std::size_t>(k)] = power;
        power *= t;
      }
      return;
    }
    case TimeEmbedding::Kind::kFourier: {
      const double base = 2.0 * std::numbers::pi * t / embedding.period;
      for (int k = 1; k <= embedding.degree; ++k) {
        const std::size_t slot = 2 * static_cast<std::size_t>(k - 1);
        out[slot] = std::sin(base * k);
        out[slot + 1] = std::cos(base * k);
      }
      return;
    }
  }
}

std::vector<double> embed_time(double t, const TimeEmbedding& embedding) {
  std::vector<double> out(embedding.output_size());
  embed_time_into(t, embedding, out);
  return out;
}

void to_json(nlohmann::json& j, const TimeEmbedding& embedding) {
  switch (embedding.kind) {
    case TimeEmbedding::Kind::kBinary:
      j = {{"kind", "binary"}, {"change_point", embedding.change_point}};
      break;
    case TimeEmbedding::Kind::kPolynomial:
      j = {{"kind", "polynomial"}, {"degree", embedding.degree}};
      break;
    case TimeEmbedding::Kind::kFourier:
      j = {{"kind", "fourier"}, {"degree", embedding.degree}, {"period", embedding.period}};
      break;
  }
}

void from_json(const nlohmann::json& j, TimeEmbedding& embedding) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "binary") {
    embedding = TimeEmbedding::binary(j.at("change_point").get<double>());
  } else if (kind == "polynomial") {
    embedding = TimeEmbedding::polynomial(j.at("degree").get<int>());
  } else if (kind == "fourier") {
    embedding = TimeEmbedding::fourier(j.at("degree").get<int>(), j.at("period").get<double>());
  } else {
    fail(ErrorCode::kUnknownKind, "unknown embedding kind '" + kind + "'");
  }
}

}  // namespace driftlens
