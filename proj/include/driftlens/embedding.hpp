#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace driftlens {

// Maps a normalized time to regression targets.
//   Binary(cp)        -> [1{t >= cp}]
//   Polynomial(d)     -> [t, t^2, ..., t^d]
//   Fourier(d, P)     -> [sin(2 pi k t / P), cos(2 pi k t / P)] for k = 1..d
struct TimeEmbedding {
  enum class Kind { kBinary, kPolynomial, kFourier };

  Kind kind = Kind::kPolynomial;
  double change_point = 0.5;
  int degree = 1;
  double period = 1.0;

  static TimeEmbedding binary(double change_point);
  static TimeEmbedding polynomial(int degree);
  static TimeEmbedding fourier(int degree, double period);

  // "binary:0.5", "poly:5", "fourier:5:0.25". A Fourier period given with an
  // "s" suffix ("fourier:5:500s") is a sample count and is converted with
  // `n_samples` (period = count / (n_samples - 1)).
  static TimeEmbedding parse(const std::string& text, std::size_t n_samples = 0);

  std::size_t output_size() const;
  std::string to_string() const;
  void validate() const;

  bool operator==(const TimeEmbedding&) const = default;
};

std::vector<double> embed_time(double t, const TimeEmbedding& embedding);
void embed_time_into(double t, const TimeEmbedding& embedding, std::span<double> out);

void to_json(nlohmann::json& j, const TimeEmbedding& embedding);
void from_json(const nlohmann::json& j, TimeEmbedding& embedding);

}  // namespace driftlens
