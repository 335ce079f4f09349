#include "driftlens/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "driftlens/error.hpp"

namespace driftlens {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::kParse, "config line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_space();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ == start) error("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= s_.size() || s_[pos_] != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool at(char c) const { return pos_ < s_.size() && s_[pos_] == c; }
  void advance() { ++pos_; }

  nlohmann::json value() {
    skip_space();
    if (pos_ >= s_.size()) error("missing value");
    const char c = s_[pos_];
    if (c == '"') return string_value();
    if (c == '[') return array_value();
    if (s_.compare(pos_, 4, "true") == 0 && !ident_char(pos_ + 4)) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0 && !ident_char(pos_ + 5)) {
      pos_ += 5;
      return false;
    }
    return number_value();
  }

 private:
  bool ident_char(std::size_t i) const {
    return i < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i])) || s_[i] == '_');
  }

  nlohmann::json string_value() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) error("dangling escape");
        const char e = s_[pos_++];
        switch (e) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: error(std::string("unknown escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) error("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json array_value() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) error("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      error("expected ',' or ']' in array");
    }
  }

  nlohmann::json number_value() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token(s_.substr(start, pos_ - start));
    if (token.empty()) error("expected a value");
    if (token.find_first_of(".eE") == std::string::npos || token == "inf" || token == "-inf") {
      long long v = 0;
      const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec == std::errc() && p == token.data() + token.size()) return v;
    }
    // Reals (from_chars for doubles is missing on older libstdc++).
    try {
      std::size_t used = 0;
      const double d = std::stod(token, &used);
      if (used == token.size()) return d;
    } catch (const std::logic_error&) {
    }
    error("bad value '" + token + "' (strings need quotes)");
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

nlohmann::json& section_at(nlohmann::json& root, const std::string& dotted, const LineParser& p) {
  nlohmann::json* at = &root;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) p.error("empty section name");
    auto& next = (*at)[part];
    if (next.is_null()) next = nlohmann::json::object();
    if (!next.is_object()) p.error("section '" + dotted + "' clashes with a value");
    at = &next;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *at;
}

}  // namespace

nlohmann::json parse_config(const std::string& text) {
  // A JSON object is accepted as is.
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      auto j = nlohmann::json::parse(text);
      require(j.is_object(), ErrorCode::kParse, "config must be an object");
      return j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, std::string("bad JSON config: ") + e.what());
    }
  }
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* section = &root;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    LineParser p(line, number);
    if (p.at_end_or_comment()) continue;
    if (p.at('[')) {
      p.advance();
      const std::string name = p.key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.error("trailing characters after section header");
      section = &section_at(root, name, p);
      continue;
    }
    const std::string key = p.key();
    p.expect('=');
    auto value = p.value();
    if (!p.at_end_or_comment()) p.error("trailing characters after value");
    if (section->contains(key)) p.error("duplicate key '" + key + "'");
    (*section)[key] = std::move(value);
  }
  return root;
}

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace driftlens
