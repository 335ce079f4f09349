#include "doctest.h"
#include "driftlens/config.hpp"
#include "driftlens/error.hpp"
#include "helpers.hpp"

using namespace driftlens;

namespace {

ErrorCode code_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("scalars, sections and comments") {
  const auto j = parse_config(R"(# top
name = "grid one"   # trailing comment
n = 1000
rate = 0.25
small = -1e-3
on = true
off = false

[fit]
n_trees = 50
[ipfi.window]
size = 500
)");
  CHECK(j["name"] == "grid one");
  CHECK(j["n"] == 1000);
  CHECK(j["n"].is_number_integer());
  CHECK(j["rate"] == 0.25);
  CHECK(j["small"] == -1e-3);
  CHECK(j["on"] == true);
  CHECK(j["off"] == false);
  CHECK(j["fit"]["n_trees"] == 50);
  CHECK(j["ipfi"]["window"]["size"] == 500);
}

TEST_CASE("arrays and escapes") {
  const auto j = parse_config(R"(gens = ["agrawal", "mixed",]
ks = [1, 2, 5]
empty = []
nested = [[1, 2], [3]]
quote = "a \"b\" \\ c"
)");
  CHECK(j["gens"] == nlohmann::json({"agrawal", "mixed"}));
  CHECK(j["ks"] == nlohmann::json({1, 2, 5}));
  CHECK(j["empty"].empty());
  CHECK(j["nested"][0][1] == 2);
  CHECK(j["quote"] == "a \"b\" \\ c");
}

TEST_CASE("CRLF input parses") {
  CHECK(parse_config("a = 1\r\n[s]\r\nb = 2\r\n")["s"]["b"] == 2);
}

TEST_CASE("malformed input names the line") {
  CHECK(code_of("a = 1\nb 2\n") == ErrorCode::kParse);
  CHECK(message_of("a = 1\nb 2\n").find("line 2") != std::string::npos);
  CHECK(code_of("a = bare\n") == ErrorCode::kParse);
  CHECK(code_of("a = \"open\n") == ErrorCode::kParse);
  CHECK(code_of("a = [1, 2\n") == ErrorCode::kParse);
  CHECK(code_of("a = 1 2\n") == ErrorCode::kParse);
  CHECK(code_of("[sec\n") == ErrorCode::kParse);
  CHECK(code_of("a = 1\na = 2\n") == ErrorCode::kParse);
  CHECK(code_of("a = 1\n[a]\n") == ErrorCode::kParse);
  CHECK(code_of("a = \"\\q\"\n") == ErrorCode::kParse);
}

TEST_CASE("load_config reads files and reports missing ones") {
  testing::TempDir dir;
  const auto path = dir.file("plan.toml");
  testing::write_text(path, "seed = 3\n");
  CHECK(load_config(path)["seed"] == 3);
  try {
    load_config(dir.file("missing.toml"));
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("a JSON object is read as JSON") {
  const auto j = parse_config("  {\"seed\": 4, \"fit\": {\"n_trees\": 7}}\n");
  CHECK(j["seed"] == 4);
  CHECK(j["fit"]["n_trees"] == 7);
  CHECK(code_of("{\"seed\": }") == ErrorCode::kParse);
}
