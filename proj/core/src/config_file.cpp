// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/config_file.hpp"

#include <cctype>
#include <cmath>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "edgeear/error.hpp"

namespace edgeear {

namespace {

class TomlParser {
 public:
  TomlParser(std::string_view text, std::string source) : s_(text), source_(std::move(source)) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::string table_name;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        if (!eof() && peek() == '[') fail("arrays of tables are not supported");
        std::string name = key();
        skip_ws();
        if (!eof() && peek() == '.') fail("nested tables are not supported");
        expect(']');
        if (root.contains(name)) fail("duplicate table [" + name + "]");
        root[name] = nlohmann::json::object();
        table = &root[name];
        table_name = name;
      } else {
        std::string k = key();
        skip_ws();
        if (!eof() && peek() == '.') fail("dotted keys are not supported");
        expect('=');
        skip_ws();
        nlohmann::json v = value();
        if (table->contains(k)) fail("duplicate key '" + (table_name.empty() ? k : table_name + "." + k) + "'");
        (*table)[k] = std::move(v);
      }
      end_of_line();
    }
    return root;
  }

 private:
  std::string_view s_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + why);
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  void expect(char c) {
    skip_ws();
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (!eof() && peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void newline() {
    if (!eof() && peek() == '\r') ++pos_;
    if (!eof() && peek() == '\n') {
      ++pos_;
      ++line_;
    }
  }
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (eof()) return;
      if (peek() == '\n' || peek() == '\r') {
        newline();
      } else {
        return;
      }
    }
  }
  // Blank space, comments and newlines inside arrays.
  void skip_array_space() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (!eof() && (peek() == '\n' || peek() == '\r')) {
        newline();
      } else {
        return;
      }
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n' && peek() != '\r') fail("unexpected text after value");
    newline();
  }

  std::string key() {
    skip_ws();
    if (eof()) fail("expected a key");
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      c = s_[pos_++];
      switch (c) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + c);
      }
    }
  }

  std::string literal_string() {
    ++pos_;
    const std::size_t start = pos_;
    while (!eof() && peek() != '\'' && peek() != '\n') ++pos_;
    if (eof() || peek() != '\'') fail("unterminated string");
    return std::string(s_.substr(start, pos_++ - start));
  }

  nlohmann::json value() {
    if (eof()) fail("expected a value");
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') fail("inline tables are not supported");
    const std::size_t start = pos_;
    while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' &&
           peek() != '#')
      ++pos_;
    std::string tok(s_.substr(start, pos_ - start));
    if (tok.empty()) fail("expected a value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    return number(tok);
  }

  nlohmann::json number(std::string tok) {
    const std::string raw = tok;
    std::string clean;
    for (std::size_t i = 0; i < tok.size(); ++i) {
      if (tok[i] != '_') {
        clean += tok[i];
        continue;
      }
      if (i == 0 || i + 1 == tok.size() || !std::isdigit(static_cast<unsigned char>(tok[i - 1])) ||
          !std::isdigit(static_cast<unsigned char>(tok[i + 1])))
        fail("bad number '" + raw + "'");
    }
    std::string body = clean;
    double sign = 1.0;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      sign = body[0] == '-' ? -1.0 : 1.0;
      body = body.substr(1);
    }
    if (body == "inf") return sign * std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    if (body.empty() || !std::isdigit(static_cast<unsigned char>(body[0]))) fail("bad value '" + raw + "'");
    char* end = nullptr;
    if (is_float) {
      const double d = std::strtod(clean.c_str(), &end);
      if (*end != '\0') fail("bad number '" + raw + "'");
      return d;
    }
    if (body.size() > 1 && body[0] == '0') fail("leading zeros in '" + raw + "'");
    errno = 0;
    const long long v = std::strtoll(clean.c_str(), &end, 10);
    if (*end != '\0' || errno == ERANGE) fail("bad integer '" + raw + "'");
    return v;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_array_space();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_array_space();
      if (eof()) fail("unterminated array");
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }
};

}  // namespace

nlohmann::json parse_toml(std::string_view text, const std::string& source) {
  return TomlParser(text, source).parse();
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_toml(text, path.string());
}

}  // namespace edgeear
