#pragma once

// Flat key-value text with optional [section] headers:
//
//   # comment
//   [section]
//   key = value

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolunet {

/// Error carrying the 1-based line number of malformed input.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct KvEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<KvEntry> parse_kv(std::istream& in) {
  std::vector<KvEntry> out;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  std::string section, raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ParseError(line, "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value', got '" + s + "'");
    KvEntry e{section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) throw ParseError(line, "empty key");
    if (!seen.emplace(std::pair{e.section, e.key}, line).second)
      throw ParseError(line, "duplicate key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<KvEntry> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_kv(in);
}

/// Shortest decimal text that round-trips a double exactly.
inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_real(const std::string& s, std::size_t line = 0) {
  const std::string t = trim(s);
  if (t.empty()) throw ParseError(line, "expected a number, got empty text");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw ParseError(line, "expected a number, got '" + t + "'");
  return v;
}

inline long long parse_integer(const std::string& s, std::size_t line = 0) {
  const std::string t = trim(s);
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) throw ParseError(line, "expected an integer, got '" + t + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<double> parse_real_list(const std::string& s, std::size_t line = 0) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) out.push_back(parse_real(item, line));
  return out;
}

template <typename Seq>
std::string join_reals(const Seq& xs, const char* sep = ", ") {
  std::string out;
  bool first = true;
  for (double x : xs) {
    if (!first) out += sep;
    out += format_real(x);
    first = false;
  }
  return out;
}

}  // namespace evolunet
