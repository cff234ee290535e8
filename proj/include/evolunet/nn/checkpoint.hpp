#pragma once

// Checkpoint text format, one parameter per line:
//   <name> <rows> <cols> <v_0> ... <v_{rows*cols-1}>
// Values are row-major with 17 significant digits, so a round trip is exact.

#include "evolunet/kv.hpp"
#include "evolunet/nn/tensor.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace evolunet::nn {

using NamedMatrices = std::map<std::string, Matrix>;

inline void write_checkpoint(std::ostream& out, const NamedMatrices& params) {
  for (const auto& [name, m] : params) {
    out << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << ' ' << format_real(m(r, c));
    out << '\n';
  }
}

inline NamedMatrices read_checkpoint(std::istream& in) {
  NamedMatrices out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    std::string name, tok;
    long long rows = 0, cols = 0;
    if (!(ss >> name >> rows >> cols) || rows < 0 || cols < 0)
      throw ParseError(lineno, "expected '<name> <rows> <cols> <values...>'");
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      if (!(ss >> tok))
        throw ParseError(lineno, name + ": expected " + std::to_string(m.size()) + " values, got " + std::to_string(k));
      m(k / cols, k % cols) = parse_real(tok, lineno);
    }
    if (ss >> tok) throw ParseError(lineno, name + ": trailing values");
    if (!out.emplace(name, std::move(m)).second) throw ParseError(lineno, "duplicate parameter '" + name + "'");
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const NamedMatrices& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_checkpoint(out, params);
}

inline NamedMatrices load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace evolunet::nn
