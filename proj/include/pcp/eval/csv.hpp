#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcp/common/errors.hpp"

namespace pcp::eval {

// Plain comma-separated table with a header row. Fields never contain commas.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError("table has no column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
  double number(std::size_t row, const std::string& col) const;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
  if (pos != s.size()) throw DataError(where + ": '" + s + "' is not a number");
  return v;
}

inline double Table::number(std::size_t row, const std::string& col) const {
  return parse_number(rows.at(row).at(column(col)), col + " row " + std::to_string(row + 1));
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw DataError(path + ": empty file");
  t.header = split_line(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto f = split_line(line);
    if (f.size() != t.header.size()) {
      throw DataError(path + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(f));
  }
  return t;
}

inline void write_csv(const Table& t, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write " + path);
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) o << (i ? "," : "") << f[i];
    o << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  if (!o) throw DataError("write failed for " + path);
}

// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  const std::string full = s.str();
  for (int p = 6; p < 17; ++p) {
    std::ostringstream t;
    t.precision(p);
    t << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return full;
}

}  // namespace pcp::eval
