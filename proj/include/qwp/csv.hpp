#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qwp/error.hpp"

namespace qwp::csv {

// 17 significant digits with a '.' decimal point, independent of the C locale.
inline std::string format(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("malformed number '" + std::string(s) + "'");
  return x;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string to_string(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.header.size(); ++c) out += (c ? "," : "") + t.header[c];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) out += ',';
      out += format(r[c]);
    }
    out += '\n';
  }
  return out;
}

inline Table from_string(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (first) {
      for (auto c : cells) {
        while (!c.empty() && c.front() == ' ') c.remove_prefix(1);
        t.header.emplace_back(c);
      }
      first = false;
      continue;
    }
    if (cells.size() != t.header.size()) throw ValidationError("CSV row width does not match header");
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(parse(c));
    t.rows.push_back(std::move(row));
  }
  if (first) throw ValidationError("CSV header row missing");
  return t;
}

inline void write_file(const std::string& path, const Table& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << to_string(t);
  if (!f) throw ValidationError("cannot write '" + path + "'");
}

inline Table read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

}  // namespace qwp::csv
