#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace melc {

// Minimal comma-delimited tables. Fields must not contain commas or newlines;
// quoting is not supported. Lines starting with '#' are treated as comments.

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int >(i);
    return -1;
  }
  int require_column(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw std::runtime_error("missing column: " + name);
    return c;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string line;
  for (size_t i = 0; i < fields.size(); ++i) {
    const std::string& f = fields[i];
    if (f.find(',') != std::string::npos || f.find('\n') != std::string::npos)
      throw std::runtime_error("csv field contains a delimiter: " + f);
    if (i) line.push_back(',');
    line += f;
  }
  return line;
}

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw std::runtime_error("empty table: no header row");
  return t;
}

inline Table read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return read_table(in);
}

inline void write_table(std::ostream& out, const Table& t,
                        const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) out << "# " << c << "\n";
  out << join_csv(t.header) << "\n";
  for (const auto& row : t.rows) out << join_csv(row) << "\n";
}

inline void write_table_file(const std::string& path, const Table& t,
                             const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_table(out, t, comments);
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Shortest decimal representation that round-trips; stable across runs.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, bool& ok) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  double v = 0.0;
  auto res = std::from_chars(begin, end, v);
  ok = res.ec == std::errc() && res.ptr == end;
  return v;
}

inline long parse_long(const std::string& s, bool& ok) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = res.ec == std::errc() && res.ptr == s.data() + s.size();
  return v;
}

}  // namespace melc
