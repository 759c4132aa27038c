#pragma once

// Minimal CSV reading and writing for the tool's fixed-schema files: comma
// separated, one header line, no quoting. Doubles are written in the
// shortest form that round-trips.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "reconf/errors.hpp"

namespace reconf::csv {

inline std::string_view trim(std::string_view s) noexcept {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Parses a whole field as a double; throws InputError naming `where`.
inline double parse_double(std::string_view tok, const std::string& where) {
  double v = 0.0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) {
    throw InputError(where + ": '" + std::string(tok) + "' is not a number");
  }
  return v;
}

/// Rows of a CSV whose header must equal `columns`. Blank lines are skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers; ///< 1-based source line of each row
  std::string source;

  std::string where(std::size_t row) const {
    return source + " line " + std::to_string(line_numbers[row]);
  }
  double number(std::size_t row, std::size_t col) const {
    return parse_double(rows[row][col], where(row));
  }
};

inline Table read_table(std::istream& in, const std::string& source,
                        const std::vector<std::string>& columns) {
  Table t;
  t.source = source;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (lineno == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
    if (trim(view).empty()) continue;
    std::vector<std::string> fields = split(view);
    if (!have_header) {
      if (fields != columns) {
        std::string want;
        for (const std::string& c : columns) want += (want.empty() ? "" : ",") + c;
        throw InputError(source + " line " + std::to_string(lineno) + ": expected header '" +
                         want + "'");
      }
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != columns.size()) {
      throw InputError(source + " line " + std::to_string(lineno) + ": expected " +
                       std::to_string(columns.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw InputError(source + ": empty file");
  return t;
}

inline Table read_file(const std::string& path, const std::vector<std::string>& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_table(in, path, columns);
}

/// Row builder: `Row() << 1.5 << "x"` joins fields with commas.
class Row {
public:
  Row& operator<<(double x) { return add(format_double(x)); }
  Row& operator<<(int x) { return add(std::to_string(x)); }
  Row& operator<<(std::size_t x) { return add(std::to_string(x)); }
  Row& operator<<(std::string_view s) { return add(std::string(s)); }
  Row& operator<<(const char* s) { return add(std::string(s)); }
  const std::string& str() const noexcept { return line_; }

private:
  Row& add(std::string s) {
    if (!first_) line_ += ',';
    line_ += s;
    first_ = false;
    return *this;
  }
  std::string line_;
  bool first_ = true;
};

inline std::ostream& operator<<(std::ostream& os, const Row& r) { return os << r.str() << '\n'; }

/// Writes `content` to `path`, throwing InputError if the file cannot be written.
inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out << content;
  if (!out) throw InputError("write failed for " + path);
}

} // namespace reconf::csv
