#ifndef VARIREG_CSV_HPP
#define VARIREG_CSV_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"

namespace varireg::csv {

/// Malformed input; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // source line of each row
};

inline std::vector<std::string> split_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote", lineno);
  out.push_back(std::move(cur));
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline Table parse(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_line(line, lineno);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError("missing header row", 1);
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse(in);
}

inline double to_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw ParseError("not a finite number: '" + s + "'", lineno);
  return v;
}

inline std::size_t column(const Table& t, const std::string& name) {
  for (std::size_t k = 0; k < t.header.size(); ++k)
    if (t.header[k] == name) return k;
  throw ParseError("missing column '" + name + "'", 1);
}

// ---------------------------------------------------------------------------
// Curve samples

/// t_original = offset + scale * t_unit
struct TimeTransform {
  double offset = 0.0;
  double scale = 1.0;
};

struct CurveSet {
  std::vector<std::string> ids;
  std::vector<DiscreteCurve> curves;
  std::optional<TimeTransform> transform;
  bool long_format = false;
};

namespace detail {

inline CurveSet build(std::vector<std::string> ids, std::vector<std::vector<double>> ts,
                      std::vector<std::vector<double>> vs, std::vector<std::size_t> first_line) {
  CurveSet set;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& t : ts)
    for (double x : t) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (lo < 0.0 || hi > 1.0) {
    if (!(hi > lo)) throw ParseError("time values span an empty interval");
    set.transform = TimeTransform{lo, hi - lo};
    for (auto& t : ts)
      for (double& x : t) x = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    try {
      set.curves.emplace_back(std::move(ts[i]), std::move(vs[i]));
    } catch (const Error& e) {
      throw ParseError("curve '" + ids[i] + "': " + e.what(), first_line[i]);
    }
  }
  set.ids = std::move(ids);
  return set;
}

}  // namespace detail

/// Wide layout: first column t, then one column per curve on the shared grid.
inline CurveSet read_wide(const Table& tab) {
  if (tab.header.size() < 2) throw ParseError("wide format needs a time column and at least one curve", 1);
  const std::size_t n = tab.header.size() - 1;
  if (tab.rows.empty()) throw ParseError("no data rows", 1);
  std::vector<double> t;
  std::vector<std::vector<double>> vs(n);
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    t.push_back(to_double(row[0], tab.lines[r]));
    if (r > 0 && !(t[r] > t[r - 1])) throw ParseError("time column must be strictly increasing", tab.lines[r]);
    for (std::size_t i = 0; i < n; ++i) vs[i].push_back(to_double(row[i + 1], tab.lines[r]));
  }
  std::vector<std::string> ids(tab.header.begin() + 1, tab.header.end());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (ids[i] == ids[j]) throw ParseError("duplicate curve id '" + ids[i] + "'", 1);
  std::vector<std::vector<double>> ts(n, t);
  return detail::build(std::move(ids), std::move(ts), std::move(vs), std::vector<std::size_t>(n, tab.lines[0]));
}

/// Long layout: rows (curve_id, t, value); each curve may have its own grid.
/// Curves keep the order of first appearance; rows are sorted by t per curve.
inline CurveSet read_long(const Table& tab, const std::string& value_col = "value") {
  const std::size_t ci = column(tab, "curve_id"), ti = column(tab, "t"), vi = column(tab, value_col);
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<double, double>>> pts;
  std::vector<std::vector<std::size_t>> lines;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    if (row[ci].empty()) throw ParseError("empty curve_id", tab.lines[r]);
    auto [it, fresh] = index.try_emplace(row[ci], ids.size());
    if (fresh) {
      ids.push_back(row[ci]);
      pts.emplace_back();
      lines.emplace_back();
    }
    pts[it->second].emplace_back(to_double(row[ti], tab.lines[r]), to_double(row[vi], tab.lines[r]));
    lines[it->second].push_back(tab.lines[r]);
  }
  if (ids.empty()) throw ParseError("no data rows", 1);
  std::vector<std::vector<double>> ts(ids.size()), vs(ids.size());
  std::vector<std::size_t> first(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::size_t> order(pts[i].size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pts[i][a].first < pts[i][b].first; });
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0 && pts[i][order[k]].first == pts[i][order[k - 1]].first)
        throw ParseError("duplicate time for curve '" + ids[i] + "'", lines[i][order[k]]);
      ts[i].push_back(pts[i][order[k]].first);
      vs[i].push_back(pts[i][order[k]].second);
    }
    first[i] = lines[i].front();
  }
  auto set = detail::build(std::move(ids), std::move(ts), std::move(vs), std::move(first));
  set.long_format = true;
  return set;
}

/// Long layout when the header starts with curve_id, wide layout otherwise.
inline CurveSet read_curves(const Table& tab) {
  if (!tab.header.empty() && tab.header[0] == "curve_id") return read_long(tab);
  return read_wide(tab);
}

inline CurveSet read_curves(const std::string& path) { return read_curves(read_file(path)); }

// ---------------------------------------------------------------------------
// Writing

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path);
  }
  Writer& header(std::initializer_list<std::string> cols) { return row_strings(std::vector<std::string>(cols)); }
  Writer& row_strings(const std::vector<std::string>& cols) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (k) out_ << ',';
      out_ << quote(cols[k]);
    }
    out_ << '\n';
    return *this;
  }
  template <class... Cells>
  Writer& row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
    return *this;
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(const std::string& s) { return quote(s); }
  static std::string cell(const char* s) { return quote(s); }
  static std::string cell(std::size_t k) { return std::to_string(k); }

  std::ofstream out_;
};

}  // namespace varireg::csv

#endif  // VARIREG_CSV_HPP
