#pragma once

// Field snapshot CSV:
//
//   # grid: <kind>,<N>,<h>,<R>
//   x_or_r, re, im
//   ...
//
// Numbers are written with 17 significant digits so that load(save(f))
// reproduces every sample bit for bit.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/field.hpp"

namespace qsl::io {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view text, const std::string& context) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw PreconditionError("cannot parse number '" + std::string(text) + "' in " + context);
  return value;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      parts.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

template <FieldScalar T>
void write_snapshot(std::ostream& out, const BasicField<T>& f) {
  const Grid& g = f.grid();
  out << "# grid: " << to_string(g.kind()) << ',' << g.dim() << ',' << format_double(g.spacing()) << ','
      << format_double(g.extent()) << '\n';
  const auto x = g.coords();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const complex z(f[i]);
    out << format_double(x[i]) << ',' << format_double(z.real()) << ',' << format_double(z.imag()) << '\n';
  }
}

inline Field read_snapshot(std::istream& in, const std::string& source = "snapshot") {
  std::string line;
  if (!std::getline(in, line)) throw PreconditionError(source + ": empty file");
  const std::string prefix = "# grid: ";
  if (line.rfind(prefix, 0) != 0) throw PreconditionError(source + ":1: expected '# grid: kind,N,h,R' header");
  const auto head = split(std::string_view(line).substr(prefix.size()), ',');
  if (head.size() != 4) throw PreconditionError(source + ":1: header needs 4 fields");
  const GridKind kind = grid_kind_from_string(std::string(head[0]));
  const int dim = static_cast<int>(parse_double(head[1], source + ":1"));
  const double h = parse_double(head[2], source + ":1");
  const double extent = parse_double(head[3], source + ":1");
  GridPtr grid = Grid::make(kind, dim, h, extent);

  std::vector<complex> values;
  values.reserve(grid->size());
  std::size_t lineno = 1;
  const auto x = grid->coords();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto cols = split(line, ',');
    if (cols.size() != 3) throw PreconditionError(where + ": expected 3 columns");
    const double xi = parse_double(cols[0], where);
    if (values.size() >= x.size() || std::abs(xi - x[values.size()]) > 1e-9 * (1.0 + extent))
      throw PreconditionError(where + ": coordinate does not match the grid");
    values.emplace_back(parse_double(cols[1], where), parse_double(cols[2], where));
  }
  if (values.size() != grid->size())
    throw PreconditionError(source + ": expected " + std::to_string(grid->size()) + " rows, found " +
                            std::to_string(values.size()));
  return Field(std::move(grid), std::move(values));
}

template <FieldScalar T>
void save_snapshot(const std::string& path, const BasicField<T>& f) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_snapshot(out, f);
}

inline Field load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_snapshot(in, path);
}

}  // namespace qsl::io
